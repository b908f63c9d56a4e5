use std::fs;
use std::path::Path;
use std::time::Instant;

use sha2::{Digest, Sha256};

use crate::error::CliResult;

pub fn sha256_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

/// Peak resident set size in kB, from `/proc/self/status` where available.
pub fn peak_rss_kb() -> Option<u64> {
    let status = fs::read_to_string("/proc/self/status").ok()?;
    status
        .lines()
        .find_map(|l| l.strip_prefix("VmHWM:"))
        .and_then(|v| v.trim().trim_end_matches("kB").trim().parse().ok())
}

/// Run record written next to the artifacts as `manifest.txt`.
#[derive(Debug)]
pub struct Manifest {
    started: Instant,
    entries: Vec<(String, String)>,
    artifacts: Vec<String>,
}

impl Manifest {
    pub fn start(command: &str, config_text: &str, seed: u64) -> Self {
        let mut m = Self {
            started: Instant::now(),
            entries: Vec::new(),
            artifacts: Vec::new(),
        };
        m.set("command", command);
        m.set("version", env!("CARGO_PKG_VERSION"));
        m.set("config_sha256", sha256_hex(config_text));
        m.set("seed", seed);
        m
    }

    /// Adds or replaces an entry.
    pub fn set(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(e) => e.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn add_artifact(&mut self, name: &str) {
        self.artifacts.push(name.to_string());
    }

    pub fn artifacts(&self) -> &[String] {
        &self.artifacts
    }

    pub fn finish(mut self, dir: &Path) -> CliResult<()> {
        self.set("wall_time_s", format!("{:.3}", self.started.elapsed().as_secs_f64()));
        self.set(
            "peak_rss_kb",
            peak_rss_kb().map_or_else(|| "unavailable".to_string(), |v| v.to_string()),
        );
        self.set("artifacts", self.artifacts.join(" "));
        let mut text = String::new();
        for (k, v) in &self.entries {
            text.push_str(&format!("{k} = {v}\n"));
        }
        fs::write(dir.join("manifest.txt"), text)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn entries_replace_in_place() {
        let mut m = Manifest::start("info", "", 7);
        m.set("gamma_used", 0.5);
        m.set("gamma_used", 0.7);
        assert_eq!(m.get("gamma_used"), Some("0.7"));
        assert_eq!(m.get("seed"), Some("7"));
    }
}
