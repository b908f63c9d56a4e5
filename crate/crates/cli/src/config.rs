//! Flat `key = value` run configuration.
//!
//! Grammar: one assignment per line, `#` starts a comment (anywhere on a
//! line), blank lines are ignored, keys are case-sensitive, and a key may
//! appear at most once. Every key is optional; [`RunConfig::default`] lists
//! the defaults and [`RunConfig::to_text`] writes the effective values back
//! in the same syntax.

use std::collections::HashMap;
use std::fmt;
use std::path::PathBuf;

use ladderfp_core::states::{InitialStateSpec, StateKind, WindowMode, WindowOrder};
use ladderfp_core::{LadderConfig, MagDiff, SpinConvention};

use crate::error::{CliError, CliResult};

/// Where the rate scale `γ` of the naive master equation comes from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GammaChoice {
    /// Fitted from the TCL2 rate plateaus.
    Fit,
    Value(f64),
}

/// Transitions pooled in the `γ` fit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GammaPairs {
    /// Every transition leaving `|X| <= gamma_max_x`.
    Leaving,
    /// Only transitions with both ends inside `|X| <= gamma_max_x`.
    Within,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TclRateMode {
    TimeDependent,
    Frozen,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub ladder: LadderConfig,
    pub t_max: f64,
    pub dt: f64,
    pub corr_t_max: f64,
    pub corr_dt: f64,
    pub plateau: (f64, f64),
    pub gamma: GammaChoice,
    pub gamma_pairs: GammaPairs,
    pub gamma_max_x: f64,
    pub tcl_mode: TclRateMode,
    pub initial_state: StateKind,
    pub initial_x: MagDiff,
    pub window_center: f64,
    pub window_width: f64,
    pub window_order: WindowOrder,
    pub window_mode: WindowMode,
    pub samples: usize,
    /// States per random class in `delta`.
    pub random_states: usize,
    pub seed: u64,
    pub dense_ceiling: usize,
    pub krylov_dt: f64,
    pub krylov_tol: f64,
    pub master_tol: f64,
    pub fine_size: usize,
    pub bin_width: f64,
    pub block_from: MagDiff,
    pub block_to: MagDiff,
    /// Rung coupling of the weak-coupling figures.
    pub weak_kappa: f64,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            ladder: LadderConfig::default(),
            t_max: 150.0,
            dt: 0.5,
            corr_t_max: 10.0,
            corr_dt: 0.02,
            plateau: (3.0, 10.0),
            gamma: GammaChoice::Fit,
            gamma_pairs: GammaPairs::Leaving,
            gamma_max_x: 2.0,
            tcl_mode: TclRateMode::TimeDependent,
            initial_state: StateKind::WindowMixed,
            initial_x: MagDiff::from_int(1),
            window_center: 0.0,
            window_width: 2.0,
            window_order: WindowOrder::Literal,
            window_mode: WindowMode::Auto,
            samples: 10,
            random_states: 5,
            seed: 1,
            dense_ceiling: 20_000,
            krylov_dt: 0.1,
            krylov_tol: 1e-9,
            master_tol: 1e-10,
            fine_size: 50,
            bin_width: 0.12,
            block_from: MagDiff::from_int(0),
            block_to: MagDiff::from_int(1),
            weak_kappa: 0.15,
            out: PathBuf::from("out"),
        }
    }
}

/// Every accepted key, in echo order.
pub const KEYS: &[&str] = &[
    "rungs",
    "beam_coupling",
    "kappa",
    "anisotropy",
    "sz",
    "convention",
    "t_max",
    "dt",
    "corr_t_max",
    "corr_dt",
    "plateau_start",
    "plateau_end",
    "gamma",
    "gamma_pairs",
    "gamma_max_x",
    "tcl_mode",
    "initial_state",
    "initial_x",
    "window_center",
    "window_width",
    "window_order",
    "window_mode",
    "samples",
    "random_states",
    "seed",
    "dense_ceiling",
    "krylov_dt",
    "krylov_tol",
    "master_tol",
    "fine_size",
    "bin_width",
    "block_from",
    "block_to",
    "weak_kappa",
    "out",
];

fn num(v: &str) -> Result<f64, String> {
    let x: f64 = v.parse().map_err(|_| format!("'{v}' is not a number"))?;
    if !x.is_finite() {
        return Err(format!("'{v}' is not finite"));
    }
    Ok(x)
}

fn in_range(v: &str, lo: f64, hi: f64, lo_open: bool) -> Result<f64, String> {
    let x = num(v)?;
    let ok = if lo_open { x > lo } else { x >= lo } && x <= hi;
    if !ok {
        let open = if lo_open { "(" } else { "[" };
        return Err(format!("{x} is outside {open}{lo}, {hi}]"));
    }
    Ok(x)
}

fn int(v: &str, lo: u64, hi: u64) -> Result<u64, String> {
    let x: u64 = v.parse().map_err(|_| format!("'{v}' is not a non-negative integer"))?;
    if x < lo || x > hi {
        return Err(format!("{x} is outside [{lo}, {hi}]"));
    }
    Ok(x)
}

/// `1`, `-0.5`, `3/2` style magnetization differences.
fn half_integer(v: &str) -> Result<i32, String> {
    let twice = if let Some((n, d)) = v.split_once('/') {
        let n: i32 = n.trim().parse().map_err(|_| format!("'{v}' is not a half-integer"))?;
        match d.trim() {
            "2" => n,
            "1" => 2 * n,
            _ => return Err(format!("'{v}' is not a half-integer")),
        }
    } else {
        let x = num(v)?;
        let t = 2.0 * x;
        if (t - t.round()).abs() > 1e-12 || t.abs() > 64.0 {
            return Err(format!("'{v}' is not a half-integer"));
        }
        t.round() as i32
    };
    Ok(twice)
}

fn fmt_half(twice: i32) -> String {
    if twice % 2 == 0 {
        format!("{}", twice / 2)
    } else {
        format!("{twice}/2")
    }
}

fn choice<T: Copy>(v: &str, options: &[(&str, T)]) -> Result<T, String> {
    options.iter().find(|(name, _)| *name == v).map(|(_, t)| *t).ok_or_else(|| {
        let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
        format!("'{v}' is not one of {}", names.join(", "))
    })
}

const KINDS: &[(&str, StateKind)] = &[
    ("window", StateKind::WindowMixed),
    ("product", StateKind::ProductRandom),
    ("entangled", StateKind::EntangledRandom),
];
const ORDERS: &[(&str, WindowOrder)] = &[("literal", WindowOrder::Literal), ("x_supported", WindowOrder::XSupported)];
const MODES: &[(&str, WindowMode)] = &[
    ("auto", WindowMode::Auto),
    ("exact", WindowMode::Exact),
    ("typicality", WindowMode::Typicality),
];
const PAIRS: &[(&str, GammaPairs)] = &[("leaving", GammaPairs::Leaving), ("within", GammaPairs::Within)];
const TCL_MODES: &[(&str, TclRateMode)] = &[
    ("time_dependent", TclRateMode::TimeDependent),
    ("frozen", TclRateMode::Frozen),
];

fn name_of<T: PartialEq>(options: &[(&'static str, T)], v: &T) -> &'static str {
    options.iter().find(|(_, t)| t == v).map(|(n, _)| *n).expect("every variant is named")
}

impl RunConfig {
    fn set(&mut self, key: &str, v: &str) -> Result<(), String> {
        match key {
            "rungs" => self.ladder.rungs = int(v, 2, 16)? as usize,
            "beam_coupling" => self.ladder.beam_coupling = in_range(v, 0.0, 100.0, true)?,
            "kappa" => self.ladder.rung_coupling = in_range(v, 0.0, 10.0, false)?,
            "anisotropy" => self.ladder.anisotropy = in_range(v, -10.0, 10.0, false)?,
            "sz" => self.ladder.twice_sz = half_integer(v)?,
            "convention" => self.ladder.convention = v.parse::<SpinConvention>().map_err(|e| e.to_string())?,
            "t_max" => self.t_max = in_range(v, 0.0, 1e5, true)?,
            "dt" => self.dt = in_range(v, 0.0, 1e3, true)?,
            "corr_t_max" => self.corr_t_max = in_range(v, 0.0, 1e3, true)?,
            "corr_dt" => self.corr_dt = in_range(v, 0.0, 0.05, true)?,
            "plateau_start" => self.plateau.0 = in_range(v, 0.0, 1e3, false)?,
            "plateau_end" => self.plateau.1 = in_range(v, 0.0, 1e3, true)?,
            "gamma" => {
                self.gamma = if v == "fit" {
                    GammaChoice::Fit
                } else {
                    GammaChoice::Value(in_range(v, 0.0, 1e3, true).map_err(|e| format!("{e} (or 'fit')"))?)
                }
            }
            "gamma_pairs" => self.gamma_pairs = choice(v, PAIRS)?,
            "gamma_max_x" => self.gamma_max_x = in_range(v, 0.0, 32.0, false)?,
            "tcl_mode" => self.tcl_mode = choice(v, TCL_MODES)?,
            "initial_state" => self.initial_state = choice(v, KINDS)?,
            "initial_x" => self.initial_x = MagDiff::from_twice(half_integer(v)?),
            "window_center" => self.window_center = in_range(v, -1e3, 1e3, false)?,
            "window_width" => self.window_width = in_range(v, 0.0, 1e3, true)?,
            "window_order" => self.window_order = choice(v, ORDERS)?,
            "window_mode" => self.window_mode = choice(v, MODES)?,
            "samples" => self.samples = int(v, 1, 10_000)? as usize,
            "random_states" => self.random_states = int(v, 1, 1000)? as usize,
            "seed" => self.seed = v.parse().map_err(|_| format!("'{v}' is not a u64"))?,
            "dense_ceiling" => self.dense_ceiling = int(v, 1, 1_000_000)? as usize,
            "krylov_dt" => self.krylov_dt = in_range(v, 0.0, 10.0, true)?,
            "krylov_tol" => self.krylov_tol = in_range(v, 0.0, 1e-3, true)?,
            "master_tol" => self.master_tol = in_range(v, 0.0, 1e-3, true)?,
            "fine_size" => self.fine_size = int(v, 1, 100_000)? as usize,
            "bin_width" => self.bin_width = in_range(v, 0.0, 100.0, true)?,
            "block_from" => self.block_from = MagDiff::from_twice(half_integer(v)?),
            "block_to" => self.block_to = MagDiff::from_twice(half_integer(v)?),
            "weak_kappa" => self.weak_kappa = in_range(v, 0.0, 10.0, false)?,
            "out" => {
                if v.is_empty() {
                    return Err("output directory must not be empty".into());
                }
                self.out = PathBuf::from(v)
            }
            _ => return Err(format!("unknown key '{key}'")),
        }
        Ok(())
    }

    /// Relations between fields; returns the offending keys with the message.
    fn cross_check(&self) -> Result<(), (Vec<&'static str>, String)> {
        if self.plateau.0 >= self.plateau.1 {
            return Err((vec!["plateau_start", "plateau_end"], "plateau_start must be below plateau_end".into()));
        }
        if self.plateau.1 > self.corr_t_max + 1e-12 {
            return Err((
                vec!["plateau_end", "corr_t_max"],
                format!("plateau window ends at {} beyond the correlation grid t_max {}", self.plateau.1, self.corr_t_max),
            ));
        }
        if self.dt > self.t_max {
            return Err((vec!["dt", "t_max"], "dt exceeds t_max".into()));
        }
        if self.corr_dt > self.corr_t_max {
            return Err((vec!["corr_dt", "corr_t_max"], "corr_dt exceeds corr_t_max".into()));
        }
        if (self.block_to.twice() - self.block_from.twice()).abs() != 2 {
            return Err((vec!["block_from", "block_to"], "block_from and block_to must differ by exactly 1".into()));
        }
        let n = self.ladder.sites() as i32;
        if (n + self.ladder.twice_sz) % 2 != 0 || self.ladder.twice_sz.abs() > n {
            return Err((vec!["sz", "rungs"], format!("sz = {} is infeasible for N = {n}", fmt_half(self.ladder.twice_sz))));
        }
        Ok(())
    }

    /// Initial-state description for the given class and `X`.
    pub fn initial_spec(&self, kind: StateKind, x: MagDiff) -> InitialStateSpec {
        InitialStateSpec {
            kind,
            x,
            window: (self.window_center, self.window_width),
            seed: self.seed,
            samples: self.samples,
            order: self.window_order,
            mode: self.window_mode,
        }
    }

    pub fn value_of(&self, key: &str) -> String {
        match key {
            "rungs" => self.ladder.rungs.to_string(),
            "beam_coupling" => self.ladder.beam_coupling.to_string(),
            "kappa" => self.ladder.rung_coupling.to_string(),
            "anisotropy" => self.ladder.anisotropy.to_string(),
            "sz" => fmt_half(self.ladder.twice_sz),
            "convention" => self.ladder.convention.name().to_string(),
            "t_max" => self.t_max.to_string(),
            "dt" => self.dt.to_string(),
            "corr_t_max" => self.corr_t_max.to_string(),
            "corr_dt" => self.corr_dt.to_string(),
            "plateau_start" => self.plateau.0.to_string(),
            "plateau_end" => self.plateau.1.to_string(),
            "gamma" => match self.gamma {
                GammaChoice::Fit => "fit".into(),
                GammaChoice::Value(g) => g.to_string(),
            },
            "gamma_pairs" => name_of(PAIRS, &self.gamma_pairs).into(),
            "gamma_max_x" => self.gamma_max_x.to_string(),
            "tcl_mode" => name_of(TCL_MODES, &self.tcl_mode).into(),
            "initial_state" => name_of(KINDS, &self.initial_state).into(),
            "initial_x" => fmt_half(self.initial_x.twice()),
            "window_center" => self.window_center.to_string(),
            "window_width" => self.window_width.to_string(),
            "window_order" => name_of(ORDERS, &self.window_order).into(),
            "window_mode" => name_of(MODES, &self.window_mode).into(),
            "samples" => self.samples.to_string(),
            "random_states" => self.random_states.to_string(),
            "seed" => self.seed.to_string(),
            "dense_ceiling" => self.dense_ceiling.to_string(),
            "krylov_dt" => self.krylov_dt.to_string(),
            "krylov_tol" => self.krylov_tol.to_string(),
            "master_tol" => self.master_tol.to_string(),
            "fine_size" => self.fine_size.to_string(),
            "bin_width" => self.bin_width.to_string(),
            "block_from" => fmt_half(self.block_from.twice()),
            "block_to" => fmt_half(self.block_to.twice()),
            "weak_kappa" => self.weak_kappa.to_string(),
            "out" => self.out.display().to_string(),
            _ => unreachable!("value_of called with unknown key {key}"),
        }
    }

    /// The effective configuration in parseable form, one key per line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for key in KEYS {
            s.push_str(key);
            s.push_str(" = ");
            s.push_str(&self.value_of(key));
            s.push('\n');
        }
        s
    }

    /// Applies a single `key = value` override from outside a file.
    pub fn override_key(&mut self, key: &str, value: &str) -> CliResult<()> {
        self.set(key, value).map_err(|m| CliError::validation(format!("{key}: {m}")))?;
        self.cross_check().map_err(|(_, m)| CliError::validation(m))
    }
}

/// A configuration error tied to a 1-based line (0 when no line applies).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            write!(f, "config: {}", self.message)
        } else {
            write!(f, "config line {}: {}", self.line, self.message)
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Validation(e.to_string())
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut cfg = RunConfig::default();
    let mut seen: HashMap<&'static str, usize> = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let err = |message: String| ConfigError { line, message };
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| err(format!("expected 'key = value', got '{content}'")))?;
        let (key, value) = (key.trim(), value.trim());
        let known = KEYS
            .iter()
            .find(|k| **k == key)
            .ok_or_else(|| err(format!("unknown key '{key}'")))?;
        if let Some(first) = seen.insert(known, line) {
            return Err(err(format!("key '{key}' already set on line {first}")));
        }
        cfg.set(key, value).map_err(|m| err(format!("{key}: {m}")))?;
    }
    cfg.cross_check().map_err(|(keys, message)| ConfigError {
        line: keys.iter().filter_map(|k| seen.get(k)).copied().max().unwrap_or(0),
        message,
    })?;
    Ok(cfg)
}
