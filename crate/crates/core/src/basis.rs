//! Ladder geometry and the fixed-magnetization sector basis.
//!
//! Sites `0..L` form the left beam and `L..2L` the right beam; rung `i`
//! couples site `i` with site `L + i`. A set bit means spin up.

use std::fmt;

use crate::error::{Error, Result};

/// Operator normalization for the spin couplings.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SpinConvention {
    /// Spin-1/2 operators with eigenvalues ±1/2.
    #[default]
    Half,
    /// Pauli matrices (every bilinear coupling is four times larger).
    Pauli,
}

impl SpinConvention {
    /// Factor multiplying a two-site spin-1/2 coupling.
    pub fn bilinear_scale(self) -> f64 {
        match self {
            SpinConvention::Half => 1.0,
            SpinConvention::Pauli => 4.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SpinConvention::Half => "half",
            SpinConvention::Pauli => "pauli",
        }
    }
}

impl std::str::FromStr for SpinConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "half" => Ok(SpinConvention::Half),
            "pauli" => Ok(SpinConvention::Pauli),
            other => Err(Error::InvalidConfig(format!(
                "unknown spin convention '{other}' (expected 'half' or 'pauli')"
            ))),
        }
    }
}

/// Parameters of the two-beam XXZ ladder.
#[derive(Clone, Debug, PartialEq)]
pub struct LadderConfig {
    /// Number of rungs `L`; the ladder has `N = 2L` sites.
    pub rungs: usize,
    /// Coupling `J` along the beams.
    pub beam_coupling: f64,
    /// Rung coupling `κ`; multiplies the unit-strength rung operator once.
    pub rung_coupling: f64,
    /// Ising anisotropy `Δ`, shared by beams and rungs.
    pub anisotropy: f64,
    /// Twice the total `S_z` of the sector.
    pub twice_sz: i32,
    pub convention: SpinConvention,
}

impl Default for LadderConfig {
    fn default() -> Self {
        Self {
            rungs: 8,
            beam_coupling: 1.0,
            rung_coupling: 0.2,
            anisotropy: 0.6,
            twice_sz: 0,
            convention: SpinConvention::Half,
        }
    }
}

impl LadderConfig {
    pub fn with_rungs(rungs: usize) -> Self {
        Self {
            rungs,
            ..Self::default()
        }
    }

    pub fn with_kappa(mut self, kappa: f64) -> Self {
        self.rung_coupling = kappa;
        self
    }

    pub fn sites(&self) -> usize {
        2 * self.rungs
    }

    /// Number of up spins in the sector, `N/2 + S_z`.
    pub fn up_count(&self) -> Result<usize> {
        let n = self.sites() as i32;
        if (n + self.twice_sz) % 2 != 0 || self.twice_sz.abs() > n {
            return Err(Error::InvalidConfig(format!(
                "total Sz = {} is infeasible for N = {n}; valid values are -{}..={} in integer steps",
                self.twice_sz as f64 / 2.0,
                n / 2,
                n / 2
            )));
        }
        Ok(((n + self.twice_sz) / 2) as usize)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rungs < 2 {
            return Err(Error::InvalidConfig(format!(
                "rungs must be at least 2, got {}",
                self.rungs
            )));
        }
        if self.rungs > 16 {
            return Err(Error::InvalidConfig(format!(
                "rungs must be at most 16, got {}",
                self.rungs
            )));
        }
        if !(self.rung_coupling >= 0.0) || !self.rung_coupling.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "rung coupling must be finite and non-negative, got {}",
                self.rung_coupling
            )));
        }
        if !self.beam_coupling.is_finite() || !self.anisotropy.is_finite() {
            return Err(Error::InvalidConfig("couplings must be finite".into()));
        }
        self.up_count().map(|_| ())
    }
}

/// Beam magnetization difference `X`, stored as `2X` so that
/// half-integer values (odd `N/2 + S_z`) stay exact.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MagDiff(i32);

impl MagDiff {
    pub const fn from_twice(twice: i32) -> Self {
        MagDiff(twice)
    }

    pub const fn from_int(x: i32) -> Self {
        MagDiff(2 * x)
    }

    pub const fn twice(self) -> i32 {
        self.0
    }

    pub fn value(self) -> f64 {
        self.0 as f64 / 2.0
    }

    /// `X + delta` for an integer step `delta`.
    pub const fn shifted(self, delta: i32) -> Self {
        MagDiff(self.0 + 2 * delta)
    }
}

impl fmt::Display for MagDiff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 % 2 == 0 {
            write!(f, "{}", self.0 / 2)
        } else {
            write!(f, "{}", self.value())
        }
    }
}

/// Ascending list of bit patterns with a fixed number of up spins.
#[derive(Clone, Debug)]
pub struct SectorBasis {
    rungs: usize,
    up_count: usize,
    states: Vec<u32>,
}

impl SectorBasis {
    pub fn build(config: &LadderConfig) -> Result<Self> {
        config.validate()?;
        let up = config.up_count()?;
        Ok(Self {
            rungs: config.rungs,
            up_count: up,
            states: fixed_weight_patterns(config.sites(), up),
        })
    }

    pub fn rungs(&self) -> usize {
        self.rungs
    }

    pub fn sites(&self) -> usize {
        2 * self.rungs
    }

    pub fn up_count(&self) -> usize {
        self.up_count
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[u32] {
        &self.states
    }

    pub fn state(&self, index: usize) -> u32 {
        self.states[index]
    }

    /// Position of `pattern` in the basis, if it belongs to the sector.
    pub fn index_of(&self, pattern: u32) -> Option<usize> {
        self.states.binary_search(&pattern).ok()
    }

    pub fn left_mask(&self) -> u32 {
        (1u32 << self.rungs) - 1
    }

    pub fn left_bits(&self, pattern: u32) -> u32 {
        pattern & self.left_mask()
    }

    pub fn right_bits(&self, pattern: u32) -> u32 {
        pattern >> self.rungs
    }

    pub fn compose(&self, left: u32, right: u32) -> u32 {
        left | (right << self.rungs)
    }

    /// Up spins on the left beam.
    pub fn left_up(&self, pattern: u32) -> usize {
        self.left_bits(pattern).count_ones() as usize
    }

    /// Magnetization difference `(n_L - n_R)/2` of a basis pattern.
    pub fn mag_diff(&self, pattern: u32) -> MagDiff {
        let nl = self.left_up(pattern) as i32;
        let nr = self.right_bits(pattern).count_ones() as i32;
        MagDiff::from_twice(nl - nr)
    }

    /// All magnetization differences present in the sector, ascending.
    pub fn mag_diff_values(&self) -> Vec<MagDiff> {
        let total = self.up_count;
        let lo = total.saturating_sub(self.rungs);
        let hi = total.min(self.rungs);
        (lo..=hi)
            .map(|nl| MagDiff::from_twice(2 * nl as i32 - total as i32))
            .collect()
    }

    /// Pattern with the two beams exchanged.
    pub fn swap_pattern(&self, pattern: u32) -> u32 {
        self.compose(self.right_bits(pattern), self.left_bits(pattern))
    }

    /// Beam-swap permutation: `perm[i]` is the index of the swapped state.
    pub fn swap_permutation(&self) -> Vec<usize> {
        self.states
            .iter()
            .map(|&s| {
                self.index_of(self.swap_pattern(s))
                    .expect("beam swap preserves the sector")
            })
            .collect()
    }
}

/// Ascending `width`-bit patterns with exactly `weight` set bits.
pub fn fixed_weight_patterns(width: usize, weight: usize) -> Vec<u32> {
    if weight > width {
        return Vec::new();
    }
    if weight == 0 {
        return vec![0];
    }
    let limit: u64 = 1u64 << width;
    let mut out = Vec::with_capacity(binomial(width, weight) as usize);
    let mut v: u64 = (1u64 << weight) - 1;
    while v < limit {
        out.push(v as u32);
        // next pattern with the same popcount (Gosper's hack)
        let c = v & v.wrapping_neg();
        let r = v + c;
        v = (((r ^ v) >> 2) / c) | r;
    }
    out
}

pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc * (n - i) as u64 / (i + 1) as u64)
}
