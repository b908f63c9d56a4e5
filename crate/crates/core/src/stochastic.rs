//! Birth-death master equation for the magnetization difference.
//!
//! Transitions `X -> X ± 1` occur at
//! `R(X -> X ± 1) = γ κ² (N/2) (1/2 ∓ 2X/N)²`, which vanish at `X = ±N/4`.
//! The chain is reversible with respect to the subspace dimensions `d_X`.

use ndarray::Array2;

use crate::basis::MagDiff;
use crate::error::{Error, Result};
use crate::lapack::{symmetric_eigen, EigenRange};

/// Parameters of the naive rate law.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NaiveParams {
    pub sites: usize,
    pub gamma: f64,
    pub kappa: f64,
}

impl NaiveParams {
    /// `γ`-free rate `κ² (N/2) (1/2 ∓ 2X/N)²`; `direction` is +1 or -1.
    pub fn unit_rate(sites: usize, kappa: f64, x: MagDiff, direction: i32) -> f64 {
        let n = sites as f64;
        let f = 0.5 - direction as f64 * 2.0 * x.value() / n;
        kappa * kappa * n / 2.0 * f * f
    }

    pub fn rate(&self, x: MagDiff, direction: i32) -> f64 {
        self.gamma * Self::unit_rate(self.sites, self.kappa, x, direction)
    }

    /// Mean relaxation rate `2γκ²`.
    pub fn mean_rate(&self) -> f64 {
        2.0 * self.gamma * self.kappa * self.kappa
    }

    /// Relaxation rate `4(1 - 1/N)γκ²` of the second moment.
    pub fn second_moment_rate(&self) -> f64 {
        4.0 * (1.0 - 1.0 / self.sites as f64) * self.gamma * self.kappa * self.kappa
    }

    /// Stationary second moment `N / (16 (1 - 1/N))`.
    pub fn stationary_second_moment(&self) -> f64 {
        let n = self.sites as f64;
        n / (16.0 * (1.0 - 1.0 / n))
    }
}

/// Up and down transition rates per magnetization difference.
#[derive(Clone, Debug, PartialEq)]
pub struct RateTable {
    pub labels: Vec<MagDiff>,
    /// `R(X -> X + 1)`.
    pub up: Vec<f64>,
    /// `R(X -> X - 1)`.
    pub down: Vec<f64>,
    pub params: Option<NaiveParams>,
}

/// `X = -N/4, ..., N/4` in unit steps.
pub fn lattice_labels(sites: usize) -> Vec<MagDiff> {
    let half = sites as i32 / 2;
    (-half..=half).step_by(2).map(MagDiff::from_twice).collect()
}

pub fn naive_rates(sites: usize, gamma: f64, kappa: f64) -> Result<RateTable> {
    if sites < 4 || sites % 2 != 0 {
        return Err(Error::InvalidConfig(format!(
            "the rate law needs an even site count of at least 4, got {sites}"
        )));
    }
    if !(gamma > 0.0) || !(kappa > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "γ and κ must be positive (γ = {gamma}, κ = {kappa})"
        )));
    }
    let params = NaiveParams { sites, gamma, kappa };
    let labels = lattice_labels(sites);
    let up = labels.iter().map(|&x| params.rate(x, 1)).collect();
    let down = labels.iter().map(|&x| params.rate(x, -1)).collect();
    Ok(RateTable {
        labels,
        up,
        down,
        params: Some(params),
    })
}

impl RateTable {
    pub fn from_rates(labels: Vec<MagDiff>, up: Vec<f64>, down: Vec<f64>) -> Result<Self> {
        if up.len() != labels.len() || down.len() != labels.len() {
            return Err(Error::InvalidConfig("rate arrays must match the label count".into()));
        }
        if up.iter().chain(&down).any(|r| !(*r >= 0.0)) {
            return Err(Error::InvalidConfig("rates must be non-negative".into()));
        }
        Ok(Self {
            labels,
            up,
            down,
            params: None,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn position(&self, x: MagDiff) -> Option<usize> {
        self.labels.iter().position(|&l| l == x)
    }
}

/// Dense generator `G` of `dP/dt = G P` (columns sum to zero).
#[derive(Clone, Debug)]
pub struct MasterGenerator {
    pub labels: Vec<MagDiff>,
    pub matrix: Array2<f64>,
}

pub fn master_generator(rates: &RateTable) -> MasterGenerator {
    let n = rates.len();
    let mut g = Array2::zeros((n, n));
    for j in 0..n {
        if j + 1 < n {
            g[[j + 1, j]] += rates.up[j];
            g[[j, j]] -= rates.up[j];
        }
        if j > 0 {
            g[[j - 1, j]] += rates.down[j];
            g[[j, j]] -= rates.down[j];
        }
    }
    MasterGenerator {
        labels: rates.labels.clone(),
        matrix: g,
    }
}

impl MasterGenerator {
    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    /// Stationary distribution from detailed balance along the chain.
    pub fn stationary(&self) -> Result<Vec<f64>> {
        let n = self.dim();
        let mut pi = vec![1.0; n];
        for j in 0..n.saturating_sub(1) {
            let up = self.matrix[[j + 1, j]];
            let down = self.matrix[[j, j + 1]];
            if !(up > 0.0 && down > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "rates between X = {} and X = {} vanish; the chain is reducible",
                    self.labels[j],
                    self.labels[j + 1]
                )));
            }
            pi[j + 1] = pi[j] * up / down;
        }
        let z: f64 = pi.iter().sum();
        Ok(pi.into_iter().map(|p| p / z).collect())
    }
}

/// Probability vectors over `X` on a time grid.
#[derive(Clone, Debug, PartialEq)]
pub struct DistributionSeries {
    pub labels: Vec<MagDiff>,
    pub times: Vec<f64>,
    /// `probs[k][i]` is `P_{labels[i]}(times[k])`.
    pub probs: Vec<Vec<f64>>,
}

impl DistributionSeries {
    pub fn mean(&self) -> Vec<f64> {
        self.probs.iter().map(|p| first_moment(&self.labels, p)).collect()
    }

    pub fn second_moment(&self) -> Vec<f64> {
        self.probs.iter().map(|p| raw_second_moment(&self.labels, p)).collect()
    }

    pub fn variance(&self) -> Vec<f64> {
        moments(self).1
    }
}

fn first_moment(labels: &[MagDiff], p: &[f64]) -> f64 {
    labels.iter().zip(p).map(|(x, q)| x.value() * q).sum()
}

fn raw_second_moment(labels: &[MagDiff], p: &[f64]) -> f64 {
    labels.iter().zip(p).map(|(x, q)| x.value() * x.value() * q).sum()
}

/// Mean `a(t)` and variance `σ²(t)` per time.
pub fn moments(series: &DistributionSeries) -> (Vec<f64>, Vec<f64>) {
    series
        .probs
        .iter()
        .map(|p| {
            let a = first_moment(&series.labels, p);
            let v = raw_second_moment(&series.labels, p) - a * a;
            (a, v.max(0.0))
        })
        .unzip()
}

/// Exact evolution through the spectral decomposition of the symmetrized generator.
pub fn evolve_master(generator: &MasterGenerator, p0: &[f64], times: &[f64]) -> Result<DistributionSeries> {
    let n = generator.dim();
    if p0.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: p0.len(),
        });
    }
    let total: f64 = p0.iter().sum();
    if p0.iter().any(|&p| p < 0.0) || (total - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidConfig("initial distribution must be a probability vector".into()));
    }
    let pi = generator.stationary()?;
    let root: Vec<f64> = pi.iter().map(|p| p.sqrt()).collect();
    let g = &generator.matrix;
    let sym = Array2::from_shape_fn((n, n), |(i, j)| g[[i, j]] * root[j] / root[i]);
    let sym = (&sym + &sym.t()) * 0.5;
    let (lambda, u) = symmetric_eigen(sym, EigenRange::All)?;
    // modal amplitudes of Π^{-1/2} p0
    let scaled: Vec<f64> = p0.iter().zip(&root).map(|(p, r)| p / r).collect();
    let modes: Vec<f64> = (0..n)
        .map(|k| (0..n).map(|i| u[[i, k]] * scaled[i]).sum())
        .collect();
    let probs = times
        .iter()
        .map(|&t| {
            let decay: Vec<f64> = (0..n).map(|k| modes[k] * (lambda[k] * t).exp()).collect();
            (0..n)
                .map(|i| root[i] * (0..n).map(|k| u[[i, k]] * decay[k]).sum::<f64>())
                .collect()
        })
        .collect();
    Ok(DistributionSeries {
        labels: generator.labels.clone(),
        times: times.to_vec(),
        probs,
    })
}

/// Point mass at `x` over the lattice `labels`.
pub fn point_mass(labels: &[MagDiff], x: MagDiff) -> Result<Vec<f64>> {
    let pos = labels
        .iter()
        .position(|&l| l == x)
        .ok_or_else(|| Error::InvalidConfig(format!("X = {x} is not on the lattice")))?;
    let mut p = vec![0.0; labels.len()];
    p[pos] = 1.0;
    Ok(p)
}

/// Continuum coefficients of the truncated Kramers-Moyal expansion in `z = X/N`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FpeCoefficients {
    pub gamma: f64,
    pub kappa: f64,
    pub sites: usize,
}

pub fn fpe_coefficients(gamma: f64, kappa: f64, sites: usize) -> Result<FpeCoefficients> {
    if !(gamma > 0.0) || !(kappa > 0.0) || sites == 0 {
        return Err(Error::InvalidConfig("FPE coefficients need positive γ, κ and N".into()));
    }
    Ok(FpeCoefficients { gamma, kappa, sites })
}

impl FpeCoefficients {
    fn strength(&self) -> f64 {
        self.gamma * self.kappa * self.kappa
    }

    /// Drift potential `U(z) = γκ² z²`.
    pub fn potential(&self, z: f64) -> f64 {
        self.strength() * z * z
    }

    /// `dU/dz`.
    pub fn potential_slope(&self, z: f64) -> f64 {
        2.0 * self.strength() * z
    }

    /// Diffusion `D(z) = γκ² (1/4 + 4z²) / N`.
    pub fn diffusion(&self, z: f64) -> f64 {
        self.strength() * (0.25 + 4.0 * z * z) / self.sites as f64
    }
}

/// Least-squares slope of `ln(values)` against time, returned as a decay rate.
pub fn log_linear_rate(times: &[f64], values: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(_, &v)| v > 0.0)
        .map(|(&t, &v)| (t, v.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    Some(-sxy / sxx)
}
