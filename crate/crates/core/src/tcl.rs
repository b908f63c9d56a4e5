//! Second-order time-convolutionless rates for transitions between the
//! `X` subspaces.
//!
//! With `V` written in the product eigenbasis of `H0` (see
//! [`crate::spectral::dirac_rotate_v_block`]) the correlation function is
//! the positive cosine sum
//! `C_{Y,X}(t) = (2κ²/d_X) Σ_{n∈Y, m∈X} |V_nm|² cos((ε_n - ε_m) t)`,
//! and the TCL2 rate is its running integral.

use ndarray::Axis;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::basis::MagDiff;
use crate::error::{Error, Result};
use crate::grid::{cumulative_trapezoid, TimeGrid};
use crate::operator::SparseOperator;
use crate::spectral::{dirac_rotate_v_block, ChainFactorizedBasis, VBlock};
use crate::stochastic::{DistributionSeries, NaiveParams, RateTable};

/// Coarsest correlation-grid step accepted by [`tcl2_rates`].
pub const MAX_RATE_STEP: f64 = 0.05;

/// Rows of the transition block summed per parallel task.
const ROW_PANEL: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationFunction {
    pub from: MagDiff,
    pub to: MagDiff,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// `d_X`.
    pub subspace_dim: usize,
    /// Upper bound on `|C''(t)|`, i.e. `(2κ²/d_X) Σ |V_nm|² ω_nm²`.
    pub curvature_bound: f64,
}

impl CorrelationFunction {
    pub fn initial(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }
}

/// Cosine sums `Σ_j w_j cos(ω_j t_k)` of a transition block on a uniform grid,
/// evaluated by complex rotation and reduced in a fixed panel order.
fn cosine_sums(block: &VBlock, grid: TimeGrid) -> (Vec<f64>, f64) {
    let nt = grid.len;
    let panels: Vec<(Vec<f64>, f64)> = block
        .matrix
        .axis_chunks_iter(Axis(0), ROW_PANEL)
        .into_par_iter()
        .enumerate()
        .map(|(p, rows)| {
            let mut acc = vec![0.0; nt];
            let mut curvature = 0.0;
            for (r, row) in rows.axis_iter(Axis(0)).enumerate() {
                let e_row = block.row_energies[p * ROW_PANEL + r];
                for (&val, &e_col) in row.iter().zip(&block.col_energies) {
                    let w = val * val;
                    if w == 0.0 {
                        continue;
                    }
                    let omega = e_row - e_col;
                    curvature += w * omega * omega;
                    let step = Complex64::from_polar(1.0, omega * grid.step);
                    let mut z = Complex64::from_polar(w, omega * grid.start);
                    for a in acc.iter_mut() {
                        *a += z.re;
                        z *= step;
                    }
                }
            }
            (acc, curvature)
        })
        .collect();
    let mut total = vec![0.0; nt];
    let mut curvature = 0.0;
    for (acc, c) in panels {
        for (t, a) in total.iter_mut().zip(acc) {
            *t += a;
        }
        curvature += c;
    }
    (total, curvature)
}

/// `C_{Y,X}(t)` on `grid`; identically zero unless `|Y - X| = 1`.
pub fn correlation_function(
    cfb: &ChainFactorizedBasis,
    v: &SparseOperator,
    x: MagDiff,
    y: MagDiff,
    grid: TimeGrid,
) -> Result<CorrelationFunction> {
    let d_x = cfb.block(x).map(|b| b.dim()).ok_or_else(|| {
        Error::InvalidConfig(format!("X = {x} is not present in the sector"))
    })?;
    if (y.twice() - x.twice()).abs() != 2 || cfb.block(y).is_none() {
        return Ok(CorrelationFunction {
            from: x,
            to: y,
            times: grid.times(),
            values: vec![0.0; grid.len],
            subspace_dim: d_x,
            curvature_bound: 0.0,
        });
    }
    let block = dirac_rotate_v_block(cfb, v, x, y)?;
    Ok(correlation_from_block(&block, cfb.config().rung_coupling, grid))
}

/// Correlation function of an already rotated transition block.
pub fn correlation_from_block(block: &VBlock, kappa: f64, grid: TimeGrid) -> CorrelationFunction {
    let d_x = block.col_energies.len();
    let prefactor = 2.0 * kappa * kappa / d_x as f64;
    let (sums, curvature) = cosine_sums(block, grid);
    CorrelationFunction {
        from: block.from,
        to: block.to,
        times: grid.times(),
        values: sums.into_iter().map(|s| prefactor * s).collect(),
        subspace_dim: d_x,
        curvature_bound: prefactor * curvature,
    }
}

/// Time-resolved TCL2 rate `R_{Y,X}(t) = ∫_0^t C_{Y,X}`.
#[derive(Clone, Debug, PartialEq)]
pub struct TclRates {
    pub from: MagDiff,
    pub to: MagDiff,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Bound on the trapezoidal error at the last grid point.
    pub quadrature_error: f64,
}

/// Mean and spread of a rate over a time window.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Plateau {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl Plateau {
    fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(Self {
            mean,
            std: var.sqrt(),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }

    pub fn relative_std(&self) -> f64 {
        self.std / self.mean.abs()
    }
}

impl TclRates {
    /// Rate at time `t`, linearly interpolated; held constant past the grid.
    pub fn at(&self, t: f64) -> f64 {
        let n = self.times.len();
        if n == 0 {
            return 0.0;
        }
        if t <= self.times[0] {
            return self.values[0];
        }
        if t >= self.times[n - 1] {
            return self.values[n - 1];
        }
        let k = self.times.partition_point(|&s| s <= t) - 1;
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let f = (t - t0) / (t1 - t0);
        self.values[k] * (1.0 - f) + self.values[k + 1] * f
    }

    pub fn plateau(&self, window: (f64, f64)) -> Option<Plateau> {
        let vals: Vec<f64> = self
            .times
            .iter()
            .zip(&self.values)
            .filter(|(&t, _)| t >= window.0 - 1e-12 && t <= window.1 + 1e-12)
            .map(|(_, &r)| r)
            .collect();
        Plateau::of(&vals)
    }
}

pub fn tcl2_rates(corr: &CorrelationFunction) -> Result<TclRates> {
    let dt = corr
        .times
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(0.0, f64::max);
    if dt > MAX_RATE_STEP + 1e-12 {
        return Err(Error::GridTooCoarse {
            dt,
            required: MAX_RATE_STEP,
        });
    }
    let span = corr.times.last().copied().unwrap_or(0.0) - corr.times.first().copied().unwrap_or(0.0);
    Ok(TclRates {
        from: corr.from,
        to: corr.to,
        times: corr.times.clone(),
        values: cumulative_trapezoid(&corr.times, &corr.values),
        quadrature_error: span * dt * dt / 12.0 * corr.curvature_bound,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct InitialValueEntry {
    pub from: MagDiff,
    pub to: MagDiff,
    pub correlation_at_zero: f64,
    pub naive_rate: f64,
    /// `C(0) γ / R`, or `None` where the naive rate vanishes.
    pub ratio: Option<f64>,
}

/// Comparison of `C_{X±1,X}(0)` with the naive rates.
#[derive(Clone, Debug, PartialEq)]
pub struct InitialValueReport {
    pub entries: Vec<InitialValueEntry>,
    /// Common value of `C(0) γ / R` (mean over entries with a ratio).
    pub common: f64,
    /// Largest relative deviation of a ratio from `common`.
    pub spread: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Value of `C(0) γ / R` quoted with the original rate law.
pub const REFERENCE_INITIAL_RATIO: f64 = 0.25;

impl InitialValueReport {
    /// Factor separating the measured common ratio from [`REFERENCE_INITIAL_RATIO`].
    pub fn convention_factor(&self) -> f64 {
        self.common / REFERENCE_INITIAL_RATIO
    }

    pub fn explanation(&self) -> String {
        format!(
            "C(0)*gamma/R = {:.12} for every transition (spread {:.3e}); the reference value 1/4 \
             differs by a constant factor {:.6}. Both commutator cross terms of the trace contribute \
             sum|V_nm|^2, and with spin-1/2 operators a rung flip has amplitude 1/2, so C(0) = \
             2*kappa^2*(1/4)*<flippable rungs>/1 = R/(2*gamma); Pauli normalization multiplies C(0) by 16.",
            self.common,
            self.spread,
            self.convention_factor()
        )
    }
}

pub fn check_initial_value(corrs: &[CorrelationFunction], rates: &RateTable) -> Result<InitialValueReport> {
    let params = rates
        .params
        .ok_or_else(|| Error::InvalidConfig("initial-value check needs naive rate parameters".into()))?;
    let mut entries = Vec::new();
    for c in corrs {
        let direction = (c.to.twice() - c.from.twice()) / 2;
        if direction.abs() != 1 {
            continue;
        }
        let naive = params.rate(c.from, direction);
        let c0 = c.initial();
        let ratio = if naive > 0.0 { Some(c0 * params.gamma / naive) } else { None };
        entries.push(InitialValueEntry {
            from: c.from,
            to: c.to,
            correlation_at_zero: c0,
            naive_rate: naive,
            ratio,
        });
    }
    let ratios: Vec<f64> = entries.iter().filter_map(|e| e.ratio).collect();
    if ratios.is_empty() {
        return Err(Error::InvalidConfig("no transition with a non-zero naive rate".into()));
    }
    let common = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let spread = ratios
        .iter()
        .map(|r| ((r - common) / common).abs())
        .fold(0.0, f64::max);
    let tolerance = 1e-8;
    // where the naive rate vanishes the block must be empty too
    let zeros_agree = entries
        .iter()
        .filter(|e| e.ratio.is_none())
        .all(|e| e.correlation_at_zero.abs() < 1e-14);
    Ok(InitialValueReport {
        entries,
        common,
        spread,
        tolerance,
        pass: spread <= tolerance && zeros_agree,
    })
}

/// Plateau of one transition, relative to its `γ`-free naive rate.
#[derive(Clone, Debug, PartialEq)]
pub struct PairFit {
    pub from: MagDiff,
    pub to: MagDiff,
    pub unit_rate: f64,
    /// Plateau of `R_TCL2(t) / r_X` over the window.
    pub plateau: Plateau,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GammaFit {
    pub gamma: f64,
    pub window: (f64, f64),
    pub pairs: Vec<PairFit>,
    /// Largest relative deviation of a pair's plateau mean from `gamma`.
    pub dispersion_x: f64,
    /// Largest relative standard deviation over time within one pair.
    pub dispersion_t: f64,
    /// Relative standard deviation over all pairs and window times.
    pub dispersion: f64,
}

/// Largest relative spread over the window of any single transition
/// before the plateau is rejected.
pub const MAX_PLATEAU_DISPERSION: f64 = 0.2;

/// `γ̂` as the mean of `R_TCL2(t) / r_X` over the given transitions and window times.
pub fn fit_gamma(rates: &[TclRates], sites: usize, kappa: f64, window: (f64, f64)) -> Result<GammaFit> {
    if rates.is_empty() {
        return Err(Error::NoPlateau("no transitions supplied".into()));
    }
    let mut pairs = Vec::new();
    let mut pooled = Vec::new();
    for r in rates {
        let direction = (r.to.twice() - r.from.twice()) / 2;
        let unit = NaiveParams::unit_rate(sites, kappa, r.from, direction);
        if direction.abs() != 1 || !(unit > 0.0) {
            return Err(Error::NoPlateau(format!(
                "transition {} -> {} has no naive counterpart",
                r.from, r.to
            )));
        }
        let scaled: Vec<f64> = r
            .times
            .iter()
            .zip(&r.values)
            .filter(|(&t, _)| t >= window.0 - 1e-12 && t <= window.1 + 1e-12)
            .map(|(_, &v)| v / unit)
            .collect();
        let plateau = Plateau::of(&scaled).ok_or_else(|| {
            Error::NoPlateau(format!(
                "window [{}, {}] contains no samples of {} -> {}",
                window.0, window.1, r.from, r.to
            ))
        })?;
        pooled.extend(scaled);
        pairs.push(PairFit {
            from: r.from,
            to: r.to,
            unit_rate: unit,
            plateau,
        });
    }
    let all = Plateau::of(&pooled).expect("non-empty");
    let gamma = all.mean;
    let dispersion_x = pairs
        .iter()
        .map(|p| ((p.plateau.mean - gamma) / gamma).abs())
        .fold(0.0, f64::max);
    let dispersion_t = pairs.iter().map(|p| p.plateau.relative_std()).fold(0.0, f64::max);
    let fit = GammaFit {
        gamma,
        window,
        pairs,
        dispersion_x,
        dispersion_t,
        dispersion: all.relative_std(),
    };
    if !(gamma > 0.0) || fit.dispersion_t > MAX_PLATEAU_DISPERSION {
        let detail: Vec<String> = fit
            .pairs
            .iter()
            .map(|p| format!("{}->{}: {:.4}±{:.4}", p.from, p.to, p.plateau.mean, p.plateau.std))
            .collect();
        return Err(Error::NoPlateau(format!(
            "relative dispersion over the window {:.3} exceeds {MAX_PLATEAU_DISPERSION} ({})",
            fit.dispersion_t,
            detail.join(", ")
        )));
    }
    Ok(fit)
}

/// Transitions `X -> X ± 1` with `|X| <= max_abs_x` present on `labels`.
pub fn transitions_within(labels: &[MagDiff], max_abs_x: f64) -> Vec<(MagDiff, MagDiff)> {
    let mut out = Vec::new();
    for &x in labels {
        if x.value().abs() > max_abs_x + 1e-12 {
            continue;
        }
        for dir in [1, -1] {
            let y = x.shifted(dir);
            if labels.contains(&y) {
                out.push((x, y));
            }
        }
    }
    out
}

/// TCL2 rates for every neighbouring pair of a lattice of `X` values.
#[derive(Clone, Debug)]
pub struct TclRateSet {
    pub labels: Vec<MagDiff>,
    /// `up[i]`: `X_i -> X_{i+1}` (absent for the last label).
    pub up: Vec<Option<TclRates>>,
    /// `down[i]`: `X_i -> X_{i-1}` (absent for the first label).
    pub down: Vec<Option<TclRates>>,
}

impl TclRateSet {
    /// Rates for all neighbouring pairs. Only one block per unordered pair
    /// `{X, X+1}` with `X + (X+1) >= 0` is rotated: the reverse transition
    /// shares the frequency sum (weighted by `1/d_Y` instead of `1/d_X`), and
    /// the beam swap maps `{X, X+1}` onto `{-X-1, -X}`.
    pub fn compute(cfb: &ChainFactorizedBasis, v: &SparseOperator, grid: TimeGrid) -> Result<(Self, Vec<CorrelationFunction>)> {
        let labels: Vec<MagDiff> = cfb.blocks().iter().map(|b| b.x).collect();
        let kappa = cfb.config().rung_coupling;
        let n = labels.len();
        let mut sums: Vec<Option<(Vec<f64>, f64)>> = vec![None; n.saturating_sub(1)];
        for i in 0..n.saturating_sub(1) {
            if labels[i].twice() + labels[i + 1].twice() >= 0 {
                let block = dirac_rotate_v_block(cfb, v, labels[i], labels[i + 1])?;
                sums[i] = Some(cosine_sums(&block, grid));
            }
        }
        // mirror: pair i = {X_i, X_{i+1}} <-> pair n-2-i
        let sums: Vec<(Vec<f64>, f64)> = (0..sums.len())
            .map(|i| sums[i].clone().or_else(|| sums[sums.len() - 1 - i].clone()).expect("mirror pair computed"))
            .collect();
        let dims: Vec<usize> = cfb.blocks().iter().map(|b| b.dim()).collect();
        let mut up = vec![None; n];
        let mut down = vec![None; n];
        let mut corrs = Vec::new();
        for (i, (s, curvature)) in sums.iter().enumerate() {
            for (from, to) in [(i, i + 1), (i + 1, i)] {
                let pre = 2.0 * kappa * kappa / dims[from] as f64;
                let c = CorrelationFunction {
                    from: labels[from],
                    to: labels[to],
                    times: grid.times(),
                    values: s.iter().map(|x| pre * x).collect(),
                    subspace_dim: dims[from],
                    curvature_bound: pre * curvature,
                };
                let r = tcl2_rates(&c)?;
                if to > from {
                    up[from] = Some(r);
                } else {
                    down[from] = Some(r);
                }
                corrs.push(c);
            }
        }
        Ok((Self { labels, up, down }, corrs))
    }

    pub fn get(&self, from: MagDiff, to: MagDiff) -> Option<&TclRates> {
        let i = self.labels.iter().position(|&l| l == from)?;
        match to.twice() - from.twice() {
            2 => self.up[i].as_ref(),
            -2 => self.down[i].as_ref(),
            _ => None,
        }
    }

    fn rates_at(&self, t: f64) -> (Vec<f64>, Vec<f64>) {
        let f = |r: &Option<TclRates>| r.as_ref().map_or(0.0, |r| r.at(t));
        (self.up.iter().map(f).collect(), self.down.iter().map(f).collect())
    }

    /// Rates frozen at their plateau means.
    pub fn frozen(&self, window: (f64, f64)) -> Result<RateTable> {
        let f = |r: &Option<TclRates>| -> Result<f64> {
            match r {
                None => Ok(0.0),
                Some(r) => r.plateau(window).map(|p| p.mean.max(0.0)).ok_or_else(|| {
                    Error::NoPlateau(format!("window [{}, {}] is empty", window.0, window.1))
                }),
            }
        };
        let up = self.up.iter().map(f).collect::<Result<Vec<_>>>()?;
        let down = self.down.iter().map(f).collect::<Result<Vec<_>>>()?;
        RateTable::from_rates(self.labels.clone(), up, down)
    }
}

/// How the TCL master equation uses its rates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TclMode {
    /// `R(t)` as computed, held at its last value past the correlation grid.
    TimeDependent,
    /// Plateau means over the window.
    Frozen { window: (f64, f64) },
}

fn master_rhs(up: &[f64], down: &[f64], p: &[f64]) -> Vec<f64> {
    let n = p.len();
    let mut out = vec![0.0; n];
    for i in 0..n {
        let outflow = up[i] * p[i] + down[i] * p[i];
        out[i] -= outflow;
        if i + 1 < n {
            out[i + 1] += up[i] * p[i];
        }
        if i > 0 {
            out[i - 1] += down[i] * p[i];
        }
    }
    out
}

fn rk4_step(rates: &dyn Fn(f64) -> (Vec<f64>, Vec<f64>), t: f64, h: f64, p: &[f64]) -> Vec<f64> {
    let axpy = |a: &[f64], s: f64, b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x + s * y).collect() };
    let (u0, d0) = rates(t);
    let (um, dm) = rates(t + 0.5 * h);
    let (u1, d1) = rates(t + h);
    let k1 = master_rhs(&u0, &d0, p);
    let k2 = master_rhs(&um, &dm, &axpy(p, 0.5 * h, &k1));
    let k3 = master_rhs(&um, &dm, &axpy(p, 0.5 * h, &k2));
    let k4 = master_rhs(&u1, &d1, &axpy(p, h, &k3));
    p.iter()
        .enumerate()
        .map(|(i, x)| x + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

/// Integrates the TCL master equation with step-doubling RK4.
pub fn evolve_tcl_master(
    rates: &TclRateSet,
    p0: &[f64],
    times: &[f64],
    mode: TclMode,
    tol: f64,
) -> Result<DistributionSeries> {
    let n = rates.labels.len();
    if p0.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: p0.len(),
        });
    }
    let frozen = match mode {
        TclMode::Frozen { window } => Some(rates.frozen(window)?),
        TclMode::TimeDependent => None,
    };
    let rate_fn = |t: f64| -> (Vec<f64>, Vec<f64>) {
        match &frozen {
            Some(table) => (table.up.clone(), table.down.clone()),
            None => rates.rates_at(t),
        }
    };
    let base_step = rates
        .up
        .iter()
        .flatten()
        .next()
        .and_then(|r| r.times.get(1).map(|t1| t1 - r.times[0]))
        .unwrap_or(0.02)
        .min(0.05);
    let mut p = p0.to_vec();
    let mut t = times.first().copied().unwrap_or(0.0);
    let mut probs = Vec::with_capacity(times.len());
    let mut h = base_step;
    for &target in times {
        while target - t > 1e-12 {
            let step = h.min(target - t);
            let full = rk4_step(&rate_fn, t, step, &p);
            let half = rk4_step(&rate_fn, t, 0.5 * step, &p);
            let two_halves = rk4_step(&rate_fn, t + 0.5 * step, 0.5 * step, &half);
            let err = full
                .iter()
                .zip(&two_halves)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if err > tol {
                h = 0.5 * step;
                if h < 1e-8 {
                    return Err(Error::NotConverged {
                        time: t,
                        residual: err,
                        tol,
                    });
                }
                continue;
            }
            p = two_halves;
            t += step;
            if err < tol / 64.0 {
                h = (2.0 * h).min(base_step);
            }
        }
        probs.push(p.clone());
    }
    Ok(DistributionSeries {
        labels: rates.labels.clone(),
        times: times.to_vec(),
        probs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{LadderConfig, SectorBasis};
    use crate::operator::{build_v, build_v_flip, XProjectors};
    use crate::spectral::chain_factorize_h0;
    use crate::stochastic::{evolve_master, master_generator, naive_rates, point_mass};

    fn setup(l: usize) -> (LadderConfig, ChainFactorizedBasis, SparseOperator) {
        let cfg = LadderConfig::with_rungs(l);
        let b = SectorBasis::build(&cfg).unwrap();
        let v = build_v_flip(&b, &cfg);
        (cfg.clone(), chain_factorize_h0(&cfg).unwrap(), v)
    }

    #[test]
    fn selection_rule() {
        let (_, cfb, v) = setup(4);
        let g = TimeGrid::up_to(1.0, 0.05).unwrap();
        let c = correlation_function(&cfb, &v, MagDiff::from_int(0), MagDiff::from_int(2), g).unwrap();
        assert!(c.values.iter().all(|&x| x == 0.0));
        let c = correlation_function(&cfb, &v, MagDiff::from_int(0), MagDiff::from_int(0), g).unwrap();
        assert!(c.values.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn diagonal_rung_part_does_not_contribute() {
        let (cfg, cfb, v) = setup(4);
        let b = SectorBasis::build(&cfg).unwrap();
        let full = build_v(&b, &cfg);
        let g = TimeGrid::up_to(2.0, 0.05).unwrap();
        let (x, y) = (MagDiff::from_int(0), MagDiff::from_int(1));
        let a = correlation_function(&cfb, &v, x, y, g).unwrap();
        let c = correlation_function(&cfb, &full, x, y, g).unwrap();
        for (p, q) in a.values.iter().zip(&c.values) {
            assert!((p - q).abs() < 1e-14);
        }
    }

    #[test]
    fn bounded_by_initial_value_and_basis_invariant() {
        let (cfg, cfb, v) = setup(5);
        let b = SectorBasis::build(&cfg).unwrap();
        let proj = XProjectors::build(&b);
        let g = TimeGrid::up_to(20.0, 0.05).unwrap();
        for (x2, y2) in [(1, 3), (-1, 1), (3, 5), (1, -1)] {
            let (x, y) = (MagDiff::from_twice(x2), MagDiff::from_twice(y2));
            let c = correlation_function(&cfb, &v, x, y, g).unwrap();
            let c0 = c.initial();
            assert!(c0 > 0.0);
            assert!(c.values.iter().all(|&val| val.abs() <= c0 * (1.0 + 1e-12)));
            // (2κ²/d_X) ||P_Y V P_X||_F² in the computational basis
            let to = proj.position(y).unwrap();
            let from = proj.get(x).unwrap();
            let mut f = 0.0;
            for &col in &from.indices {
                for (r, val) in v.row(col) {
                    if proj.block_of(r) == to {
                        f += val * val;
                    }
                }
            }
            let expected = 2.0 * cfg.rung_coupling.powi(2) / from.dim() as f64 * f;
            assert!((c0 - expected).abs() < 1e-10 * expected);
        }
    }

    #[test]
    fn rotation_matches_direct_cosine_sum() {
        let (cfg, cfb, v) = setup(3);
        let (x, y) = (MagDiff::from_twice(1), MagDiff::from_twice(3));
        let block = dirac_rotate_v_block(&cfb, &v, x, y).unwrap();
        let g = TimeGrid::up_to(150.0, 0.05).unwrap();
        let c = correlation_from_block(&block, cfg.rung_coupling, g);
        let d_x = block.col_energies.len() as f64;
        for k in (0..g.len).step_by(97) {
            let t = g.time(k);
            let mut direct = 0.0;
            for ((n, m), val) in block.matrix.indexed_iter() {
                direct += val * val * ((block.row_energies[n] - block.col_energies[m]) * t).cos();
            }
            direct *= 2.0 * cfg.rung_coupling.powi(2) / d_x;
            assert!((c.values[k] - direct).abs() < 1e-12, "t={t}");
        }
    }

    #[test]
    fn rates_start_at_zero_and_grow_linearly() {
        let (_, cfb, v) = setup(4);
        let g = TimeGrid::up_to(1.0, 0.01).unwrap();
        let c = correlation_function(&cfb, &v, MagDiff::from_int(0), MagDiff::from_int(1), g).unwrap();
        let r = tcl2_rates(&c).unwrap();
        assert_eq!(r.values[0], 0.0);
        for k in 1..=10 {
            let t = r.times[k];
            assert!((r.values[k] / (c.initial() * t) - 1.0).abs() < 0.02);
        }
        assert!(r.quadrature_error >= 0.0);
        let coarse = correlation_function(&cfb, &v, MagDiff::from_int(0), MagDiff::from_int(1), TimeGrid::up_to(1.0, 0.1).unwrap()).unwrap();
        assert!(matches!(tcl2_rates(&coarse), Err(Error::GridTooCoarse { .. })));
    }

    #[test]
    fn initial_ratio_is_x_independent() {
        let (cfg, cfb, v) = setup(4);
        let g = TimeGrid::up_to(0.1, 0.05).unwrap();
        let labels: Vec<MagDiff> = cfb.blocks().iter().map(|b| b.x).collect();
        let corrs: Vec<CorrelationFunction> = transitions_within(&labels, 2.0)
            .into_iter()
            .map(|(x, y)| correlation_function(&cfb, &v, x, y, g).unwrap())
            .collect();
        let report = check_initial_value(&corrs, &naive_rates(8, 0.7, cfg.rung_coupling).unwrap()).unwrap();
        assert!(report.pass, "{report:?}");
        assert!(report.spread < 1e-12);
        assert!((report.common - 0.5).abs() < 1e-12);
        assert!((report.convention_factor() - 2.0).abs() < 1e-12);
        // the extremes have no outward neighbour on the lattice
        assert!(report.entries.iter().all(|e| e.ratio.is_some()));
        assert!(!report.entries.iter().any(|e| e.from == MagDiff::from_int(2) && e.to == MagDiff::from_int(3)));
        // κ cancels
        let cfg2 = cfg.clone().with_kappa(0.05);
        let cfb2 = chain_factorize_h0(&cfg2).unwrap();
        let corrs2: Vec<CorrelationFunction> = transitions_within(&labels, 2.0)
            .into_iter()
            .map(|(x, y)| correlation_function(&cfb2, &v, x, y, g).unwrap())
            .collect();
        let report2 = check_initial_value(&corrs2, &naive_rates(8, 0.7, 0.05).unwrap()).unwrap();
        assert!((report2.common - report.common).abs() < 1e-12);
    }

    #[test]
    fn planted_gamma_is_recovered() {
        let sites = 16;
        let kappa = 0.2;
        let gamma = 0.61;
        let tau = 1.3;
        let times: Vec<f64> = (0..=500).map(|k| k as f64 * 0.02).collect();
        let mut rates = Vec::new();
        for x in -2..=2 {
            for dir in [1, -1] {
                let from = MagDiff::from_int(x);
                let unit = NaiveParams::unit_rate(sites, kappa, from, dir);
                // C(t) = (γ r_X / τ) e^{-t/τ}, integrated in closed form
                let values = times.iter().map(|&t| gamma * unit * (1.0 - (-t / tau).exp())).collect();
                rates.push(TclRates {
                    from,
                    to: from.shifted(dir),
                    times: times.clone(),
                    values,
                    quadrature_error: 0.0,
                });
            }
        }
        let fit = fit_gamma(&rates, sites, kappa, (9.0, 10.0)).unwrap();
        assert!((fit.gamma - gamma * (1.0 - (-9.5f64 / tau).exp())).abs() < 1e-3);
        let fit = fit_gamma(&rates, sites, kappa, (10.0, 10.0)).unwrap();
        assert!((fit.gamma - gamma * (1.0 - (-10.0f64 / tau).exp())).abs() < 1e-12);
        assert!(fit.dispersion_x < 1e-12);
        // mirror pairs give identical plateaus
        let fwd = &fit.pairs[0];
        let mirror = fit.pairs.iter().find(|p| p.from == MagDiff::from_int(2) && p.to == MagDiff::from_int(1)).unwrap();
        assert!((fwd.plateau.mean - mirror.plateau.mean).abs() < 1e-12);
    }

    #[test]
    fn irregular_rates_are_refused() {
        let times: Vec<f64> = (0..=100).map(|k| k as f64 * 0.1).collect();
        let from = MagDiff::from_int(0);
        let values = times.iter().map(|t| 0.05 * (1.0 + (3.0 * t).sin())).collect();
        let r = TclRates { from, to: from.shifted(1), times, values, quadrature_error: 0.0 };
        assert!(matches!(fit_gamma(&[r], 16, 0.2, (3.0, 10.0)), Err(Error::NoPlateau(_))));
    }

    #[test]
    fn frozen_tcl_matches_constant_master_equation() {
        let (cfg, cfb, v) = setup(4);
        let g = TimeGrid::up_to(10.0, 0.02).unwrap();
        let (set, _) = TclRateSet::compute(&cfb, &v, g).unwrap();
        let window = (3.0, 10.0);
        let table = set.frozen(window).unwrap();
        let gen = master_generator(&table);
        let p0 = point_mass(&set.labels, MagDiff::from_int(1)).unwrap();
        let times: Vec<f64> = (0..=60).map(|k| k as f64 * 0.5).collect();
        let exact = evolve_master(&gen, &p0, &times).unwrap();
        let tcl = evolve_tcl_master(&set, &p0, &times, TclMode::Frozen { window }, 1e-12).unwrap();
        for (a, b) in exact.probs.iter().zip(&tcl.probs) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-8);
            }
        }
        let td = evolve_tcl_master(&set, &p0, &times, TclMode::TimeDependent, 1e-11).unwrap();
        for p in &td.probs {
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
        let _ = cfg;
    }

    #[test]
    fn dense_commutator_trace_oracle() {
        use crate::lapack::{symmetric_eigen, EigenRange};
        use crate::operator::build_h0;
        type C = Complex64;
        let cfg = LadderConfig::with_rungs(2);
        let b = SectorBasis::build(&cfg).unwrap();
        let h0 = build_h0(&b, &cfg).to_dense();
        let vd = build_v(&b, &cfg).to_dense();
        let proj = XProjectors::build(&b);
        let cfb = chain_factorize_h0(&cfg).unwrap();
        let v = build_v_flip(&b, &cfg);
        let (e, u) = symmetric_eigen(h0, EigenRange::All).unwrap();
        let d = b.dim();
        let kappa = cfg.rung_coupling;
        let mul = |a: &Vec<Vec<C>>, b: &Vec<Vec<C>>| -> Vec<Vec<C>> {
            (0..d).map(|i| (0..d).map(|j| (0..d).map(|k| a[i][k] * b[k][j]).sum()).collect()).collect()
        };
        let sub = |a: &Vec<Vec<C>>, b: &Vec<Vec<C>>| -> Vec<Vec<C>> {
            (0..d).map(|i| (0..d).map(|j| a[i][j] - b[i][j]).collect()).collect()
        };
        let proj_mat = |x: MagDiff| -> Vec<Vec<C>> {
            let idx = &proj.get(x).unwrap().indices;
            (0..d).map(|i| (0..d).map(|j| if i == j && idx.contains(&i) { C::new(1.0, 0.0) } else { C::new(0.0, 0.0) }).collect()).collect()
        };
        let v0: Vec<Vec<C>> = (0..d).map(|i| (0..d).map(|j| C::new(vd[[i, j]], 0.0)).collect()).collect();
        let g = TimeGrid::up_to(30.0, 0.05).unwrap();
        for (x2, y2) in [(0, 2), (2, 0), (0, -2), (-2, 0), (2, -2)] {
            let (x, y) = (MagDiff::from_twice(x2), MagDiff::from_twice(y2));
            let c = correlation_function(&cfb, &v, x, y, g).unwrap();
            let (px, py) = (proj_mat(x), proj_mat(y));
            let d_x = proj.get(x).unwrap().dim() as f64;
            let right = sub(&mul(&v0, &px), &mul(&px, &v0));
            for k in (0..g.len).step_by(37) {
                let t = g.time(k);
                // V(t) = U e^{iEt} U^T V U e^{-iEt} U^T
                let ut: Vec<Vec<C>> = (0..d).map(|i| (0..d).map(|n| u[[i, n]] * C::from_polar(1.0, e[n] * t)).collect()).collect();
                let ut_dag: Vec<Vec<C>> = (0..d).map(|n| (0..d).map(|j| u[[j, n]] * C::from_polar(1.0, -e[n] * t)).collect()).collect();
                let uc: Vec<Vec<C>> = (0..d).map(|i| (0..d).map(|n| C::new(u[[i, n]], 0.0)).collect()).collect();
                let uct: Vec<Vec<C>> = (0..d).map(|n| (0..d).map(|j| C::new(u[[j, n]], 0.0)).collect()).collect();
                let vt = mul(&mul(&mul(&ut, &uct), &v0), &mul(&uc, &ut_dag));
                let left = sub(&mul(&vt, &py), &mul(&py, &vt));
                let prod = mul(&left, &right);
                let tr: C = (0..d).map(|i| prod[i][i]).sum();
                let oracle = kappa * kappa / d_x * tr;
                assert!(oracle.im.abs() < 1e-12);
                assert!((c.values[k] - oracle.re).abs() < 1e-10, "{x}->{y} t={t}: {} vs {}", c.values[k], oracle.re);
            }
        }
    }

    #[test]
    fn symmetry_reduced_rate_set_matches_direct_pairs() {
        let (_, cfb, v) = setup(5);
        let g = TimeGrid::up_to(3.0, 0.05).unwrap();
        let (set, corrs) = TclRateSet::compute(&cfb, &v, g).unwrap();
        assert_eq!(corrs.len(), 2 * (set.labels.len() - 1));
        for c in &corrs {
            let direct = correlation_function(&cfb, &v, c.from, c.to, g).unwrap();
            for (a, b) in c.values.iter().zip(&direct.values) {
                assert!((a - b).abs() < 1e-13 * direct.initial().max(1.0));
            }
            let r = set.get(c.from, c.to).unwrap();
            assert_eq!(r.values, tcl2_rates(c).unwrap().values);
        }
    }

    #[test]
    fn naive_rate_mirror_gives_same_fit() {
        let labels: Vec<MagDiff> = (-4..=4).map(MagDiff::from_int).collect();
        let pairs = transitions_within(&labels, 2.0);
        assert_eq!(pairs.len(), 10);
        assert!(pairs.contains(&(MagDiff::from_int(2), MagDiff::from_int(3))));
    }
}
