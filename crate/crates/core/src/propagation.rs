//! Unitary time evolution under the full Hamiltonian and the observable
//! series `P_X(t)`, `a(t)`, `σ²(t)`.

use ndarray::{Array1, Array2, Axis};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::basis::MagDiff;
use crate::error::{Error, Result};
use crate::lapack::{symmetric_eigen, EigenRange};
use crate::operator::{SparseOperator, XProjectors};
use crate::spectral::SpectralDecomposition;
use crate::stochastic::DistributionSeries;

/// Normalized complex amplitudes over a sector basis.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    amps: Vec<Complex64>,
}

impl StateVector {
    /// Normalizes `amps`; refuses the zero vector.
    pub fn new(amps: Vec<Complex64>) -> Result<Self> {
        let n = norm(&amps);
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::EmptyState("state has zero or non-finite norm".into()));
        }
        Ok(Self {
            amps: amps.into_iter().map(|a| a / n).collect(),
        })
    }

    pub fn from_real(amps: &[f64]) -> Result<Self> {
        Self::new(amps.iter().map(|&a| Complex64::new(a, 0.0)).collect())
    }

    /// Wraps amplitudes without renormalizing.
    pub(crate) fn from_raw(amps: Vec<Complex64>) -> Self {
        Self { amps }
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amps
    }

    pub fn norm(&self) -> f64 {
        norm(&self.amps)
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &StateVector) -> Complex64 {
        dot(&self.amps, &other.amps)
    }

    pub fn distance(&self, other: &StateVector) -> f64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }
}

/// Weighted pure states representing a density operator.
#[derive(Clone, Debug)]
pub struct MixedEnsemble {
    members: Vec<(f64, StateVector)>,
}

impl MixedEnsemble {
    /// Weights must be positive; they are rescaled to sum to one.
    pub fn new(members: Vec<(f64, StateVector)>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::EmptyState("ensemble has no members".into()));
        }
        let dim = members[0].1.dim();
        let mut total = 0.0;
        for (w, s) in &members {
            if !(*w > 0.0) || !w.is_finite() {
                return Err(Error::InvalidConfig(format!("ensemble weight {w} is not positive")));
            }
            if s.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: s.dim(),
                });
            }
            total += w;
        }
        Ok(Self {
            members: members.into_iter().map(|(w, s)| (w / total, s)).collect(),
        })
    }

    pub fn pure(state: StateVector) -> Self {
        Self {
            members: vec![(1.0, state)],
        }
    }

    pub fn members(&self) -> &[(f64, StateVector)] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.members[0].1.dim()
    }

    pub fn expectation(&self, op: &SparseOperator) -> Result<f64> {
        let mut acc = 0.0;
        for (w, s) in &self.members {
            acc += w * op.expectation(s.amplitudes())?.re;
        }
        Ok(acc)
    }
}

/// `P_X(t)` with the moments of `x̂` on a time grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservableSeries {
    pub labels: Vec<MagDiff>,
    pub times: Vec<f64>,
    pub probs: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

impl ObservableSeries {
    pub fn from_probs(labels: Vec<MagDiff>, times: Vec<f64>, probs: Vec<Vec<f64>>) -> Self {
        let dist = DistributionSeries {
            labels,
            times,
            probs,
        };
        let (mean, variance) = crate::stochastic::moments(&dist);
        Self {
            labels: dist.labels,
            times: dist.times,
            probs: dist.probs,
            mean,
            variance,
        }
    }

    pub fn as_distribution(&self) -> DistributionSeries {
        DistributionSeries {
            labels: self.labels.clone(),
            times: self.times.clone(),
            probs: self.probs.clone(),
        }
    }

    pub fn initial(&self) -> &[f64] {
        &self.probs[0]
    }
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PropagatorOptions {
    /// Internal step for iterative propagation.
    pub dt: f64,
    /// Error budget per unit of propagated time, in state norm.
    pub tol: f64,
    /// Dense spectral propagation is used below this dimension.
    pub dense_below: usize,
    /// Largest Krylov subspace before a step is split.
    pub max_krylov: usize,
}

impl Default for PropagatorOptions {
    fn default() -> Self {
        Self {
            dt: 0.1,
            tol: 1e-9,
            dense_below: 1500,
            max_krylov: 60,
        }
    }
}

/// Short-iterate Lanczos propagator with full reorthogonalization.
#[derive(Clone, Debug)]
pub struct KrylovPropagator<'a> {
    h: &'a SparseOperator,
    opts: PropagatorOptions,
}

/// Dense `exp(-iHt)` through a full eigendecomposition.
#[derive(Clone, Debug)]
pub struct DensePropagator {
    energies: Vec<f64>,
    vectors: Array2<f64>,
}

#[derive(Clone, Debug)]
pub enum Propagator<'a> {
    Krylov(KrylovPropagator<'a>),
    Dense(DensePropagator),
}

impl<'a> Propagator<'a> {
    /// Dense below `opts.dense_below`, Krylov otherwise.
    pub fn new(h: &'a SparseOperator, opts: PropagatorOptions) -> Result<Self> {
        if !(opts.dt > 0.0) || !(opts.tol > 0.0 && opts.tol <= 1e-6) {
            return Err(Error::InvalidConfig(format!(
                "propagator needs dt > 0 and tol in (0, 1e-6] (got dt {}, tol {})",
                opts.dt, opts.tol
            )));
        }
        if h.dim() < opts.dense_below {
            Ok(Self::Dense(DensePropagator::new(h)?))
        } else {
            Ok(Self::Krylov(KrylovPropagator::new(h, opts)))
        }
    }

    pub fn krylov(h: &'a SparseOperator, opts: PropagatorOptions) -> Self {
        Self::Krylov(KrylovPropagator::new(h, opts))
    }

    pub fn dense(h: &SparseOperator) -> Result<Self> {
        Ok(Self::Dense(DensePropagator::new(h)?))
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Krylov(k) => k.h.dim(),
            Self::Dense(d) => d.energies.len(),
        }
    }

    /// `exp(-iHt)|ψ>`; `t0` only labels errors.
    pub fn evolve(&self, psi: &StateVector, t0: f64, t: f64) -> Result<StateVector> {
        if psi.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: psi.dim(),
            });
        }
        match self {
            Self::Krylov(k) => k.evolve(psi, t0, t),
            Self::Dense(d) => Ok(d.evolve(psi, t)),
        }
    }

    /// Snapshots of `exp(-iHt)|ψ>` at each of `times` (non-decreasing, from 0).
    pub fn trajectory<F, T>(&self, psi: &StateVector, times: &[f64], mut observe: F) -> Result<Vec<T>>
    where
        F: FnMut(&StateVector) -> T,
    {
        check_monotone(times)?;
        let mut out = Vec::with_capacity(times.len());
        match self {
            Self::Dense(d) => {
                let coeffs = d.coefficients(psi);
                for &t in times {
                    out.push(observe(&d.rebuild(&coeffs, t)));
                }
            }
            Self::Krylov(k) => {
                let mut state = psi.clone();
                let mut now = 0.0;
                for &t in times {
                    if t > now {
                        state = k.evolve(&state, now, t - now)?;
                        now = t;
                    }
                    out.push(observe(&state));
                }
            }
        }
        Ok(out)
    }
}

fn check_monotone(times: &[f64]) -> Result<()> {
    if times.first().is_some_and(|&t| t < 0.0) || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::GridMismatch("times must be non-negative and non-decreasing".into()));
    }
    Ok(())
}

impl DensePropagator {
    pub fn new(h: &SparseOperator) -> Result<Self> {
        let (energies, vectors) = symmetric_eigen(h.to_dense(), EigenRange::All)?;
        Ok(Self { energies, vectors })
    }

    fn coefficients(&self, psi: &StateVector) -> (Array1<f64>, Array1<f64>) {
        let re: Array1<f64> = psi.amps.iter().map(|a| a.re).collect();
        let im: Array1<f64> = psi.amps.iter().map(|a| a.im).collect();
        (self.vectors.t().dot(&re), self.vectors.t().dot(&im))
    }

    fn rebuild(&self, coeffs: &(Array1<f64>, Array1<f64>), t: f64) -> StateVector {
        let (cr, ci) = coeffs;
        let mut re = Array1::zeros(cr.len());
        let mut im = Array1::zeros(cr.len());
        for (n, &e) in self.energies.iter().enumerate() {
            let c = Complex64::new(cr[n], ci[n]) * Complex64::from_polar(1.0, -e * t);
            re[n] = c.re;
            im[n] = c.im;
        }
        let re = self.vectors.dot(&re);
        let im = self.vectors.dot(&im);
        StateVector::from_raw(re.iter().zip(im.iter()).map(|(&a, &b)| Complex64::new(a, b)).collect())
    }

    pub fn evolve(&self, psi: &StateVector, t: f64) -> StateVector {
        self.rebuild(&self.coefficients(psi), t)
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }
}

/// Outcome of one Lanczos attempt.
enum KrylovStep {
    Done(Vec<Complex64>),
    /// Subspace exhausted with this error estimate.
    Short(f64),
}

impl<'a> KrylovPropagator<'a> {
    pub fn new(h: &'a SparseOperator, opts: PropagatorOptions) -> Self {
        Self { h, opts }
    }

    pub fn evolve(&self, psi: &StateVector, t0: f64, t: f64) -> Result<StateVector> {
        let mut amps = psi.amps.clone();
        let mut now = 0.0;
        while t - now > 1e-14 * t.max(1.0) {
            let tau = self.opts.dt.min(t - now);
            amps = self.step(&amps, t0 + now, tau, 0)?;
            now += tau;
        }
        Ok(StateVector::from_raw(amps))
    }

    /// One step of length `tau`, halved recursively when the subspace is too small.
    fn step(&self, psi: &[Complex64], t0: f64, tau: f64, depth: u32) -> Result<Vec<Complex64>> {
        let local_tol = self.opts.tol * tau.min(1.0) * 1e-2;
        match self.lanczos(psi, tau, local_tol)? {
            KrylovStep::Done(v) => Ok(v),
            KrylovStep::Short(residual) => {
                if depth >= 24 {
                    return Err(Error::NotConverged {
                        time: t0,
                        residual,
                        tol: local_tol,
                    });
                }
                let half = self.step(psi, t0, 0.5 * tau, depth + 1)?;
                self.step(&half, t0 + 0.5 * tau, 0.5 * tau, depth + 1)
            }
        }
    }

    fn lanczos(&self, psi: &[Complex64], tau: f64, tol: f64) -> Result<KrylovStep> {
        let dim = psi.len();
        let beta0 = norm(psi);
        if beta0 == 0.0 {
            return Ok(KrylovStep::Done(psi.to_vec()));
        }
        let max_m = self.opts.max_krylov.min(dim).max(1);
        let mut basis: Vec<Vec<Complex64>> = vec![psi.iter().map(|a| a / beta0).collect()];
        let mut alpha: Vec<f64> = Vec::new();
        let mut beta: Vec<f64> = Vec::new();
        let mut w = vec![Complex64::new(0.0, 0.0); dim];
        let mut last_err = f64::INFINITY;
        for j in 0..max_m {
            self.h.apply_into(&basis[j], &mut w)?;
            let a = dot(&basis[j], &w).re;
            for (wi, vi) in w.iter_mut().zip(&basis[j]) {
                *wi -= a * vi;
            }
            if j > 0 {
                let b = beta[j - 1];
                for (wi, vi) in w.iter_mut().zip(&basis[j - 1]) {
                    *wi -= b * vi;
                }
            }
            for v in &basis {
                let c = dot(v, &w);
                for (wi, vi) in w.iter_mut().zip(v) {
                    *wi -= c * vi;
                }
            }
            alpha.push(a);
            let b = norm(&w);
            let m = j + 1;
            let breakdown = b <= 1e-13 * (a.abs() + beta.last().copied().unwrap_or(0.0)).max(1.0);
            if m >= 3 || breakdown || m == max_m {
                let y = tridiagonal_exp(&alpha, &beta, tau)?;
                let err = if breakdown { 0.0 } else { beta0 * b * y[m - 1].norm() };
                last_err = err;
                if err <= tol {
                    let mut out = vec![Complex64::new(0.0, 0.0); dim];
                    for (v, &c) in basis.iter().zip(&y) {
                        let c = c * beta0;
                        for (o, vi) in out.iter_mut().zip(v) {
                            *o += c * vi;
                        }
                    }
                    return Ok(KrylovStep::Done(out));
                }
            }
            if m == max_m {
                break;
            }
            beta.push(b);
            basis.push(w.iter().map(|x| x / b).collect());
        }
        Ok(KrylovStep::Short(last_err))
    }
}

/// `exp(-i T tau) e_1` for the symmetric tridiagonal `T`.
fn tridiagonal_exp(alpha: &[f64], beta: &[f64], tau: f64) -> Result<Vec<Complex64>> {
    let m = alpha.len();
    let mut t = Array2::zeros((m, m));
    for i in 0..m {
        t[[i, i]] = alpha[i];
        if i + 1 < m {
            t[[i, i + 1]] = beta[i];
            t[[i + 1, i]] = beta[i];
        }
    }
    let (theta, s) = symmetric_eigen(t, EigenRange::All)?;
    let mut y = vec![Complex64::new(0.0, 0.0); m];
    for (k, &th) in theta.iter().enumerate() {
        let c = s[[0, k]] * Complex64::from_polar(1.0, -th * tau);
        for (i, yi) in y.iter_mut().enumerate() {
            *yi += s[[i, k]] * c;
        }
    }
    Ok(y)
}

/// `exp(-iHdt)|ψ>` with error at most `tol` in norm.
pub fn propagate(state: &StateVector, h: &SparseOperator, dt: f64, tol: f64) -> Result<StateVector> {
    if !(dt > 0.0) {
        return Err(Error::InvalidConfig(format!("dt must be positive (got {dt})")));
    }
    let opts = PropagatorOptions {
        dt,
        tol,
        ..PropagatorOptions::default()
    };
    Propagator::new(h, opts)?.evolve(state, 0.0, dt)
}

/// `P_X(t)` and moments for an ensemble; members run in parallel and are
/// reduced in member order.
pub fn evolve_series(
    ens: &MixedEnsemble,
    prop: &Propagator<'_>,
    projectors: &XProjectors,
    times: &[f64],
) -> Result<ObservableSeries> {
    let per_member: Vec<Vec<Vec<f64>>> = ens
        .members
        .par_iter()
        .map(|(_, s)| prop.trajectory(s, times, |psi| projectors.distribution(psi.amplitudes())))
        .collect::<Result<_>>()?;
    let nx = projectors.len();
    let mut probs = vec![vec![0.0; nx]; times.len()];
    for ((w, _), traj) in ens.members.iter().zip(&per_member) {
        for (acc, p) in probs.iter_mut().zip(traj) {
            for (a, q) in acc.iter_mut().zip(p) {
                *a += w * q;
            }
        }
    }
    Ok(ObservableSeries::from_probs(projectors.labels(), times.to_vec(), probs))
}

/// `Σ_n <n|A|n> Σ_r w_r |<n|ψ_r>|²`.
pub fn diagonal_ensemble(spec: &SpectralDecomposition, initial: &MixedEnsemble, a: &SparseOperator) -> Result<f64> {
    if a.dim() != spec.dim() || initial.dim() != spec.dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.dim(),
            got: if a.dim() != spec.dim() { a.dim() } else { initial.dim() },
        });
    }
    let all: Vec<usize> = (0..spec.len()).collect();
    let diag = spec.diagonal_elements(a, &all)?;
    let mut occupation = vec![0.0; spec.len()];
    for (w, s) in initial.members() {
        let re: Vec<f64> = s.amplitudes().iter().map(|c| c.re).collect();
        let im: Vec<f64> = s.amplitudes().iter().map(|c| c.im).collect();
        let cr = spec.project_real(&re);
        let ci = spec.project_real(&im);
        for n in 0..spec.len() {
            occupation[n] += w * (cr[n] * cr[n] + ci[n] * ci[n]);
        }
    }
    Ok(diag.iter().zip(&occupation).map(|(d, o)| d * o).sum())
}

/// A density operator supported on a set of eigenvectors, held as its
/// matrix `ρ_nm` in that eigenbasis.
#[derive(Clone, Debug)]
pub struct EigenbasisDensity {
    /// Eigen-indices spanning the support.
    pub indices: Vec<usize>,
    /// The eigenvectors in sector coordinates, `dim × indices.len()`.
    pub vectors: Array2<f64>,
    pub energies: Vec<f64>,
    /// Unit-trace `ρ_nm`.
    pub rho: Array2<f64>,
}

impl EigenbasisDensity {
    /// `P_X(t) = Σ_nm ρ_nm <m|P_X|n> cos((E_n - E_m) t)` for every `X`.
    pub fn evolve_series(&self, projectors: &XProjectors, times: &[f64]) -> Result<ObservableSeries> {
        check_monotone(times)?;
        let r = self.indices.len();
        let nt = times.len();
        let mut cos = Array2::zeros((r, nt));
        let mut sin = Array2::zeros((r, nt));
        for (n, &e) in self.energies.iter().enumerate() {
            for (k, &t) in times.iter().enumerate() {
                let (s, c) = (e * t).sin_cos();
                cos[[n, k]] = c;
                sin[[n, k]] = s;
            }
        }
        let mut probs = vec![vec![0.0; projectors.len()]; nt];
        for (i, sub) in projectors.subspaces().iter().enumerate() {
            let rows = self.vectors.select(Axis(0), &sub.indices);
            let overlap = rows.t().dot(&rows);
            let b = &overlap * &self.rho;
            let bc = b.dot(&cos);
            let bs = b.dot(&sin);
            for k in 0..nt {
                let mut p = 0.0;
                for n in 0..r {
                    p += cos[[n, k]] * bc[[n, k]] + sin[[n, k]] * bs[[n, k]];
                }
                probs[k][i] = p;
            }
        }
        Ok(ObservableSeries::from_probs(projectors.labels(), times.to_vec(), probs))
    }

    /// Long-time average `Σ_n ρ_nn <n|A|n>` (assumes a non-degenerate support).
    pub fn diagonal_ensemble(&self, a: &SparseOperator) -> Result<f64> {
        let mut acc = 0.0;
        for (c, col) in self.vectors.axis_iter(Axis(1)).enumerate() {
            let v = col.to_vec();
            let av = a.apply_real(&v)?;
            acc += self.rho[[c, c]] * v.iter().zip(&av).map(|(x, y)| x * y).sum::<f64>();
        }
        Ok(acc)
    }

    /// Spectral decomposition of `ρ` as an ensemble (keeps weights above `cutoff`).
    pub fn to_ensemble(&self, cutoff: f64) -> Result<MixedEnsemble> {
        let (w, s) = symmetric_eigen(self.rho.clone(), EigenRange::All)?;
        let members = w
            .iter()
            .enumerate()
            .filter(|(_, &wk)| wk > cutoff)
            .map(|(k, &wk)| {
                let v = self.vectors.dot(&s.column(k));
                StateVector::from_real(v.as_slice().expect("contiguous")).map(|s| (wk, s))
            })
            .collect::<Result<Vec<_>>>()?;
        MixedEnsemble::new(members)
    }
}
