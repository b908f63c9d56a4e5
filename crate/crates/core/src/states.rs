//! Initial states: energy-window mixed states, random product states and
//! random states of a whole `X` subspace.
//!
//! All randomness comes from `ChaCha8Rng::seed_from_u64(seed)`; sample `k`
//! of an ensemble draws from stream `k` of that generator, so results are
//! reproducible across platforms and independent of thread scheduling.
//! Haar vectors are normalized i.i.d. complex Gaussians.

use ndarray::{Array1, Array2, Axis};
use ndarray_linalg::SVD;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::basis::{fixed_weight_patterns, MagDiff, SectorBasis};
use crate::error::{Error, Result};
use crate::lapack::{symmetric_eigen, EigenRange};
use crate::operator::XProjectors;
use crate::propagation::{
    evolve_series, EigenbasisDensity, MixedEnsemble, ObservableSeries, Propagator, StateVector,
};
use crate::spectral::{window_projector, SpectralDecomposition};

/// Largest window rank handled by the exact spectral representation in
/// [`WindowMode::Auto`].
pub const EXACT_RANK_LIMIT: usize = 4000;

/// Largest number of explicit ensemble members the exact `P_X P_w P_X`
/// construction will produce.
pub const EXACT_MEMBER_LIMIT: usize = 256;

pub const DEFAULT_SAMPLES: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StateKind {
    WindowMixed,
    ProductRandom,
    EntangledRandom,
}

/// Operator order of the window-projected state.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum WindowOrder {
    /// `P_w P_X P_w / Z`.
    #[default]
    Literal,
    /// `P_X P_w P_X / Z`, supported inside `X`.
    XSupported,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum WindowMode {
    /// Exact when the window rank is at most [`EXACT_RANK_LIMIT`].
    #[default]
    Auto,
    Exact,
    Typicality,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InitialStateSpec {
    pub kind: StateKind,
    pub x: MagDiff,
    /// `(center, width)` of the energy window.
    pub window: (f64, f64),
    pub seed: u64,
    pub samples: usize,
    pub order: WindowOrder,
    pub mode: WindowMode,
}

impl InitialStateSpec {
    pub fn window_mixed(x: MagDiff) -> Self {
        Self {
            kind: StateKind::WindowMixed,
            x,
            window: (0.0, 2.0),
            seed: 0,
            samples: DEFAULT_SAMPLES,
            order: WindowOrder::Literal,
            mode: WindowMode::Auto,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::InvalidConfig("samples must be at least 1".into()));
        }
        if !(self.window.1 > 0.0) || !self.window.0.is_finite() {
            return Err(Error::InvalidConfig(format!("invalid energy window {:?}", self.window)));
        }
        Ok(())
    }
}

/// The window-projected initial state in whichever representation was built.
#[derive(Clone, Debug)]
pub enum WindowState {
    /// Exact `ρ` in the window eigenbasis.
    Spectral(EigenbasisDensity),
    /// Explicit or sampled ensemble.
    Ensemble(MixedEnsemble),
}

impl WindowState {
    pub fn is_exact(&self) -> bool {
        matches!(self, Self::Spectral(_))
    }

    pub fn evolve_series(
        &self,
        prop: &Propagator<'_>,
        projectors: &XProjectors,
        times: &[f64],
    ) -> Result<ObservableSeries> {
        match self {
            Self::Spectral(d) => d.evolve_series(projectors, times),
            Self::Ensemble(e) => evolve_series(e, prop, projectors, times),
        }
    }
}

fn haar(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex64> {
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    (0..n)
        .map(|_| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Complex64::new(scale * re, scale * im)
        })
        .collect()
}

fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// `W W^T v` for real orthonormal columns `W`, on a complex vector.
fn project_columns(w: &Array2<f64>, v: &[Complex64]) -> Vec<Complex64> {
    let re: Array1<f64> = v.iter().map(|c| c.re).collect();
    let im: Array1<f64> = v.iter().map(|c| c.im).collect();
    let re = w.dot(&w.t().dot(&re));
    let im = w.dot(&w.t().dot(&im));
    re.iter().zip(im.iter()).map(|(&a, &b)| Complex64::new(a, b)).collect()
}

fn restrict(v: &mut [Complex64], keep: &[usize]) {
    let mut out = vec![Complex64::new(0.0, 0.0); v.len()];
    for &i in keep {
        out[i] = v[i];
    }
    v.copy_from_slice(&out);
}

/// `ρ_X(0)` from the eigenstates of `spectral` in the energy window.
pub fn window_mixed_state(
    spec: &InitialStateSpec,
    basis: &SectorBasis,
    spectral: &SpectralDecomposition,
    projectors: &XProjectors,
) -> Result<WindowState> {
    spec.validate()?;
    if spectral.dim() != basis.dim() {
        return Err(Error::DimensionMismatch {
            expected: basis.dim(),
            got: spectral.dim(),
        });
    }
    let sub = projectors
        .get(spec.x)
        .ok_or_else(|| Error::InvalidConfig(format!("X = {} is not admissible", spec.x)))?;
    let window = window_projector(spectral, spec.window.0, spec.window.1)?;
    if window.is_empty() {
        return Err(Error::EmptyState(format!(
            "energy window [{}, {}] contains no eigenstates",
            window.bounds().0,
            window.bounds().1
        )));
    }
    let vectors = spectral.vectors(&window.indices);
    let rows = vectors.select(Axis(0), &sub.indices);
    let overlap = rows.t().dot(&rows);
    let z: f64 = overlap.diag().sum();
    if !(z > 1e-12) {
        return Err(Error::EmptyState(format!(
            "window has no overlap with X = {} (Z = {z:e})",
            spec.x
        )));
    }
    let exact = match spec.mode {
        WindowMode::Exact => true,
        WindowMode::Typicality => false,
        WindowMode::Auto => match spec.order {
            WindowOrder::Literal => window.rank() <= EXACT_RANK_LIMIT,
            WindowOrder::XSupported => window.rank().min(sub.dim()) <= EXACT_MEMBER_LIMIT,
        },
    };
    if exact {
        match spec.order {
            WindowOrder::Literal => {
                let energies = window.indices.iter().map(|&n| spectral.energies()[n]).collect();
                Ok(WindowState::Spectral(EigenbasisDensity {
                    indices: window.indices,
                    vectors,
                    energies,
                    rho: overlap / z,
                }))
            }
            WindowOrder::XSupported => {
                // P_X W W^T P_X = (P_X W) (P_X W)^T; its eigenvectors follow from the Gram matrix
                let (lambda, s) = symmetric_eigen(overlap, EigenRange::All)?;
                let top = lambda.iter().copied().fold(0.0, f64::max);
                let keep: Vec<usize> = (0..lambda.len()).filter(|&k| lambda[k] > 1e-12 * top).collect();
                if keep.len() > EXACT_MEMBER_LIMIT {
                    return Err(Error::OverBudget {
                        dim: keep.len(),
                        ceiling: EXACT_MEMBER_LIMIT,
                    });
                }
                let members = keep
                    .iter()
                    .map(|&k| {
                        let local = rows.dot(&s.column(k));
                        let mut full = vec![0.0; basis.dim()];
                        for (&i, &a) in sub.indices.iter().zip(local.iter()) {
                            full[i] = a;
                        }
                        StateVector::from_real(&full).map(|v| (lambda[k], v))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(WindowState::Ensemble(MixedEnsemble::new(members)?))
            }
        }
    } else {
        // φ = P_w P_X v (or P_X P_w v) with weight |φ|² has E[φφ†] equal to ρ up to Z
        let members = (0..spec.samples)
            .into_par_iter()
            .map(|k| {
                let mut rng = stream(spec.seed, k as u64);
                let mut v = haar(&mut rng, basis.dim());
                let phi = match spec.order {
                    WindowOrder::Literal => {
                        restrict(&mut v, &sub.indices);
                        project_columns(&vectors, &v)
                    }
                    WindowOrder::XSupported => {
                        let mut p = project_columns(&vectors, &v);
                        restrict(&mut p, &sub.indices);
                        p
                    }
                };
                let w: f64 = phi.iter().map(|c| c.norm_sqr()).sum();
                StateVector::new(phi).map(|s| (w, s))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(WindowState::Ensemble(MixedEnsemble::new(members)?))
    }
}

/// Haar-random left-beam state ⊗ Haar-random right-beam state.
pub fn random_product_state(seed: u64, left_up: usize, right_up: usize, basis: &SectorBasis) -> Result<StateVector> {
    let l = basis.rungs();
    if left_up > l || right_up > l || left_up + right_up != basis.up_count() {
        return Err(Error::InvalidConfig(format!(
            "beam up-counts {left_up} + {right_up} must each be at most {l} and sum to {}",
            basis.up_count()
        )));
    }
    let left = fixed_weight_patterns(l, left_up);
    let right = fixed_weight_patterns(l, right_up);
    let mut rng = stream(seed, 0);
    let a = haar(&mut rng, left.len());
    let b = haar(&mut rng, right.len());
    let mut amps = vec![Complex64::new(0.0, 0.0); basis.dim()];
    for (&lp, &al) in left.iter().zip(&a) {
        for (&rp, &br) in right.iter().zip(&b) {
            let idx = basis.index_of(basis.compose(lp, rp)).expect("pattern in sector");
            amps[idx] = al * br;
        }
    }
    StateVector::new(amps)
}

/// Beam up-counts `(n_L, n_R)` of the subspace `X`.
pub fn beam_counts(basis: &SectorBasis, x: MagDiff) -> Result<(usize, usize)> {
    let twice_left = basis.up_count() as i64 + x.twice() as i64;
    if twice_left < 0 || twice_left % 2 != 0 || twice_left / 2 > basis.rungs() as i64 || (twice_left / 2) as usize > basis.up_count() {
        return Err(Error::InvalidConfig(format!("X = {x} is not admissible in this sector")));
    }
    let left = (twice_left / 2) as usize;
    let right = basis.up_count() - left;
    if right > basis.rungs() {
        return Err(Error::InvalidConfig(format!("X = {x} is not admissible in this sector")));
    }
    Ok((left, right))
}

/// Haar-random state of the subspace `X`.
pub fn random_entangled_state(seed: u64, x: MagDiff, basis: &SectorBasis, projectors: &XProjectors) -> Result<StateVector> {
    let sub = projectors
        .get(x)
        .ok_or_else(|| Error::InvalidConfig(format!("X = {x} is not admissible")))?;
    if sub.dim() < 2 {
        return Err(Error::InvalidConfig(format!(
            "subspace X = {x} has dimension {}; a random state needs at least 2",
            sub.dim()
        )));
    }
    let mut rng = stream(seed, 0);
    let g = haar(&mut rng, sub.dim());
    let mut amps = vec![Complex64::new(0.0, 0.0); basis.dim()];
    for (&i, a) in sub.indices.iter().zip(g) {
        amps[i] = a;
    }
    StateVector::new(amps)
}

/// `samples` states of one class, drawn from consecutive seeds starting at `seed`.
pub fn random_states(
    kind: StateKind,
    seed: u64,
    count: usize,
    x: MagDiff,
    basis: &SectorBasis,
    projectors: &XProjectors,
) -> Result<Vec<StateVector>> {
    (0..count as u64)
        .map(|k| match kind {
            StateKind::ProductRandom => {
                let (l, r) = beam_counts(basis, x)?;
                random_product_state(seed.wrapping_add(k), l, r, basis)
            }
            StateKind::EntangledRandom => random_entangled_state(seed.wrapping_add(k), x, basis, projectors),
            StateKind::WindowMixed => Err(Error::InvalidConfig("window states are built by window_mixed_state".into())),
        })
        .collect()
}

/// Von Neumann entropy (bits) of the left-beam reduced state.
pub fn beam_entanglement_entropy(state: &StateVector, basis: &SectorBasis) -> Result<f64> {
    let l = basis.rungs();
    let up = basis.up_count();
    let mut entropy = 0.0;
    for left_up in up.saturating_sub(l)..=up.min(l) {
        let left = fixed_weight_patterns(l, left_up);
        let right = fixed_weight_patterns(l, up - left_up);
        let mut m = Array2::<Complex64>::zeros((left.len(), right.len()));
        let mut any = false;
        for (i, &lp) in left.iter().enumerate() {
            for (j, &rp) in right.iter().enumerate() {
                let idx = basis.index_of(basis.compose(lp, rp)).expect("pattern in sector");
                m[[i, j]] = state.amplitudes()[idx];
                any |= m[[i, j]].norm_sqr() > 0.0;
            }
        }
        if !any {
            continue;
        }
        let (_, sv, _) = m.svd(false, false)?;
        for s in sv {
            let p = s * s;
            if p > 1e-300 {
                entropy -= p * p.log2();
            }
        }
    }
    Ok(entropy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::LadderConfig;
    use crate::operator::{build_hamiltonian, build_x_observable};
    use crate::propagation::PropagatorOptions;
    use crate::spectral::{diagonalize_parity_blocks, DenseOptions};

    fn setup(l: usize) -> (SectorBasis, XProjectors, SpectralDecomposition, crate::SparseOperator) {
        let cfg = LadderConfig::with_rungs(l);
        let b = SectorBasis::build(&cfg).unwrap();
        let h = build_hamiltonian(&b, &cfg);
        let spec = diagonalize_parity_blocks(&h, &b, DenseOptions::default()).unwrap();
        (b.clone(), XProjectors::build(&b), spec, h)
    }

    #[test]
    fn exact_window_state_has_unit_trace() {
        let (b, proj, spec, h) = setup(4);
        let s = InitialStateSpec::window_mixed(MagDiff::from_int(1));
        let WindowState::Spectral(d) = window_mixed_state(&s, &b, &spec, &proj).unwrap() else {
            panic!("expected exact state");
        };
        assert!((d.rho.diag().sum() - 1.0).abs() < 1e-12);
        let ens = d.to_ensemble(1e-14).unwrap();
        let total: f64 = ens.members().iter().map(|(w, _)| w).sum();
        assert!((total - 1.0).abs() < 1e-12);
        let prop = Propagator::new(&h, PropagatorOptions::default()).unwrap();
        let a = d.evolve_series(&proj, &[0.0, 3.0]).unwrap();
        let e = evolve_series(&ens, &prop, &proj, &[0.0, 3.0]).unwrap();
        for (p, q) in a.probs.iter().zip(&e.probs) {
            for (x, y) in p.iter().zip(q) {
                assert!((x - y).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn full_spectrum_window_is_the_subspace_projector() {
        let (b, proj, spec, _) = setup(3);
        let x = MagDiff::from_twice(1);
        let mut s = InitialStateSpec::window_mixed(x);
        s.window = (0.0, 1e3);
        let WindowState::Spectral(d) = window_mixed_state(&s, &b, &spec, &proj).unwrap() else {
            panic!("expected exact state");
        };
        let series = d.evolve_series(&proj, &[0.0]).unwrap();
        let i = proj.position(x).unwrap();
        assert!((series.probs[0][i] - 1.0).abs() < 1e-10);
        assert!(series.variance[0] < 1e-10);
        s.order = WindowOrder::XSupported;
        let WindowState::Ensemble(e) = window_mixed_state(&s, &b, &spec, &proj).unwrap() else {
            panic!("expected explicit ensemble");
        };
        assert_eq!(e.len(), proj.get(x).unwrap().dim());
    }

    #[test]
    fn x_supported_order_starts_inside_x() {
        let (b, proj, spec, h) = setup(4);
        let x = MagDiff::from_int(1);
        let mut s = InitialStateSpec::window_mixed(x);
        s.order = WindowOrder::XSupported;
        let st = window_mixed_state(&s, &b, &spec, &proj).unwrap();
        let prop = Propagator::new(&h, PropagatorOptions::default()).unwrap();
        let series = st.evolve_series(&prop, &proj, &[0.0]).unwrap();
        assert!((series.mean[0] - 1.0).abs() < 1e-12);
        assert!(series.variance[0] < 1e-12);
    }

    #[test]
    fn empty_window_is_refused() {
        let (b, proj, spec, _) = setup(3);
        let mut s = InitialStateSpec::window_mixed(MagDiff::from_twice(1));
        s.window = (100.0, 1.0);
        assert!(matches!(window_mixed_state(&s, &b, &spec, &proj), Err(Error::EmptyState(_))));
    }

    #[test]
    fn typicality_converges_to_exact() {
        let (b, proj, spec, h) = setup(6);
        let x = MagDiff::from_int(1);
        let exact_spec = InitialStateSpec::window_mixed(x);
        let exact = window_mixed_state(&exact_spec, &b, &spec, &proj).unwrap();
        assert!(exact.is_exact());
        let prop = Propagator::new(&h, PropagatorOptions::default()).unwrap();
        let times = [0.0, 4.0];
        let reference = exact.evolve_series(&prop, &proj, &times).unwrap();
        let rms = |samples: usize| -> f64 {
            let mut acc = 0.0;
            let trials = 12;
            for seed in 0..trials {
                let s = InitialStateSpec {
                    mode: WindowMode::Typicality,
                    samples,
                    seed,
                    ..exact_spec.clone()
                };
                let st = window_mixed_state(&s, &b, &spec, &proj).unwrap();
                let series = st.evolve_series(&prop, &proj, &times).unwrap();
                acc += (series.mean[1] - reference.mean[1]).powi(2);
            }
            (acc / trials as f64).sqrt()
        };
        let coarse = rms(2);
        let fine = rms(32);
        // 16x the samples: expect ~4x smaller error
        assert!(fine < coarse / 2.0, "{coarse} -> {fine}");
        assert!(fine < 0.05);
    }

    #[test]
    fn typicality_is_deterministic_per_seed() {
        let (b, proj, spec, _) = setup(4);
        let s = InitialStateSpec {
            mode: WindowMode::Typicality,
            samples: 3,
            seed: 42,
            ..InitialStateSpec::window_mixed(MagDiff::from_int(1))
        };
        let WindowState::Ensemble(a) = window_mixed_state(&s, &b, &spec, &proj).unwrap() else { panic!() };
        let WindowState::Ensemble(c) = window_mixed_state(&s, &b, &spec, &proj).unwrap() else { panic!() };
        for ((w1, s1), (w2, s2)) in a.members().iter().zip(c.members()) {
            assert_eq!(w1.to_bits(), w2.to_bits());
            assert_eq!(s1, s2);
        }
    }

    #[test]
    fn product_states_are_sharp_and_unentangled() {
        let cfg = LadderConfig::default();
        let b = SectorBasis::build(&cfg).unwrap();
        let proj = XProjectors::build(&b);
        let x = build_x_observable(&b);
        let psi = random_product_state(7, 5, 3, &b).unwrap();
        assert!((x.expectation(psi.amplitudes()).unwrap().re - 1.0).abs() < 1e-12);
        let p = proj.distribution(psi.amplitudes());
        assert!((p[proj.position(MagDiff::from_int(1)).unwrap()] - 1.0).abs() < 1e-12);
        assert!(beam_entanglement_entropy(&psi, &b).unwrap().abs() < 1e-9);
        assert!(random_product_state(7, 5, 4, &b).is_err());
        assert_eq!(beam_counts(&b, MagDiff::from_int(1)).unwrap(), (5, 3));
    }

    #[test]
    fn product_overlaps_follow_haar_statistics() {
        let cfg = LadderConfig::default();
        let b = SectorBasis::build(&cfg).unwrap();
        let draws = 200;
        let states: Vec<StateVector> = (0..draws).map(|s| random_product_state(s, 5, 3, &b).unwrap()).collect();
        let mut mean = 0.0;
        let mut count = 0;
        for i in 0..draws as usize {
            for j in i + 1..draws as usize {
                mean += states[i].inner(&states[j]).norm_sqr();
                count += 1;
            }
        }
        mean /= count as f64;
        let expected = 1.0 / (56.0 * 56.0);
        assert!((mean / expected - 1.0).abs() < 0.25, "{mean} vs {expected}");
    }

    #[test]
    fn entangled_states_fill_the_subspace() {
        let cfg = LadderConfig::default();
        let b = SectorBasis::build(&cfg).unwrap();
        let proj = XProjectors::build(&b);
        let x = MagDiff::from_int(1);
        let mut entropy = 0.0;
        for seed in 0..20 {
            let psi = random_entangled_state(seed, x, &b, &proj).unwrap();
            assert!((psi.norm() - 1.0).abs() < 1e-12);
            let p = proj.distribution(psi.amplitudes());
            assert!((p[proj.position(x).unwrap()] - 1.0).abs() < 1e-12);
            entropy += beam_entanglement_entropy(&psi, &b).unwrap();
        }
        entropy /= 20.0;
        // Page value for a 56 x 56 block: log2(56) - 1/(2 ln 2) ≈ 5.09 bits
        assert!(entropy > 1.0);
        assert!((entropy - 5.09).abs() < 0.1, "{entropy}");
        let a = random_entangled_state(3, x, &b, &proj).unwrap();
        let c = random_entangled_state(3, x, &b, &proj).unwrap();
        assert_eq!(a, c);
        assert!(random_entangled_state(3, MagDiff::from_int(4), &b, &proj).is_err());
    }
}
