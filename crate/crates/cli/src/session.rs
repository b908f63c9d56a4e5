//! Lazily built operators, spectra and rates shared by the subcommands of one run.

use std::sync::OnceLock;

use ladderfp_core::analysis::{
    block_structure, delta_metric, eth_diagonals, sector_trace_x2, BlockStructureReport, DeltaClass, DeltaReport,
    EthReport,
};
use ladderfp_core::operator::{build_hamiltonian, build_v, build_v_flip, build_x_observable};
use ladderfp_core::propagation::{evolve_series, MixedEnsemble, ObservableSeries, Propagator, PropagatorOptions};
use ladderfp_core::spectral::{
    chain_factorize_h0, diagonalize_parity_blocks, dirac_rotate_v_block, window_projector, ChainFactorizedBasis,
    DenseOptions, SpectralDecomposition, WindowProjector,
};
use ladderfp_core::states::{random_states, window_mixed_state, StateKind, WindowState};
use ladderfp_core::stochastic::{evolve_master, lattice_labels, master_generator, naive_rates, DistributionSeries};
use ladderfp_core::tcl::{
    check_initial_value, evolve_tcl_master, fit_gamma, transitions_within, CorrelationFunction, GammaFit,
    InitialValueReport, TclMode, TclRateSet, TclRates,
};
use ladderfp_core::{LadderConfig, MagDiff, SectorBasis, SparseOperator, TimeGrid, XProjectors};

use crate::config::{GammaChoice, GammaPairs, RunConfig, TclRateMode};
use crate::error::{CliError, CliResult};

fn cached<T>(cell: &OnceLock<T>, build: impl FnOnce() -> CliResult<T>) -> CliResult<&T> {
    if let Some(v) = cell.get() {
        return Ok(v);
    }
    let v = build()?;
    Ok(cell.get_or_init(|| v))
}

/// The `γ` a run uses and where it came from.
#[derive(Clone, Debug, PartialEq)]
pub struct GammaUsed {
    pub value: f64,
    /// `"fit"` or `"supplied"`.
    pub source: &'static str,
    pub fit: Option<GammaFit>,
}

/// Quantum and stochastic trajectories behind one δ.
#[derive(Clone, Debug)]
pub struct DeltaStudy {
    pub report: DeltaReport,
    pub gamma: f64,
    pub mixed: ObservableSeries,
    pub mixed_stochastic: DistributionSeries,
    /// `(class, index, seed, δ)` per state.
    pub rows: Vec<(String, usize, u64, f64)>,
}

pub struct Session {
    pub config: RunConfig,
    pub ladder: LadderConfig,
    pub basis: SectorBasis,
    pub projectors: XProjectors,
    hamiltonian: OnceLock<SparseOperator>,
    x_operator: OnceLock<SparseOperator>,
    spectrum: OnceLock<SpectralDecomposition>,
    chains: OnceLock<ChainFactorizedBasis>,
    tcl: OnceLock<(TclRateSet, Vec<CorrelationFunction>)>,
    gamma: OnceLock<GammaUsed>,
}

impl Session {
    pub fn new(config: RunConfig) -> CliResult<Self> {
        let kappa = config.ladder.rung_coupling;
        Self::with_kappa(config, kappa)
    }

    /// The run at a different rung coupling, everything else unchanged.
    pub fn with_kappa(config: RunConfig, kappa: f64) -> CliResult<Self> {
        let ladder = config.ladder.clone().with_kappa(kappa);
        ladder.validate()?;
        let basis = SectorBasis::build(&ladder)?;
        let projectors = XProjectors::build(&basis);
        Ok(Self {
            config,
            ladder,
            basis,
            projectors,
            hamiltonian: OnceLock::new(),
            x_operator: OnceLock::new(),
            spectrum: OnceLock::new(),
            chains: OnceLock::new(),
            tcl: OnceLock::new(),
            gamma: OnceLock::new(),
        })
    }

    pub fn kappa(&self) -> f64 {
        self.ladder.rung_coupling
    }

    pub fn sites(&self) -> usize {
        self.ladder.sites()
    }

    pub fn labels(&self) -> Vec<MagDiff> {
        self.projectors.labels()
    }

    pub fn times(&self) -> CliResult<Vec<f64>> {
        Ok(TimeGrid::up_to(self.config.t_max, self.config.dt)?.times())
    }

    pub fn hamiltonian(&self) -> CliResult<&SparseOperator> {
        cached(&self.hamiltonian, || Ok(build_hamiltonian(&self.basis, &self.ladder)))
    }

    pub fn x_operator(&self) -> CliResult<&SparseOperator> {
        cached(&self.x_operator, || Ok(build_x_observable(&self.basis)))
    }

    /// Full parity-resolved spectrum of `H`.
    pub fn spectrum(&self) -> CliResult<&SpectralDecomposition> {
        cached(&self.spectrum, || {
            let opts = DenseOptions {
                ceiling: self.config.dense_ceiling,
            };
            Ok(diagonalize_parity_blocks(self.hamiltonian()?, &self.basis, opts)?)
        })
    }

    /// Frees the eigenvectors once no further window states are needed.
    pub fn release_spectrum(&mut self) {
        self.spectrum.take();
    }

    pub fn window(&self) -> CliResult<WindowProjector> {
        Ok(window_projector(self.spectrum()?, self.config.window_center, self.config.window_width)?)
    }

    pub fn chains(&self) -> CliResult<&ChainFactorizedBasis> {
        cached(&self.chains, || Ok(chain_factorize_h0(&self.ladder)?))
    }

    /// TCL2 rates for all neighbouring pairs and the correlation functions behind them.
    pub fn tcl(&self) -> CliResult<&(TclRateSet, Vec<CorrelationFunction>)> {
        cached(&self.tcl, || {
            let grid = TimeGrid::up_to(self.config.corr_t_max, self.config.corr_dt)?;
            let v = build_v_flip(&self.basis, &self.ladder);
            Ok(TclRateSet::compute(self.chains()?, &v, grid)?)
        })
    }

    pub fn gamma_transitions(&self, pairs: GammaPairs) -> CliResult<Vec<TclRates>> {
        let (set, _) = self.tcl()?;
        let max = self.config.gamma_max_x;
        let chosen: Vec<TclRates> = transitions_within(&set.labels, max)
            .into_iter()
            .filter(|(_, y)| pairs == GammaPairs::Leaving || y.value().abs() <= max + 1e-12)
            .filter_map(|(x, y)| set.get(x, y).cloned())
            .collect();
        if chosen.is_empty() {
            return Err(CliError::validation(format!("no transitions with |X| <= {max}")));
        }
        Ok(chosen)
    }

    pub fn fit_gamma(&self, pairs: GammaPairs) -> CliResult<GammaFit> {
        let rates = self.gamma_transitions(pairs)?;
        Ok(fit_gamma(&rates, self.sites(), self.kappa(), self.config.plateau)?)
    }

    pub fn gamma(&self) -> CliResult<&GammaUsed> {
        cached(&self.gamma, || match self.config.gamma {
            GammaChoice::Value(value) => Ok(GammaUsed {
                value,
                source: "supplied",
                fit: None,
            }),
            GammaChoice::Fit => {
                let fit = self.fit_gamma(self.config.gamma_pairs)?;
                Ok(GammaUsed {
                    value: fit.gamma,
                    source: "fit",
                    fit: Some(fit),
                })
            }
        })
    }

    pub fn initial_value(&self) -> CliResult<InitialValueReport> {
        let (_, corrs) = self.tcl()?;
        let rates = naive_rates(self.sites(), 1.0, self.kappa())?;
        Ok(check_initial_value(corrs, &rates)?)
    }

    pub fn propagator(&self) -> CliResult<Propagator<'_>> {
        let opts = PropagatorOptions {
            dt: self.config.krylov_dt,
            tol: self.config.krylov_tol,
            ..PropagatorOptions::default()
        };
        Ok(Propagator::new(self.hamiltonian()?, opts)?)
    }

    pub fn window_state(&self, x: MagDiff) -> CliResult<WindowState> {
        let spec = self.config.initial_spec(StateKind::WindowMixed, x);
        Ok(window_mixed_state(&spec, &self.basis, self.spectrum()?, &self.projectors)?)
    }

    /// `P_X(t)` for one initial state of the given class; random classes use `seed`.
    pub fn quantum_series(&self, kind: StateKind, x: MagDiff, seed: u64) -> CliResult<ObservableSeries> {
        let times = self.times()?;
        let prop = self.propagator()?;
        match kind {
            StateKind::WindowMixed => Ok(self.window_state(x)?.evolve_series(&prop, &self.projectors, &times)?),
            _ => {
                let state = random_states(kind, seed, 1, x, &self.basis, &self.projectors)?
                    .pop()
                    .expect("one state requested");
                Ok(evolve_series(&MixedEnsemble::pure(state), &prop, &self.projectors, &times)?)
            }
        }
    }

    fn check_lattice(&self) -> CliResult<()> {
        if lattice_labels(self.sites()) != self.labels() {
            return Err(CliError::validation(
                "the birth-death lattice covers the S_z = 0 sector only; set sz = 0 for stochastic runs",
            ));
        }
        Ok(())
    }

    /// Naive master equation from `p0` with the given `γ`.
    pub fn naive_series(&self, p0: &[f64], gamma: f64) -> CliResult<DistributionSeries> {
        self.check_lattice()?;
        let generator = master_generator(&naive_rates(self.sites(), gamma, self.kappa())?);
        Ok(evolve_master(&generator, p0, &self.times()?)?)
    }

    /// Master equation driven by the TCL2 rates.
    pub fn tcl_series(&self, p0: &[f64]) -> CliResult<DistributionSeries> {
        let (set, _) = self.tcl()?;
        let mode = match self.config.tcl_mode {
            TclRateMode::TimeDependent => TclMode::TimeDependent,
            TclRateMode::Frozen => TclMode::Frozen {
                window: self.config.plateau,
            },
        };
        Ok(evolve_tcl_master(set, p0, &self.times()?, mode, self.config.master_tol)?)
    }

    /// Point mass at `x` on the `X` lattice.
    pub fn point_mass(&self, x: MagDiff) -> CliResult<Vec<f64>> {
        Ok(ladderfp_core::stochastic::point_mass(&self.labels(), x)?)
    }

    /// δ of the window state and of each random product and entangled
    /// state at `x`, each against the naive master equation started from
    /// the state's own `P_X(0)`.
    pub fn delta_study(&self, x: MagDiff) -> CliResult<DeltaStudy> {
        let gamma = self.gamma()?.value;
        let mixed = self.quantum_series(StateKind::WindowMixed, x, self.config.seed)?;
        let mixed_stochastic = self.naive_series(mixed.initial(), gamma)?;
        let mixed_delta = delta_metric(&mixed.times, &mixed.mean, &mixed_stochastic.times, &mixed_stochastic.mean())?;
        let mut rows = vec![("mixed".to_string(), 0, self.config.seed, mixed_delta)];
        let mut classes = vec![DeltaClass {
            name: "mixed".into(),
            deltas: vec![mixed_delta],
        }];
        for (name, kind) in [("product", StateKind::ProductRandom), ("entangled", StateKind::EntangledRandom)] {
            let mut deltas = Vec::new();
            for k in 0..self.config.random_states {
                let seed = self.config.seed.wrapping_add(k as u64);
                let q = self.quantum_series(kind, x, seed)?;
                let s = self.naive_series(q.initial(), gamma)?;
                let d = delta_metric(&q.times, &q.mean, &s.times, &s.mean())?;
                rows.push((name.to_string(), k, seed, d));
                deltas.push(d);
            }
            classes.push(DeltaClass {
                name: name.into(),
                deltas,
            });
        }
        Ok(DeltaStudy {
            report: DeltaReport {
                classes,
                times: mixed.times.clone(),
                quantum_mean: mixed.mean.clone(),
                stochastic_mean: mixed_stochastic.mean(),
            },
            gamma,
            mixed,
            mixed_stochastic,
            rows,
        })
    }

    pub fn block_report(&self) -> CliResult<BlockStructureReport> {
        let v = build_v(&self.basis, &self.ladder);
        let block = dirac_rotate_v_block(self.chains()?, &v, self.config.block_from, self.config.block_to)?;
        Ok(block_structure(&block, self.config.fine_size, self.config.bin_width)?)
    }

    /// Window diagonals and the whole-sector trace of `x̂²`.
    pub fn eth(&self) -> CliResult<(EthReport, f64)> {
        let spec = self.spectrum()?;
        let x = self.x_operator()?;
        let report = eth_diagonals(spec, x, &self.window()?)?;
        let trace = sector_trace_x2(spec, x)?;
        Ok((report, trace))
    }
}
