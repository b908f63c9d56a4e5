//! Benchmark fixtures; the benchmarks live in `benches/`.

use ladderfp_core::operator::build_hamiltonian;
use ladderfp_core::propagation::StateVector;
use ladderfp_core::{LadderConfig, MagDiff, SectorBasis, SparseOperator, XProjectors};

/// Basis, Hamiltonian and projectors of an `L`-rung ladder at default couplings.
pub fn ladder(rungs: usize) -> (LadderConfig, SectorBasis, SparseOperator, XProjectors) {
    let cfg = LadderConfig::with_rungs(rungs);
    let basis = SectorBasis::build(&cfg).expect("valid ladder");
    let h = build_hamiltonian(&basis, &cfg);
    let proj = XProjectors::build(&basis);
    (cfg, basis, h, proj)
}

/// Uniform superposition over the `X = 1` subspace.
pub fn x1_state(proj: &XProjectors, dim: usize) -> StateVector {
    let sub = proj.get(MagDiff::from_int(1)).expect("X = 1 present");
    let mut amps = vec![0.0; dim];
    for &i in &sub.indices {
        amps[i] = 1.0;
    }
    StateVector::from_real(&amps).expect("non-empty")
}
