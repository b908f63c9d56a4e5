use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("dense diagonalization of dimension {dim} exceeds the ceiling {ceiling}; use the parity-blocked or window-free pipeline")]
    OverBudget { dim: usize, ceiling: usize },

    #[error("propagation did not converge at t = {time}: residual {residual:e} above tolerance {tol:e}")]
    NotConverged { time: f64, residual: f64, tol: f64 },

    #[error("LAPACK routine {routine} failed with info = {info}")]
    Lapack { routine: &'static str, info: i32 },

    #[error("no transition block between X = {from} and X = {to} (|ΔX| must be 1)")]
    NoTransition { from: f64, to: f64 },

    #[error("time grid too coarse: dt = {dt} but at most {required} is needed")]
    GridTooCoarse { dt: f64, required: f64 },

    #[error("time grids differ: {0}")]
    GridMismatch(String),

    #[error("no rate plateau: {0}")]
    NoPlateau(String),

    #[error("initial state is empty: {0}")]
    EmptyState(String),

    #[error("linear algebra failure: {0}")]
    Linalg(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<ndarray_linalg::error::LinalgError> for Error {
    fn from(e: ndarray_linalg::error::LinalgError) -> Self {
        Error::Linalg(e.to_string())
    }
}
