//! Exact dynamics of the beam magnetization difference in a two-beam XXZ
//! spin ladder, and the stochastic descriptions it is compared against.

// NaN must fail validation, so `!(x > 0.0)` is intentional throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod basis;
pub mod error;
pub mod grid;
mod lapack;
pub mod operator;
pub mod propagation;
pub mod spectral;
pub mod states;
pub mod stochastic;
pub mod tcl;

pub use basis::{LadderConfig, MagDiff, SectorBasis, SpinConvention};
pub use error::{Error, Result};
pub use grid::TimeGrid;
pub use lapack::{dense_backend_check, symmetric_eigen, EigenRange};
pub use num_complex::Complex64;
pub use operator::{SparseOperator, XProjectors, XSubspace};
