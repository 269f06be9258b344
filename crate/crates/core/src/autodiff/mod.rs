//! Minimal reverse-mode engine: exactly the primitives the networks need,
//! Adam, and a finite-difference checker for every adjoint.

pub mod adam;
pub mod gemm;
pub mod gradcheck;
pub mod graph;
pub mod tensor;

pub use adam::{AdamParams, AdamState, OptimError};
pub use gradcheck::{GradCheckEntry, GradCheckReport};
pub use graph::{AutodiffError, BnBatchStats, Graph, Var, EPS_LOG};
pub use tensor::{Scalar, Tensor};
