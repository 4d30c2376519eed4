//! Dense linear-algebra kernel: vectors, matrices, CG and Cholesky solves,
//! and finite-difference derivative estimators.

mod cg;
mod fd;
mod matrix;
mod vector;

pub use cg::{cg_solve, CgOutcome};
pub use fd::{fd_gradient, fd_hvp, DEFAULT_FD_STEP};
pub use matrix::{direct_solve, Cholesky, FnOperator, LinearOperator, Matrix, SpdMatrix};
pub use vector::{dot, Vector};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("malformed matrix: {0}")]
    Shape(String),
    #[error("matrix is not symmetric")]
    NotSymmetric,
    #[error("matrix is not positive definite: pivot {pivot} is {value}")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("numerical breakdown: {0}")]
    Breakdown(String),
    #[error("non-finite function value while perturbing component {component}")]
    NonFiniteEvaluation { component: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
