//! Bilevel optimization with the single-loop bilevel averaged method of
//! multipliers (sl-BAMM), baseline hypergradient engines, closed-form toy
//! problems and an experiment harness.

// Range checks written as `!(x > 0.0)` also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod diagnostics;
pub mod harness;
pub mod linalg;
pub mod problem;
pub mod problems;
pub mod solver;

pub use linalg::{Matrix, Vector};
pub use problem::{AggregationContext, BilevelProblem, ProblemError, ProblemMetadata};
pub use problems::{make_problem, ClosedFormOracle, OracleValues, ProblemKind, ToyProblem};
pub use solver::{Budget, RunStatus, ScheduleParams, SolverError, SolverState, StepSizes, Strategy};
