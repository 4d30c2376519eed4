//! The single-loop bilevel averaged method of multipliers.
//!
//! Each iteration moves the lower-level variable `y`, the multiplier `v` and
//! the upper-level variable `x` once, using directions evaluated at the same
//! incoming iterate:
//!
//! ```text
//! d_y = ∇_y ψ_μ(x, y)
//! d_v = ∇_y F(x, y) − ∇²_yy ψ_μ(x, y) v
//! d_x = ∇_x F(x, y) − ∇²_xy ψ_μ(x, y) v
//! y ← y − β d_y,   v ← v + η d_v,   x ← x − α d_x
//! ```
//!
//! with `ψ_μ = μF + (1−μ)f` and step sizes from [`ScheduleParams`].

mod run;
mod schedule;
mod step;

pub use run::{run, Budget, IterationView, RunOutcome, RunStatus, SolverRecord, StepTiming};
pub use schedule::{schedule_step_sizes, BetaBoundPolicy, BetaMode, ScheduleParams, StepSizes, Strategy};
pub use step::{
    apply_directions, direction_v, direction_x, direction_y, kkt_residual, slbamm_step, step_directions, Directions,
    SolverState,
};

use thiserror::Error;

use crate::problem::ProblemError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("invalid {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("iterate {k} contains non-finite entries")]
    NonFiniteState { k: u64 },
    #[error("iteration diverged at k = {k}")]
    Diverged { k: u64, last_finite: Box<SolverState> },
    #[error(transparent)]
    Problem(#[from] ProblemError),
}
