use serde::{Deserialize, Serialize};

use crate::linalg::Vector;
use crate::problem::{check_dims, AggregationContext, BilevelProblem};

use super::schedule::StepSizes;
use super::SolverError;

/// Iterate `(x_k, y_k, v_k)` with its counter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverState {
    pub k: u64,
    pub x: Vector,
    pub y: Vector,
    pub v: Vector,
}

impl SolverState {
    pub fn new(x: Vector, y: Vector, v: Vector) -> Self {
        Self { k: 0, x, y, v }
    }

    /// `x = y = v = 0`.
    pub fn zeros<P: BilevelProblem + ?Sized>(problem: &P) -> Self {
        Self::new(
            Vector::zeros(problem.dim_x()),
            Vector::zeros(problem.dim_y()),
            Vector::zeros(problem.dim_y()),
        )
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.v.is_finite()
    }

    pub fn check<P: BilevelProblem + ?Sized>(&self, problem: &P) -> Result<(), SolverError> {
        check_dims(problem, &self.x, &self.y, Some(&self.v))?;
        if !self.is_finite() {
            return Err(SolverError::NonFiniteState { k: self.k });
        }
        Ok(())
    }
}

/// The three update directions at one iterate.
#[derive(Clone, Debug, PartialEq)]
pub struct Directions {
    pub d_y: Vector,
    pub d_v: Vector,
    pub d_x: Vector,
}

/// `d_y = ∇_y ψ_μ(x, y)`
pub fn direction_y<P: BilevelProblem + ?Sized>(
    problem: &P,
    mu: f64,
    x: &Vector,
    y: &Vector,
) -> Result<Vector, SolverError> {
    Ok(AggregationContext::new(problem, mu).grad_y(x, y)?)
}

/// `d_v = ∇_y F(x, y) − ∇²_yy ψ_μ(x, y) v`
pub fn direction_v<P: BilevelProblem + ?Sized>(
    problem: &P,
    mu: f64,
    x: &Vector,
    y: &Vector,
    v: &Vector,
) -> Result<Vector, SolverError> {
    let hv = AggregationContext::new(problem, mu).hvp_yy(x, y, v)?;
    Ok(problem.grad_y_upper(x, y).sub(&hv))
}

/// `d_x = ∇_x F(x, y) − ∇²_xy ψ_μ(x, y) v`
pub fn direction_x<P: BilevelProblem + ?Sized>(
    problem: &P,
    mu: f64,
    x: &Vector,
    y: &Vector,
    v: &Vector,
) -> Result<Vector, SolverError> {
    let jv = AggregationContext::new(problem, mu).jvp_xy(x, y, v)?;
    Ok(problem.grad_x_upper(x, y).sub(&jv))
}

/// All three directions, evaluated at the same incoming `(x, y, v)`.
pub fn step_directions<P: BilevelProblem + ?Sized>(
    problem: &P,
    mu: f64,
    x: &Vector,
    y: &Vector,
    v: &Vector,
) -> Result<Directions, SolverError> {
    Ok(Directions {
        d_y: direction_y(problem, mu, x, y)?,
        d_v: direction_v(problem, mu, x, y, v)?,
        d_x: direction_x(problem, mu, x, y, v)?,
    })
}

/// `y' = y − β d_y`, `v' = v + η d_v`, `x' = x − α d_x`.
///
/// Fails with [`SolverError::Diverged`], carrying `state`, when any updated
/// entry is not finite.
pub fn apply_directions(state: &SolverState, dirs: &Directions, sizes: &StepSizes) -> Result<SolverState, SolverError> {
    let mut next = state.clone();
    next.y.axpy(-sizes.beta, &dirs.d_y);
    next.v.axpy(sizes.eta, &dirs.d_v);
    next.x.axpy(-sizes.alpha, &dirs.d_x);
    next.k += 1;
    if !next.is_finite() {
        return Err(SolverError::Diverged {
            k: next.k,
            last_finite: Box::new(state.clone()),
        });
    }
    Ok(next)
}

/// One iteration of the single-loop method.
///
/// The directions are all computed from the incoming iterate, so the three
/// updates commute.
pub fn slbamm_step<P: BilevelProblem + ?Sized>(
    problem: &P,
    state: &SolverState,
    sizes: &StepSizes,
) -> Result<SolverState, SolverError> {
    state.check(problem)?;
    let dirs = step_directions(problem, sizes.mu, &state.x, &state.y, &state.v)?;
    apply_directions(state, &dirs, sizes)
}

/// Squared norm of the Lagrangian gradient of the equality-constrained
/// reformulation:
///
/// ```text
/// ‖∇_xF − ∇²_xy f v‖² + ‖∇_yF − ∇²_yy f v‖² + ‖∇_y f‖²
/// ```
///
/// Uses the lower-level objective `f` itself, not `ψ_μ`.
pub fn kkt_residual<P: BilevelProblem + ?Sized>(
    problem: &P,
    x: &Vector,
    y: &Vector,
    v: &Vector,
) -> Result<f64, SolverError> {
    check_dims(problem, x, y, Some(v))?;
    let stationarity_x = problem.grad_x_upper(x, y).sub(&problem.jvp_xy_lower(x, y, v));
    let stationarity_y = problem.grad_y_upper(x, y).sub(&problem.hvp_yy_lower(x, y, v));
    let feasibility = problem.grad_y_lower(x, y);
    Ok(stationarity_x.norm_sq() + stationarity_y.norm_sq() + feasibility.norm_sq())
}
