use crate::linalg::{cg_solve, FnOperator, Vector};
use crate::problem::{check_dims, AggregationContext, BilevelProblem};

use super::BaselineError;

/// Relative NS residual above which the truncated series is flagged.
pub const DEFAULT_NS_RESIDUAL_TOL: f64 = 0.05;

/// Runs `T` steps of gradient descent on `ψ_μ(x, ·)` from `y0`:
/// `y_t = y_{t−1} − β ∇_y ψ_μ(x, y_{t−1})`.
///
/// Returns `y_T` and the full path `y_0, …, y_T`.
pub fn inner_gd<P: BilevelProblem + ?Sized>(
    problem: &P,
    x: &Vector,
    y0: &Vector,
    beta: f64,
    steps: usize,
    mu: f64,
) -> Result<(Vector, Vec<Vector>), BaselineError> {
    if steps < 1 {
        return Err(BaselineError::invalid("inner_steps", "T must be at least 1"));
    }
    check_dims(problem, x, y0, None)?;
    let ctx = AggregationContext::new(problem, mu);
    let mut path = Vec::with_capacity(steps + 1);
    path.push(y0.clone());
    let mut y = y0.clone();
    for t in 1..=steps {
        let g = ctx.grad_y(x, &y)?;
        y.axpy(-beta, &g);
        if !y.is_finite() {
            return Err(BaselineError::InnerDiverged { t });
        }
        path.push(y.clone());
    }
    Ok((y, path))
}

/// Reverse-mode hypergradient through [`inner_gd`]: the total derivative
/// of `F(x, y_T(x))` with `y0` held fixed.
///
/// ```text
/// a ← ∇_yF(x, y_T),  g ← ∇_xF(x, y_T)
/// for t = T … 1:
///     g ← g − β ∇²_xy ψ_μ(x, y_{t−1}) a
///     a ← a − β ∇²_yy ψ_μ(x, y_{t−1}) a
/// ```
///
/// `mu > 0` gives the aggregated (BDA-style) variant. Returns `(g, y_T)`.
pub fn rhg_hypergradient<P: BilevelProblem + ?Sized>(
    problem: &P,
    x: &Vector,
    y0: &Vector,
    beta: f64,
    steps: usize,
    mu: f64,
) -> Result<(Vector, Vector), BaselineError> {
    let (y_t, path) = inner_gd(problem, x, y0, beta, steps, mu)?;
    let ctx = AggregationContext::new(problem, mu);
    let mut a = problem.grad_y_upper(x, &y_t);
    let mut g = problem.grad_x_upper(x, &y_t);
    for y_prev in path[..steps].iter().rev() {
        g.axpy(-beta, &ctx.jvp_xy(x, y_prev, &a)?);
        a.axpy(-beta, &ctx.hvp_yy(x, y_prev, &a)?);
    }
    Ok((g, y_t))
}

/// Hypergradient from an approximate linear solve with `∇²_yy f`.
#[derive(Clone, Debug, PartialEq)]
pub struct AidOutcome {
    /// `∇_xF − ∇²_xy f v`
    pub g: Vector,
    pub v: Vector,
    /// CG iterations, or the number of Neumann terms summed.
    pub iters: usize,
    /// CG: `‖Hv − ∇_yF‖`. NS: `‖s_{M+1}‖`, the first omitted term.
    pub residual_norm: f64,
    /// `‖∇_yF‖`
    pub rhs_norm: f64,
    pub converged: bool,
}

impl AidOutcome {
    pub fn relative_residual(&self) -> f64 {
        if self.rhs_norm > 0.0 {
            self.residual_norm / self.rhs_norm
        } else {
            self.residual_norm
        }
    }
}

/// CG-based implicit hypergradient at `(x, y)`:
/// `v = [∇²_yy f]⁻¹ ∇_yF` by CG, `g = ∇_xF − ∇²_xy f v`.
///
/// A singular `∇²_yy f` does not raise an error; the last CG iterate is used
/// and `converged` is false.
pub fn aid_cg_hypergradient<P: BilevelProblem + ?Sized>(
    problem: &P,
    x: &Vector,
    y: &Vector,
    tol: f64,
    max_iter: usize,
) -> Result<AidOutcome, BaselineError> {
    check_dims(problem, x, y, None)?;
    let rhs = problem.grad_y_upper(x, y);
    let op = FnOperator::new(problem.dim_y(), |w: &Vector| problem.hvp_yy_lower(x, y, w));
    let cg = cg_solve(&op, &rhs, tol, max_iter)?;
    let g = problem.grad_x_upper(x, y).sub(&problem.jvp_xy_lower(x, y, &cg.x));
    Ok(AidOutcome {
        g,
        v: cg.x,
        iters: cg.iters,
        residual_norm: cg.residual_norm,
        rhs_norm: rhs.norm(),
        converged: cg.converged && !cg.curvature_breakdown,
    })
}

/// Neumann-series implicit hypergradient at `(x, y)`:
///
/// ```text
/// s_0 = ∇_yF,  s_{i+1} = s_i − β ∇²_yy f s_i,  v = β Σ_{i=0}^{M} s_i
/// ```
///
/// The series converges when `β λ_max(∇²_yy f) < 1`; this is not checked.
/// `converged` compares `‖s_{M+1}‖ / ‖∇_yF‖` with
/// [`DEFAULT_NS_RESIDUAL_TOL`].
pub fn aid_ns_hypergradient<P: BilevelProblem + ?Sized>(
    problem: &P,
    x: &Vector,
    y: &Vector,
    beta: f64,
    terms: usize,
) -> Result<AidOutcome, BaselineError> {
    check_dims(problem, x, y, None)?;
    let rhs = problem.grad_y_upper(x, y);
    let mut s = rhs.clone();
    let mut sum = Vector::zeros(rhs.dim());
    for _ in 0..=terms {
        sum.axpy(1.0, &s);
        let hs = problem.hvp_yy_lower(x, y, &s);
        s.axpy(-beta, &hs);
    }
    let v = sum.scaled(beta);
    let g = problem.grad_x_upper(x, y).sub(&problem.jvp_xy_lower(x, y, &v));
    let mut out = AidOutcome {
        g,
        v,
        iters: terms + 1,
        residual_norm: s.norm(),
        rhs_norm: rhs.norm(),
        converged: false,
    };
    out.converged = out.g.is_finite() && out.relative_residual() <= DEFAULT_NS_RESIDUAL_TOL;
    Ok(out)
}
