//! The bilevel problem abstraction and the aggregation `ψ_μ = μF + (1−μ)f`.
//!
//! A problem supplies the upper-level objective `F(x, y)` and lower-level
//! objective `f(x, y)` together with the first- and second-order actions the
//! solvers need. Second-order information is only ever accessed through
//! matrix-free products, so large problems never materialize a Hessian.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Vector;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("{what}: expected dimension {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid problem parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Linalg(#[from] crate::linalg::LinalgError),
}

/// Optional analysis constants attached to a problem.
///
/// None of the solvers need these; the Lyapunov tracker and the optional
/// lower-level step bound use them when present.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ProblemMetadata {
    /// Strong-convexity modulus of `F(x, ·)`.
    pub sigma_upper: Option<f64>,
    /// Strong-convexity modulus of `f(x, ·)` (zero for merely convex).
    pub sigma_lower: Option<f64>,
    /// Uniform lower bound `F₀` of `F`.
    pub upper_lower_bound: Option<f64>,
    /// Lipschitz constants keyed by name, e.g. `L_Fy2`, `L_fy2`.
    pub lipschitz: BTreeMap<String, f64>,
}

impl ProblemMetadata {
    /// `μ σ_F + (1−μ) σ_f`, the strong-convexity modulus of `ψ_μ(x, ·)`.
    pub fn sigma_psi(&self, mu: f64) -> Option<f64> {
        Some(mu * self.sigma_upper? + (1.0 - mu) * self.sigma_lower?)
    }

    /// `1 / (L_Fy2 + L_fy2)` when both constants are known.
    pub fn lower_step_bound(&self) -> Option<f64> {
        let sum = self.lipschitz.get("L_Fy2")? + self.lipschitz.get("L_fy2")?;
        (sum > 0.0).then(|| 1.0 / sum)
    }
}

/// A bilevel problem `min_x F(x, y)` s.t. `y ∈ argmin_y f(x, y)`.
///
/// `hvp_yy_*` return `∇²_yy · v` (length `dim_y`); `jvp_xy_*` return
/// `∇²_xy · v` for `v` of length `dim_y`, i.e. the gradient in `x` of
/// `⟨∇_y ·, v⟩` (length `dim_x`).
///
/// Implementations must be immutable after construction. Callers guarantee
/// argument dimensions; [`AggregationContext`] and the solver entry points
/// check them.
pub trait BilevelProblem: Send + Sync {
    fn dim_x(&self) -> usize;
    fn dim_y(&self) -> usize;

    fn upper_value(&self, x: &Vector, y: &Vector) -> f64;
    fn lower_value(&self, x: &Vector, y: &Vector) -> f64;

    fn grad_x_upper(&self, x: &Vector, y: &Vector) -> Vector;
    fn grad_y_upper(&self, x: &Vector, y: &Vector) -> Vector;
    fn grad_y_lower(&self, x: &Vector, y: &Vector) -> Vector;

    fn hvp_yy_upper(&self, x: &Vector, y: &Vector, v: &Vector) -> Vector;
    fn hvp_yy_lower(&self, x: &Vector, y: &Vector, v: &Vector) -> Vector;

    fn jvp_xy_upper(&self, x: &Vector, y: &Vector, v: &Vector) -> Vector;
    fn jvp_xy_lower(&self, x: &Vector, y: &Vector, v: &Vector) -> Vector;

    fn metadata(&self) -> ProblemMetadata {
        ProblemMetadata::default()
    }
}

impl<P: BilevelProblem + ?Sized> BilevelProblem for &P {
    fn dim_x(&self) -> usize {
        (**self).dim_x()
    }
    fn dim_y(&self) -> usize {
        (**self).dim_y()
    }
    fn upper_value(&self, x: &Vector, y: &Vector) -> f64 {
        (**self).upper_value(x, y)
    }
    fn lower_value(&self, x: &Vector, y: &Vector) -> f64 {
        (**self).lower_value(x, y)
    }
    fn grad_x_upper(&self, x: &Vector, y: &Vector) -> Vector {
        (**self).grad_x_upper(x, y)
    }
    fn grad_y_upper(&self, x: &Vector, y: &Vector) -> Vector {
        (**self).grad_y_upper(x, y)
    }
    fn grad_y_lower(&self, x: &Vector, y: &Vector) -> Vector {
        (**self).grad_y_lower(x, y)
    }
    fn hvp_yy_upper(&self, x: &Vector, y: &Vector, v: &Vector) -> Vector {
        (**self).hvp_yy_upper(x, y, v)
    }
    fn hvp_yy_lower(&self, x: &Vector, y: &Vector, v: &Vector) -> Vector {
        (**self).hvp_yy_lower(x, y, v)
    }
    fn jvp_xy_upper(&self, x: &Vector, y: &Vector, v: &Vector) -> Vector {
        (**self).jvp_xy_upper(x, y, v)
    }
    fn jvp_xy_lower(&self, x: &Vector, y: &Vector, v: &Vector) -> Vector {
        (**self).jvp_xy_lower(x, y, v)
    }
    fn metadata(&self) -> ProblemMetadata {
        (**self).metadata()
    }
}

/// Checks `x ∈ R^n`, `y ∈ R^m` and, when given, `v ∈ R^m`.
pub fn check_dims<P: BilevelProblem + ?Sized>(
    problem: &P,
    x: &Vector,
    y: &Vector,
    v: Option<&Vector>,
) -> Result<(), ProblemError> {
    let check = |what, expected, got| {
        if expected == got {
            Ok(())
        } else {
            Err(ProblemError::DimensionMismatch { what, expected, got })
        }
    };
    check("x", problem.dim_x(), x.dim())?;
    check("y", problem.dim_y(), y.dim())?;
    if let Some(v) = v {
        check("v", problem.dim_y(), v.dim())?;
    }
    Ok(())
}

/// A problem viewed through `ψ_μ = μF + (1−μ)f` for a fixed `μ ∈ [0, 1]`.
#[derive(Clone, Copy)]
pub struct AggregationContext<'a, P: ?Sized> {
    problem: &'a P,
    mu: f64,
}

impl<'a, P: BilevelProblem + ?Sized> AggregationContext<'a, P> {
    /// `mu` outside `[0, 1]` is clamped with a warning.
    pub fn new(problem: &'a P, mu: f64) -> Self {
        let clamped = if mu.is_nan() { 0.0 } else { mu.clamp(0.0, 1.0) };
        if clamped != mu {
            log::warn!("aggregation weight {mu} clamped to {clamped}");
        }
        Self { problem, mu: clamped }
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn problem(&self) -> &'a P {
        self.problem
    }

    pub fn value(&self, x: &Vector, y: &Vector) -> Result<f64, ProblemError> {
        check_dims(self.problem, x, y, None)?;
        let mu = self.mu;
        Ok(if mu == 0.0 {
            self.problem.lower_value(x, y)
        } else if mu == 1.0 {
            self.problem.upper_value(x, y)
        } else {
            mu * self.problem.upper_value(x, y) + (1.0 - mu) * self.problem.lower_value(x, y)
        })
    }

    /// `∇_y ψ_μ(x, y)`.
    pub fn grad_y(&self, x: &Vector, y: &Vector) -> Result<Vector, ProblemError> {
        check_dims(self.problem, x, y, None)?;
        Ok(self.combine(|| self.problem.grad_y_upper(x, y), || self.problem.grad_y_lower(x, y)))
    }

    /// `∇²_yy ψ_μ(x, y) v`.
    pub fn hvp_yy(&self, x: &Vector, y: &Vector, v: &Vector) -> Result<Vector, ProblemError> {
        check_dims(self.problem, x, y, Some(v))?;
        Ok(self.combine(
            || self.problem.hvp_yy_upper(x, y, v),
            || self.problem.hvp_yy_lower(x, y, v),
        ))
    }

    /// `∇²_xy ψ_μ(x, y) v`.
    pub fn jvp_xy(&self, x: &Vector, y: &Vector, v: &Vector) -> Result<Vector, ProblemError> {
        check_dims(self.problem, x, y, Some(v))?;
        Ok(self.combine(
            || self.problem.jvp_xy_upper(x, y, v),
            || self.problem.jvp_xy_lower(x, y, v),
        ))
    }

    // At the endpoints μ ∈ {0, 1} the unused side is skipped: for finite
    // values `0·a + 1·b == b` exactly, so the result is unchanged.
    fn combine(&self, upper: impl FnOnce() -> Vector, lower: impl FnOnce() -> Vector) -> Vector {
        match self.mu {
            0.0 => lower(),
            1.0 => upper(),
            mu => Vector::lincomb(mu, &upper(), 1.0 - mu, &lower()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{LlcProblem, LlscProblem};

    #[test]
    fn endpoints_select_one_level() {
        let p = LlcProblem::new(2).unwrap();
        let x = Vector::from([1.0, -2.0]);
        let y = Vector::from([0.5, 3.0, -1.0, 2.0]);
        let v = Vector::from([1.0, 0.0, -1.0, 4.0]);
        let lower = AggregationContext::new(&p, 0.0);
        let upper = AggregationContext::new(&p, 1.0);
        assert_eq!(lower.grad_y(&x, &y).unwrap(), p.grad_y_lower(&x, &y));
        assert_eq!(upper.grad_y(&x, &y).unwrap(), p.grad_y_upper(&x, &y));
        assert_eq!(lower.jvp_xy(&x, &y, &v).unwrap(), p.jvp_xy_lower(&x, &y, &v));
        assert_eq!(upper.hvp_yy(&x, &y, &v).unwrap(), p.hvp_yy_upper(&x, &y, &v));
        assert_eq!(upper.value(&x, &y).unwrap(), p.upper_value(&x, &y));
    }

    #[test]
    fn interior_weight_mixes_levels() {
        let p = LlcProblem::new(1).unwrap();
        let x = Vector::from([2.0]);
        let y = Vector::from([1.0, 3.0]);
        let ctx = AggregationContext::new(&p, 0.25);
        let want = 0.25 * p.upper_value(&x, &y) + 0.75 * p.lower_value(&x, &y);
        assert!((ctx.value(&x, &y).unwrap() - want).abs() < 1e-15);
        // ∇_y F = (y1 − 1, y2 − x) = (0, 1); ∇_y f = (y1 − x, 0) = (−1, 0).
        assert_eq!(ctx.grad_y(&x, &y).unwrap(), Vector::from([-0.75, 0.25]));
    }

    #[test]
    fn weight_is_clamped() {
        let p = LlscProblem::identity(1).unwrap();
        assert_eq!(AggregationContext::new(&p, 1.5).mu(), 1.0);
        assert_eq!(AggregationContext::new(&p, -0.2).mu(), 0.0);
        assert_eq!(AggregationContext::new(&p, f64::NAN).mu(), 0.0);
    }

    #[test]
    fn dimension_errors() {
        let p = LlscProblem::identity(2).unwrap();
        let ctx = AggregationContext::new(&p, 0.5);
        let two = Vector::zeros(2);
        assert!(ctx.grad_y(&Vector::zeros(3), &two).is_err());
        assert!(ctx.hvp_yy(&two, &two, &Vector::zeros(1)).is_err());
    }

    #[test]
    fn metadata_helpers() {
        let meta = LlcProblem::new(2).unwrap().metadata();
        assert_eq!(meta.sigma_psi(0.25), Some(0.25));
        assert_eq!(meta.lower_step_bound(), Some(0.5));
        assert_eq!(ProblemMetadata::default().sigma_psi(0.5), None);
        assert_eq!(ProblemMetadata::default().lower_step_bound(), None);
    }
}
