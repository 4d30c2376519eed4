use crate::linalg::Vector;
use crate::problem::{BilevelProblem, ProblemError, ProblemMetadata};

use super::{ClosedFormOracle, OracleValues};

/// Toy problem with a merely convex lower level and a continuum of
/// lower-level minimizers:
///
/// ```text
/// F(x, y) = ½‖x − y₂‖² + ½‖y₁ − e‖²
/// f(x, y) = ½‖y₁‖² − xᵀy₁,          y = (y₁, y₂) ∈ R^{2n}
/// ```
///
/// `f` does not depend on `y₂`, so `S(x) = {(x, w) : w ∈ R^n}`. The optimistic
/// solution is `x = y₁ = y₂ = e`.
#[derive(Clone, Debug, PartialEq)]
pub struct LlcProblem {
    n: usize,
}

impl LlcProblem {
    pub fn new(n: usize) -> Result<Self, ProblemError> {
        if n == 0 {
            return Err(ProblemError::InvalidParameter("dimension n must be at least 1".into()));
        }
        Ok(Self { n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn blocks<'a>(&self, y: &'a Vector) -> (&'a [f64], &'a [f64]) {
        y.split_at(self.n)
    }
}

impl BilevelProblem for LlcProblem {
    fn dim_x(&self) -> usize {
        self.n
    }

    fn dim_y(&self) -> usize {
        2 * self.n
    }

    fn upper_value(&self, x: &Vector, y: &Vector) -> f64 {
        let (y1, y2) = self.blocks(y);
        let a: f64 = x.iter().zip(y2).map(|(xi, yi)| (xi - yi) * (xi - yi)).sum();
        let b: f64 = y1.iter().map(|yi| (yi - 1.0) * (yi - 1.0)).sum();
        0.5 * (a + b)
    }

    fn lower_value(&self, x: &Vector, y: &Vector) -> f64 {
        let (y1, _) = self.blocks(y);
        y1.iter().zip(x.iter()).map(|(yi, xi)| 0.5 * yi * yi - xi * yi).sum()
    }

    fn grad_x_upper(&self, x: &Vector, y: &Vector) -> Vector {
        let (_, y2) = self.blocks(y);
        x.iter().zip(y2).map(|(xi, yi)| xi - yi).collect()
    }

    fn grad_y_upper(&self, x: &Vector, y: &Vector) -> Vector {
        let (y1, y2) = self.blocks(y);
        y1.iter()
            .map(|yi| yi - 1.0)
            .chain(y2.iter().zip(x.iter()).map(|(yi, xi)| yi - xi))
            .collect()
    }

    fn grad_y_lower(&self, x: &Vector, y: &Vector) -> Vector {
        let (y1, _) = self.blocks(y);
        y1.iter()
            .zip(x.iter())
            .map(|(yi, xi)| yi - xi)
            .chain(std::iter::repeat(0.0).take(self.n))
            .collect()
    }

    fn hvp_yy_upper(&self, _x: &Vector, _y: &Vector, v: &Vector) -> Vector {
        v.clone()
    }

    fn hvp_yy_lower(&self, _x: &Vector, _y: &Vector, v: &Vector) -> Vector {
        let (v1, _) = v.split_at(self.n);
        v1.iter().copied().chain(std::iter::repeat(0.0).take(self.n)).collect()
    }

    fn jvp_xy_upper(&self, _x: &Vector, _y: &Vector, v: &Vector) -> Vector {
        let (_, v2) = v.split_at(self.n);
        v2.iter().map(|vi| -vi).collect()
    }

    fn jvp_xy_lower(&self, _x: &Vector, _y: &Vector, v: &Vector) -> Vector {
        let (v1, _) = v.split_at(self.n);
        v1.iter().map(|vi| -vi).collect()
    }

    fn metadata(&self) -> ProblemMetadata {
        ProblemMetadata {
            sigma_upper: Some(1.0),
            sigma_lower: Some(0.0),
            upper_lower_bound: Some(0.0),
            lipschitz: [("L_Fy2".to_string(), 1.0), ("L_fy2".to_string(), 1.0)]
                .into_iter()
                .collect(),
        }
    }
}

/// Closed-form surrogate quantities of the LLC problem at `μ ∈ (0, 1]`:
///
/// ```text
/// y*_μ = (μe + (1−μ)x, x)      v*_μ = ((1−μ)(x − e), 0)
/// Φ_μ  = ½(1−μ)²‖x − e‖²       ∇Φ_μ = (1−μ)²(x − e)
/// ```
///
/// `μ = 0` is rejected: `y*_0` is not unique.
pub fn llc_oracle(x: &Vector, mu: f64) -> Result<OracleValues, ProblemError> {
    if !(mu > 0.0 && mu <= 1.0) {
        return Err(ProblemError::InvalidParameter(format!(
            "llc oracle needs 0 < mu <= 1, got {mu}"
        )));
    }
    Ok(llc_values(x, mu))
}

/// The `μ → 0⁺` limit of [`llc_oracle`]: the optimistic selection
/// `y* = (x, x)`, `v* = (x − e, 0)`, `Φ = ½‖x − e‖²`.
pub fn llc_oracle_limit(x: &Vector) -> OracleValues {
    llc_values(x, 0.0)
}

fn llc_values(x: &Vector, mu: f64) -> OracleValues {
    let n = x.dim();
    let w = 1.0 - mu;
    let gap: Vector = x.iter().map(|xi| xi - 1.0).collect();
    let y1: Vector = x.iter().map(|xi| mu + w * xi).collect();
    OracleValues {
        y_star: y1.concat(x),
        v_star: gap.scaled(w).concat(&Vector::zeros(n)),
        phi: 0.5 * w * w * gap.norm_sq(),
        grad_phi: gap.scaled(w * w),
    }
}

impl ClosedFormOracle for LlcProblem {
    fn oracle(&self, x: &Vector, mu: f64) -> Result<OracleValues, ProblemError> {
        if x.dim() != self.n {
            return Err(ProblemError::DimensionMismatch {
                what: "x",
                expected: self.n,
                got: x.dim(),
            });
        }
        if mu == 0.0 {
            Ok(llc_oracle_limit(x))
        } else {
            llc_oracle(x, mu)
        }
    }

    fn solution(&self) -> Vector {
        Vector::ones(self.n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_at_solution() {
        let e = Vector::ones(4);
        for mu in [0.1, 0.5, 0.9] {
            let o = llc_oracle(&e, mu).unwrap();
            assert_eq!(o.y_star, Vector::ones(8));
            assert_eq!(o.v_star, Vector::zeros(8));
            assert_eq!(o.phi, 0.0);
            assert_eq!(o.grad_phi, Vector::zeros(4));
        }
    }

    #[test]
    fn oracle_at_origin_half_weight() {
        let n = 5;
        let o = llc_oracle(&Vector::zeros(n), 0.5).unwrap();
        let (y1, y2) = o.y_star.split(n);
        assert_eq!(y1, Vector::filled(n, 0.5));
        assert_eq!(y2, Vector::zeros(n));
        let (v1, v2) = o.v_star.split(n);
        assert_eq!(v1, Vector::filled(n, -0.5));
        assert_eq!(v2, Vector::zeros(n));
        assert!((o.phi - 0.125 * n as f64).abs() < 1e-15);
    }

    #[test]
    fn multiplier_bound_at_origin() {
        // ‖v*‖ ≤ ‖∇_yF(x, y*_μ)‖ / σ_ψμ with σ_ψμ = μ σ_F = μ.
        let n = 7;
        let p = LlcProblem::new(n).unwrap();
        let x = Vector::zeros(n);
        let o = llc_oracle(&x, 0.5).unwrap();
        let bound = p.grad_y_upper(&x, &o.y_star).norm() / 0.5;
        assert!((o.v_star.norm() - 0.5 * (n as f64).sqrt()).abs() < 1e-12);
        assert!((bound - (n as f64).sqrt()).abs() < 1e-12);
        assert!(o.v_star.norm() <= bound);
    }

    #[test]
    fn oracle_rejects_non_positive_mu() {
        assert!(llc_oracle(&Vector::zeros(2), 0.0).is_err());
        assert!(llc_oracle(&Vector::zeros(2), -0.1).is_err());
    }

    #[test]
    fn lower_gradient_vanishes_on_solution_set() {
        let p = LlcProblem::new(2).unwrap();
        let e = Vector::ones(2);
        let g = p.grad_y_lower(&e, &e.concat(&Vector::zeros(2)));
        assert_eq!(g, Vector::zeros(4));
    }

    #[test]
    fn zero_dimension_rejected() {
        assert!(LlcProblem::new(0).is_err());
    }
}
