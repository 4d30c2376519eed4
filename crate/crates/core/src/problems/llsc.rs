use std::sync::OnceLock;

use crate::linalg::{Matrix, SpdMatrix, Vector};
use crate::problem::{BilevelProblem, ProblemError, ProblemMetadata};

use super::{ClosedFormOracle, OracleValues};

/// Toy problem with a strongly convex lower level:
///
/// ```text
/// F(x, y) = ½‖x − z₀‖² + ½yᵀAy
/// f(x, y) = ½yᵀAy − xᵀy
/// ```
///
/// with `A` symmetric positive definite. `y*(x) = A⁻¹x` and
/// `Φ(x) = ½‖x − z₀‖² + ½xᵀA⁻¹x`, minimized at `x* = A(A + I)⁻¹z₀`.
#[derive(Debug)]
pub struct LlscProblem {
    a: SpdMatrix,
    z0: Vector,
    lambda_min: f64,
    lambda_max: Option<f64>,
    solution: OnceLock<Vector>,
}

impl LlscProblem {
    /// Builds the problem, computing `λ_min(A)` by a symmetric
    /// eigendecomposition.
    pub fn new(a: Matrix, z0: Vector) -> Result<Self, ProblemError> {
        let eigen = symmetric_eigenvalues(&a);
        let lambda_min = eigen.iter().copied().fold(f64::INFINITY, f64::min);
        let lambda_max = eigen.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self::with_spectrum(a, z0, lambda_min, Some(lambda_max))
    }

    /// Builds the problem with a known smallest eigenvalue of `A`.
    pub fn with_spectrum(
        a: Matrix,
        z0: Vector,
        lambda_min: f64,
        lambda_max: Option<f64>,
    ) -> Result<Self, ProblemError> {
        if a.rows() != z0.dim() {
            return Err(ProblemError::DimensionMismatch {
                what: "z0",
                expected: a.rows(),
                got: z0.dim(),
            });
        }
        if !(lambda_min > 0.0) {
            return Err(ProblemError::InvalidParameter(format!(
                "A must be positive definite, smallest eigenvalue is {lambda_min}"
            )));
        }
        let a = a.into_spd()?;
        Ok(Self {
            a,
            z0,
            lambda_min,
            lambda_max,
            solution: OnceLock::new(),
        })
    }

    /// `A = I`, `z₀ = e`, with solution `x* = y* = e/2`.
    pub fn identity(n: usize) -> Result<Self, ProblemError> {
        if n == 0 {
            return Err(ProblemError::InvalidParameter("dimension n must be at least 1".into()));
        }
        Self::with_spectrum(Matrix::identity(n), Vector::ones(n), 1.0, Some(1.0))
    }

    pub fn n(&self) -> usize {
        self.z0.dim()
    }

    pub fn a(&self) -> &SpdMatrix {
        &self.a
    }

    pub fn z0(&self) -> &Vector {
        &self.z0
    }

    pub fn lambda_min(&self) -> f64 {
        self.lambda_min
    }

    pub fn lambda_max(&self) -> Option<f64> {
        self.lambda_max
    }

    /// Surrogate quantities at `μ ∈ [0, 1]`:
    /// `y*_μ = (1−μ)A⁻¹x`, `v*_μ = A⁻¹∇_yF(x, y*_μ)`,
    /// `∇Φ_μ = (x − z₀) + (1−μ)²A⁻¹x`.
    pub fn oracle_at(&self, x: &Vector, mu: f64) -> Result<OracleValues, ProblemError> {
        if x.dim() != self.n() {
            return Err(ProblemError::DimensionMismatch {
                what: "x",
                expected: self.n(),
                got: x.dim(),
            });
        }
        surrogate_values(&self.a, &self.z0, x, mu)
    }
}

/// Closed-form values of the LLSC problem for an explicit `A` and `z₀`:
/// `y* = A⁻¹x`, `v* = A⁻¹(Ay*)`, `Φ = ½‖x − z₀‖² + ½xᵀA⁻¹x`,
/// `∇Φ = (x − z₀) + A⁻¹x`.
pub fn llsc_oracle(a: &Matrix, z0: &Vector, x: &Vector) -> Result<OracleValues, ProblemError> {
    for (what, got) in [("z0", z0.dim()), ("x", x.dim())] {
        if got != a.rows() {
            return Err(ProblemError::DimensionMismatch {
                what,
                expected: a.rows(),
                got,
            });
        }
    }
    surrogate_values(&a.clone().into_spd()?, z0, x, 0.0)
}

fn surrogate_values(a: &SpdMatrix, z0: &Vector, x: &Vector, mu: f64) -> Result<OracleValues, ProblemError> {
    if !(0.0..=1.0).contains(&mu) {
        return Err(ProblemError::InvalidParameter(format!(
            "llsc oracle needs 0 <= mu <= 1, got {mu}"
        )));
    }
    let a_inv_x = a.solve(x);
    let w = 1.0 - mu;
    let y_star = a_inv_x.scaled(w);
    // ∇²_yy ψ_μ = A for every μ here, and ∇_yF(x, y) = Ay.
    let ay = a.matvec(&y_star);
    let v_star = a.solve(&ay);
    let mut grad_phi = x.sub(z0);
    grad_phi.axpy(w * w, &a_inv_x);
    Ok(OracleValues {
        phi: 0.5 * x.sub(z0).norm_sq() + 0.5 * y_star.dot(&ay),
        y_star,
        v_star,
        grad_phi,
    })
}

impl BilevelProblem for LlscProblem {
    fn dim_x(&self) -> usize {
        self.n()
    }

    fn dim_y(&self) -> usize {
        self.n()
    }

    fn upper_value(&self, x: &Vector, y: &Vector) -> f64 {
        0.5 * x.sub(&self.z0).norm_sq() + 0.5 * y.dot(&self.a.matvec(y))
    }

    fn lower_value(&self, x: &Vector, y: &Vector) -> f64 {
        0.5 * y.dot(&self.a.matvec(y)) - x.dot(y)
    }

    fn grad_x_upper(&self, x: &Vector, _y: &Vector) -> Vector {
        x.sub(&self.z0)
    }

    fn grad_y_upper(&self, _x: &Vector, y: &Vector) -> Vector {
        self.a.matvec(y)
    }

    fn grad_y_lower(&self, x: &Vector, y: &Vector) -> Vector {
        self.a.matvec(y).sub(x)
    }

    fn hvp_yy_upper(&self, _x: &Vector, _y: &Vector, v: &Vector) -> Vector {
        self.a.matvec(v)
    }

    fn hvp_yy_lower(&self, _x: &Vector, _y: &Vector, v: &Vector) -> Vector {
        self.a.matvec(v)
    }

    fn jvp_xy_upper(&self, _x: &Vector, _y: &Vector, _v: &Vector) -> Vector {
        Vector::zeros(self.n())
    }

    fn jvp_xy_lower(&self, _x: &Vector, _y: &Vector, v: &Vector) -> Vector {
        v.scaled(-1.0)
    }

    fn metadata(&self) -> ProblemMetadata {
        let mut meta = ProblemMetadata {
            sigma_upper: Some(self.lambda_min),
            sigma_lower: Some(self.lambda_min),
            upper_lower_bound: Some(0.0),
            ..ProblemMetadata::default()
        };
        if let Some(l) = self.lambda_max {
            meta.lipschitz.insert("L_Fy2".into(), l);
            meta.lipschitz.insert("L_fy2".into(), l);
        }
        meta
    }
}

impl ClosedFormOracle for LlscProblem {
    fn oracle(&self, x: &Vector, mu: f64) -> Result<OracleValues, ProblemError> {
        self.oracle_at(x, mu)
    }

    fn solution(&self) -> Vector {
        self.solution
            .get_or_init(|| {
                let n = self.n();
                let mut shifted = self.a.matrix().clone();
                for i in 0..n {
                    shifted.set(i, i, shifted.get(i, i) + 1.0);
                }
                let w = shifted
                    .cholesky()
                    .expect("A + I is positive definite when A is")
                    .solve(&self.z0);
                self.a.matvec(&w)
            })
            .clone()
    }
}

fn symmetric_eigenvalues(a: &Matrix) -> Vec<f64> {
    if !a.is_square() {
        return Vec::new();
    }
    let m = nalgebra::DMatrix::from_row_slice(a.rows(), a.cols(), a.as_slice());
    m.symmetric_eigenvalues().iter().copied().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_oracle_at_half() {
        let p = LlscProblem::identity(4).unwrap();
        let x = Vector::filled(4, 0.5);
        let o = p.oracle_at(&x, 0.0).unwrap();
        assert_eq!(o.y_star, x);
        assert_eq!(o.v_star, x);
        assert_eq!(o.grad_phi, Vector::zeros(4));
        assert!(p.solution().distance(&x) < 1e-15);
    }

    #[test]
    fn identity_oracle_at_origin() {
        let n = 6;
        let p = LlscProblem::identity(n).unwrap();
        let o = p.oracle_at(&Vector::zeros(n), 0.0).unwrap();
        assert_eq!(o.y_star, Vector::zeros(n));
        assert_eq!(o.v_star, Vector::zeros(n));
        assert_eq!(o.phi, n as f64 / 2.0);
        assert_eq!(o.grad_phi, Vector::filled(n, -1.0));
    }

    #[test]
    fn scalar_instance() {
        let o = llsc_oracle(&Matrix::from_diag(&[2.0]), &Vector::from([1.0]), &Vector::from([2.0])).unwrap();
        assert!((o.y_star[0] - 1.0).abs() < 1e-15);
        assert!((o.v_star[0] - 1.0).abs() < 1e-15);
        assert!((o.grad_phi[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn eigen_route_finds_lambda_min() {
        let a = Matrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let p = LlscProblem::new(a, Vector::ones(2)).unwrap();
        assert!((p.lambda_min() - 1.0).abs() < 1e-12);
        assert!((p.lambda_max().unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn non_spd_rejected() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(LlscProblem::new(a, Vector::ones(2)).is_err());
    }

    #[test]
    fn default_instance_value() {
        let p = LlscProblem::identity(1).unwrap();
        assert_eq!(p.upper_value(&Vector::zeros(1), &Vector::zeros(1)), 0.5);
    }
}
