use super::matrix::LinearOperator;
use super::vector::Vector;
use super::LinalgError;

/// Result of [`cg_solve`].
#[derive(Clone, Debug, PartialEq)]
pub struct CgOutcome {
    pub x: Vector,
    pub iters: usize,
    /// `‖op(x) − b‖` of the returned iterate.
    pub residual_norm: f64,
    /// Residual met `tol · max(1, ‖b‖)`.
    pub converged: bool,
    /// Stopped early on a direction of (numerically) zero or negative
    /// curvature, i.e. the operator is singular or indefinite on the Krylov
    /// space explored so far.
    pub curvature_breakdown: bool,
}

/// Curvature below this fraction of the largest Rayleigh quotient seen so far
/// is treated as a null direction.
const CURVATURE_RTOL: f64 = 1e-12;

/// Conjugate gradient for `op(x) = b` starting from `x = 0`.
///
/// Stops when `‖r‖ ≤ tol · max(1, ‖b‖)`, after `max_iter` iterations, or when
/// a search direction has no positive curvature. The last two are reported
/// through [`CgOutcome`], not as errors. Non-finite values raise
/// [`LinalgError::Breakdown`].
pub fn cg_solve<O: LinearOperator + ?Sized>(
    op: &O,
    b: &Vector,
    tol: f64,
    max_iter: usize,
) -> Result<CgOutcome, LinalgError> {
    if op.dim() != b.dim() {
        return Err(LinalgError::DimensionMismatch {
            expected: op.dim(),
            got: b.dim(),
        });
    }
    if !(tol > 0.0) {
        return Err(LinalgError::InvalidArgument(format!(
            "cg tolerance must be positive, got {tol}"
        )));
    }
    if let Some(i) = b.first_non_finite() {
        return Err(LinalgError::Breakdown(format!(
            "right-hand side entry {i} is not finite"
        )));
    }

    let threshold = tol * b.norm().max(1.0);
    let mut x = Vector::zeros(b.dim());
    let mut r = b.clone();
    let mut rr = r.norm_sq();
    let mut p = r.clone();
    let mut max_curvature = 0.0f64;
    let mut iters = 0;
    let mut curvature_breakdown = false;

    while rr.sqrt() > threshold && iters < max_iter {
        let ap = op.apply(&p);
        if let Some(i) = ap.first_non_finite() {
            return Err(LinalgError::Breakdown(format!(
                "operator produced a non-finite entry {i} at iteration {iters}"
            )));
        }
        let pap = p.dot(&ap);
        let pp = p.norm_sq();
        max_curvature = max_curvature.max(pap / pp);
        if !(pap > CURVATURE_RTOL * max_curvature * pp) {
            curvature_breakdown = true;
            break;
        }
        let alpha = rr / pap;
        x.axpy(alpha, &p);
        r.axpy(-alpha, &ap);
        iters += 1;

        let mut rr_next = r.norm_sq();
        if rr_next.sqrt() <= threshold {
            // The recursive residual drifts from the true one; confirm before
            // declaring convergence and restart from the true residual if not.
            let true_r = b.sub(&op.apply(&x));
            let true_rr = true_r.norm_sq();
            if true_rr.sqrt() > threshold {
                r = true_r;
                rr = true_rr;
                p = r.clone();
                continue;
            }
            r = true_r;
            rr_next = true_rr;
        }
        if !rr_next.is_finite() || !alpha.is_finite() {
            return Err(LinalgError::Breakdown(format!(
                "non-finite recurrence value at iteration {iters}"
            )));
        }
        let beta = rr_next / rr;
        rr = rr_next;
        for (pi, ri) in p.iter_mut().zip(r.iter()) {
            *pi = ri + beta * *pi;
        }
    }

    let residual_norm = rr.sqrt();
    Ok(CgOutcome {
        x,
        iters,
        residual_norm,
        converged: residual_norm <= threshold,
        curvature_breakdown,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{direct_solve, FnOperator, Matrix};

    #[test]
    fn identity_converges_in_one_iteration() {
        let out = cg_solve(&Matrix::identity(3), &Vector::from([1.0, 2.0, 3.0]), 1e-12, 10).unwrap();
        assert_eq!(out.x.as_slice(), &[1.0, 2.0, 3.0]);
        assert_eq!(out.iters, 1);
        assert!(out.converged);
    }

    #[test]
    fn diagonal_system() {
        let out = cg_solve(&Matrix::from_diag(&[1.0, 2.0]), &Vector::from([1.0, 2.0]), 1e-12, 10).unwrap();
        assert!(out.iters <= 2);
        assert!((out.x[0] - 1.0).abs() < 1e-12 && (out.x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn singular_system_reports_non_convergence() {
        let out = cg_solve(&Matrix::from_diag(&[1.0, 0.0]), &Vector::from([0.0, 1.0]), 1e-10, 50).unwrap();
        assert!(out.residual_norm >= 1.0);
        assert!(!out.converged);
        assert!(out.curvature_breakdown);
    }

    #[test]
    fn zero_rhs_needs_no_iterations() {
        let out = cg_solve(&Matrix::identity(4), &Vector::zeros(4), 1e-10, 10).unwrap();
        assert_eq!(out.iters, 0);
        assert!(out.converged);
    }

    #[test]
    fn budget_exhaustion_is_not_an_error() {
        let a = Matrix::from_diag(&[1.0, 10.0, 100.0, 1000.0]);
        let out = cg_solve(&a, &Vector::ones(4), 1e-14, 1).unwrap();
        assert_eq!(out.iters, 1);
        assert!(!out.converged);
        assert!(out.residual_norm > 0.0);
    }

    #[test]
    fn non_finite_operator_is_breakdown() {
        let op = FnOperator::new(2, |v: &Vector| v.scaled(f64::NAN));
        assert!(matches!(
            cg_solve(&op, &Vector::ones(2), 1e-10, 10),
            Err(LinalgError::Breakdown(_))
        ));
    }

    #[test]
    fn invalid_tolerance_rejected() {
        assert!(cg_solve(&Matrix::identity(2), &Vector::ones(2), 0.0, 10).is_err());
    }

    #[test]
    fn matches_direct_solve_on_dense_spd() {
        let a = Matrix::from_rows(&[vec![4.0, 1.0, 0.5], vec![1.0, 3.0, 0.2], vec![0.5, 0.2, 2.0]]).unwrap();
        let b = Vector::from([1.0, -2.0, 0.5]);
        let cg = cg_solve(&a, &b, 1e-13, 50).unwrap();
        let direct = direct_solve(&a, &b).unwrap();
        assert!(cg.x.distance(&direct) < 1e-12);
    }
}
