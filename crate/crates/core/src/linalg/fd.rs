//! Central finite differences, used as independent oracles for the analytic
//! derivative actions.

use super::vector::Vector;
use super::LinalgError;

/// Default step for central differences in double precision.
pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// Central-difference gradient of `phi` at `x`:
/// component `i` is `(phi(x + h e_i) − phi(x − h e_i)) / 2h`.
pub fn fd_gradient<F>(phi: F, x: &Vector, h: f64) -> Result<Vector, LinalgError>
where
    F: Fn(&Vector) -> f64,
{
    check_step(h)?;
    let mut probe = x.clone();
    let mut grad = Vector::zeros(x.dim());
    for i in 0..x.dim() {
        probe[i] = x[i] + h;
        let plus = phi(&probe);
        probe[i] = x[i] - h;
        let minus = phi(&probe);
        probe[i] = x[i];
        if !plus.is_finite() || !minus.is_finite() {
            return Err(LinalgError::NonFiniteEvaluation { component: i });
        }
        grad[i] = (plus - minus) / (2.0 * h);
    }
    Ok(grad)
}

/// Central-difference directional derivative of the vector field `g` at `y`
/// along `v`: `(g(y + h v) − g(y − h v)) / 2h`.
///
/// With `g` a gradient this is a Hessian-vector product.
pub fn fd_hvp<G>(g: G, y: &Vector, v: &Vector, h: f64) -> Result<Vector, LinalgError>
where
    G: Fn(&Vector) -> Vector,
{
    check_step(h)?;
    if y.dim() != v.dim() {
        return Err(LinalgError::DimensionMismatch {
            expected: y.dim(),
            got: v.dim(),
        });
    }
    let mut plus_point = y.clone();
    plus_point.axpy(h, v);
    let mut minus_point = y.clone();
    minus_point.axpy(-h, v);
    let plus = g(&plus_point);
    let minus = g(&minus_point);
    if plus.dim() != minus.dim() {
        return Err(LinalgError::DimensionMismatch {
            expected: plus.dim(),
            got: minus.dim(),
        });
    }
    let out = plus.zip_map(&minus, |p, m| (p - m) / (2.0 * h));
    if let Some(component) = out.first_non_finite() {
        return Err(LinalgError::NonFiniteEvaluation { component });
    }
    Ok(out)
}

fn check_step(h: f64) -> Result<(), LinalgError> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(LinalgError::InvalidArgument(format!(
            "finite-difference step must be positive, got {h}"
        )))
    }
}
