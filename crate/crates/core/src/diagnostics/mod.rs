//! Runtime verification: finite-difference derivative checks, the Lyapunov
//! tracker, and oracle-error decomposition of iterates.

mod derivatives;
mod lyapunov;

pub use derivatives::{
    check_derivatives, DerivativeCheck, DerivativeReport, SamplePoint, CHECKED_DERIVATIVES, DERIVATIVE_TOL,
};
pub use lyapunov::{lyapunov_value, LyapunovCoefficients, LyapunovValue};

use serde::{Deserialize, Serialize};

use crate::linalg::Vector;
use crate::problem::BilevelProblem;
use crate::problems::OracleValues;
use crate::solver::{kkt_residual, SolverError};

/// Distances of an iterate from the closed-form quantities.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorDecomposition {
    /// `‖x − x*‖`
    pub x_err: f64,
    /// `‖y − y*_μ(x)‖`
    pub y_err: f64,
    /// `‖v − v*_μ(x)‖`, when the method has a multiplier.
    pub v_err: Option<f64>,
    /// `‖d_x − ∇Φ_μ(x)‖`
    pub hypergrad_err: f64,
    /// [`kkt_residual`] at `(x, y, v)`, when the method has a multiplier.
    pub kkt: Option<f64>,
}

/// Decomposes the error of `(x, y, v)` with direction `d_x`. `oracle` must be
/// evaluated at `x` and the aggregation weight the iterate belongs to.
pub fn error_decomposition<P: BilevelProblem + ?Sized>(
    problem: &P,
    x_star: &Vector,
    oracle: &OracleValues,
    x: &Vector,
    y: &Vector,
    v: Option<&Vector>,
    d_x: &Vector,
) -> Result<ErrorDecomposition, SolverError> {
    let kkt = v.map(|v| kkt_residual(problem, x, y, v)).transpose()?;
    Ok(ErrorDecomposition {
        x_err: x.distance(x_star),
        y_err: y.distance(&oracle.y_star),
        v_err: v.map(|v| v.distance(&oracle.v_star)),
        hypergrad_err: d_x.distance(&oracle.grad_phi),
        kkt,
    })
}
