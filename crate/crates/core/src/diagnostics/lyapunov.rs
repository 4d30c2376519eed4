use serde::{Deserialize, Serialize};

use crate::problem::BilevelProblem;
use crate::problems::OracleValues;
use crate::solver::{ScheduleParams, SolverState, Strategy};

/// Weights `(a_k, b_k, c_k)` of
/// `V_k = a_k [Φ_μ(x_k) − F₀] + b_k ‖y_k − y*_μ(x_k)‖² + c_k ‖v_k − v*_μ(x_k)‖²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovCoefficients {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl LyapunovCoefficients {
    /// Coefficients for `strategy` at iteration `k`, with `sigma` the
    /// strong-convexity modulus of `ψ_{μ_k}`:
    ///
    /// ```text
    /// S1: ((k+1)^{−τ}σ², (k+1)^{−τ/2}σ², (k+1)^{−τ}σ⁶)
    /// S2: ((k+1)^{−τ},   (k+1)^{−τ/2},   (k+1)^{−τ}σ³)
    /// S3: ((k+1)^{−τ},   (k+1)^{−τ/2},   (k+1)^{−τ}σ²)
    /// SC: (1, 1, 1)
    /// ```
    pub fn new(strategy: Strategy, tau: f64, k: u64, sigma: f64) -> Self {
        let t = (k + 1) as f64;
        let full = t.powf(-tau);
        let half = t.powf(-tau / 2.0);
        match strategy {
            Strategy::S1 => Self {
                a: full * sigma.powi(2),
                b: half * sigma.powi(2),
                c: full * sigma.powi(6),
            },
            Strategy::S2 => Self {
                a: full,
                b: half,
                c: full * sigma.powi(3),
            },
            Strategy::S3 => Self {
                a: full,
                b: half,
                c: full * sigma.powi(2),
            },
            Strategy::Sc => Self { a: 1.0, b: 1.0, c: 1.0 },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovValue {
    pub value: f64,
    pub coefficients: LyapunovCoefficients,
    /// `a_k [Φ_μ − F₀]`
    pub upper_gap: f64,
    /// `b_k ‖y − y*_μ‖²`
    pub y_term: f64,
    /// `c_k ‖v − v*_μ‖²`
    pub v_term: f64,
}

/// `V_k` at `state`, with `oracle` evaluated at the run's `μ_k`.
///
/// `σ` is taken at `μ_k`. Returns `None` (tracking disabled) when the problem
/// metadata lacks `σ_F`, `σ_f` or `F₀`.
pub fn lyapunov_value<P: BilevelProblem + ?Sized>(
    problem: &P,
    params: &ScheduleParams,
    k: u64,
    state: &SolverState,
    oracle: &OracleValues,
) -> Option<LyapunovValue> {
    let meta = problem.metadata();
    let f0 = meta.upper_lower_bound?;
    let mu = params.step_sizes(k).mu;
    let sigma = meta.sigma_psi(mu)?;
    let coefficients = LyapunovCoefficients::new(params.strategy, params.tau, k, sigma);
    let upper_gap = coefficients.a * (oracle.phi - f0);
    let y_term = coefficients.b * state.y.sub(&oracle.y_star).norm_sq();
    let v_term = coefficients.c * state.v.sub(&oracle.v_star).norm_sq();
    Some(LyapunovValue {
        value: upper_gap + y_term + v_term,
        coefficients,
        upper_gap,
        y_term,
        v_term,
    })
}
