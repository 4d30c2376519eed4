use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::linalg::Vector;
use crate::problem::{check_dims, BilevelProblem};
use crate::solver::{kkt_residual, Budget, RunStatus, SolverError};

use super::{BaselineError, EngineConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OuterRecord {
    pub k: u64,
    /// `F(x_k, y_k)` at the inner loop's output.
    pub upper_value: f64,
    /// KKT residual at `(x_k, y_k, v_k)` for engines that produce `v`.
    pub kkt: Option<f64>,
    pub dx_norm: f64,
    pub solve_converged: Option<bool>,
    pub wall_time_s: f64,
    /// Equal to `wall_time_s`: the engines have no independent updates.
    pub parallel_time_s: f64,
}

pub struct OuterView<'a> {
    pub k: u64,
    pub x: &'a Vector,
    /// Output of the inner loop at `x`.
    pub y: &'a Vector,
    pub v: Option<&'a Vector>,
    pub d_x: &'a Vector,
    pub upper_value: f64,
    pub kkt: Option<f64>,
    pub wall_time: Duration,
    pub parallel_time: Duration,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OuterOutcome {
    /// Last finite upper-level iterate.
    pub final_x: Vector,
    pub final_y: Vector,
    pub records: Vec<OuterRecord>,
    pub status: RunStatus,
    /// Evaluations whose linear solve was flagged as not converged.
    pub solve_failures: usize,
}

/// Gradient descent `x_{k+1} = x_k − ul_lr · g_k` with `g_k` from `engine`.
///
/// Every iterate `k = 0, …, K` is recorded with the direction evaluated at
/// it. With `warm_start` each inner loop starts from the previous inner
/// output; otherwise always from `y0`. Divergence (a non-finite direction,
/// iterate or inner iterate) ends the run with [`RunStatus::Diverged`].
/// `budget.kkt_tol` applies only to engines that produce a multiplier.
#[allow(clippy::too_many_arguments)]
pub fn outer_loop<P: BilevelProblem + ?Sized>(
    engine: &EngineConfig,
    problem: &P,
    x0: &Vector,
    y0: &Vector,
    ul_lr: f64,
    budget: &Budget,
    warm_start: bool,
    observer: &mut dyn FnMut(&OuterView<'_>),
) -> Result<OuterOutcome, BaselineError> {
    engine.validate()?;
    if budget.max_iters < 1 {
        return Err(BaselineError::invalid("max_iters", "max_iters must be at least 1"));
    }
    if !(ul_lr >= 0.0 && ul_lr.is_finite()) {
        return Err(BaselineError::invalid(
            "ul_lr",
            format!("ul_lr = {ul_lr} must be non-negative and finite"),
        ));
    }
    check_dims(problem, x0, y0, None)?;

    let mut x = x0.clone();
    let mut y_start = y0.clone();
    let mut final_y = y0.clone();
    let mut records = Vec::with_capacity(budget.max_iters as usize + 1);
    let mut wall = Duration::ZERO;
    let mut solve_failures = 0;
    let mut k = 0u64;
    let status;

    loop {
        let clock = Instant::now();
        let hg = match engine.hypergradient(problem, &x, &y_start) {
            Ok(hg) => hg,
            Err(BaselineError::InnerDiverged { t }) => {
                log::warn!("inner loop diverged at t = {t} (outer k = {k})");
                status = RunStatus::Diverged;
                break;
            }
            Err(e) => return Err(e),
        };
        let eval_time = clock.elapsed();
        if !hg.g.is_finite() {
            log::warn!("non-finite hypergradient at k = {k}");
            status = RunStatus::Diverged;
            break;
        }
        if hg.solve_converged == Some(false) {
            solve_failures += 1;
        }
        let kkt = match &hg.v {
            Some(v) => Some(kkt_residual(problem, &x, &hg.y, v).map_err(solver_to_baseline)?),
            None => None,
        };
        let upper_value = problem.upper_value(&x, &hg.y);
        records.push(OuterRecord {
            k,
            upper_value,
            kkt,
            dx_norm: hg.g.norm(),
            solve_converged: hg.solve_converged,
            wall_time_s: wall.as_secs_f64(),
            parallel_time_s: wall.as_secs_f64(),
        });
        observer(&OuterView {
            k,
            x: &x,
            y: &hg.y,
            v: hg.v.as_ref(),
            d_x: &hg.g,
            upper_value,
            kkt,
            wall_time: wall,
            parallel_time: wall,
        });
        final_y = hg.y.clone();

        if k >= budget.max_iters {
            status = RunStatus::Completed;
            break;
        }
        if let (Some(tol), Some(kkt)) = (budget.kkt_tol, kkt) {
            if kkt <= tol {
                status = RunStatus::Converged;
                break;
            }
        }
        if budget.wall_clock_limit.is_some_and(|limit| wall >= limit) {
            status = RunStatus::TimeLimit;
            break;
        }

        let clock = Instant::now();
        let mut next = x.clone();
        next.axpy(-ul_lr, &hg.g);
        if warm_start {
            y_start = hg.y;
        }
        wall += eval_time + clock.elapsed();
        if !next.is_finite() {
            log::warn!("non-finite iterate at k = {}", k + 1);
            status = RunStatus::Diverged;
            break;
        }
        x = next;
        k += 1;
    }

    Ok(OuterOutcome {
        final_x: x,
        final_y,
        records,
        status,
        solve_failures,
    })
}

fn solver_to_baseline(e: SolverError) -> BaselineError {
    match e {
        SolverError::Problem(p) => BaselineError::Problem(p),
        other => BaselineError::invalid("state", other.to_string()),
    }
}
