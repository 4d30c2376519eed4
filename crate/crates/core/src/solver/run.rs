use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::problem::BilevelProblem;

use super::schedule::{BetaBoundPolicy, ScheduleParams, StepSizes};
use super::step::{direction_v, direction_x, direction_y, kkt_residual, Directions, SolverState};
use super::SolverError;

/// Stopping budget.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub max_iters: u64,
    pub kkt_tol: Option<f64>,
    pub wall_clock_limit: Option<Duration>,
}

impl Budget {
    pub fn iterations(max_iters: u64) -> Self {
        Self {
            max_iters,
            kkt_tol: None,
            wall_clock_limit: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    /// Iteration budget exhausted.
    Completed,
    /// KKT residual reached the tolerance.
    Converged,
    TimeLimit,
    Diverged,
}

impl RunStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Completed => "completed",
            Self::Converged => "converged",
            Self::TimeLimit => "time_limit",
            Self::Diverged => "diverged",
        }
    }
}

/// Per-iteration timing of the three updates, measured separately.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepTiming {
    pub y: Duration,
    pub v: Duration,
    pub x: Duration,
    pub total: Duration,
}

impl StepTiming {
    /// Cost of the iteration if the three updates ran concurrently.
    pub fn parallel(&self) -> Duration {
        self.y.max(self.v).max(self.x)
    }
}

/// What the observer sees at each recorded iterate.
pub struct IterationView<'a> {
    pub state: &'a SolverState,
    /// Step sizes that move this iterate to the next one.
    pub sizes: &'a StepSizes,
    /// Directions at this iterate.
    pub directions: &'a Directions,
    pub upper_value: f64,
    pub kkt: f64,
    /// Cumulative algorithm time to reach this iterate.
    pub wall_time: Duration,
    pub parallel_time: Duration,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverRecord {
    pub k: u64,
    pub upper_value: f64,
    pub kkt: f64,
    pub dx_norm: f64,
    pub sizes: StepSizes,
    pub wall_time_s: f64,
    pub parallel_time_s: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutcome {
    /// Last finite iterate.
    pub final_state: SolverState,
    /// One record per iterate, starting with the initial one.
    pub records: Vec<SolverRecord>,
    pub status: RunStatus,
    pub warnings: Vec<String>,
}

/// Runs the single-loop method from `init`.
///
/// Each iterate `k = 0, 1, …` is recorded (and passed to `observer`) before
/// the step away from it, so the trace holds `max_iters + 1` records when the
/// budget is exhausted. A non-finite iterate ends the run with
/// [`RunStatus::Diverged`] and the partial trace; it is not an error.
///
/// Times cover the direction evaluations and updates only; KKT evaluation
/// and the observer are excluded.
pub fn run<P: BilevelProblem + ?Sized>(
    problem: &P,
    params: &ScheduleParams,
    init: &SolverState,
    budget: &Budget,
    observer: &mut dyn FnMut(&IterationView<'_>),
) -> Result<RunOutcome, SolverError> {
    if budget.max_iters < 1 {
        return Err(SolverError::InvalidParameter {
            name: "max_iters",
            reason: "max_iters must be at least 1".into(),
        });
    }
    let mut warnings = params.validate()?;
    init.check(problem)?;

    let step_bound = problem.metadata().lower_step_bound();
    let mut bound_warned = false;

    let mut state = init.clone();
    let mut records = Vec::with_capacity(budget.max_iters as usize + 1);
    let mut wall = Duration::ZERO;
    let mut parallel = Duration::ZERO;
    let mut done = 0u64;
    let status;

    loop {
        let mut sizes = params.step_sizes(state.k);
        if let Some(bound) = step_bound {
            if sizes.beta > bound {
                match params.beta_bound {
                    BetaBoundPolicy::Enforce => sizes.beta = bound,
                    BetaBoundPolicy::Warn if !bound_warned => {
                        bound_warned = true;
                        let msg = format!(
                            "beta_k = {} exceeds 1/(L_Fy2 + L_fy2) = {bound} at k = {}",
                            sizes.beta, state.k
                        );
                        log::warn!("{msg}");
                        warnings.push(msg);
                    }
                    BetaBoundPolicy::Warn => {}
                }
            }
        }

        let mut timing = StepTiming::default();
        let clock = Instant::now();
        let (d_y, t_y) = timed(|| direction_y(problem, sizes.mu, &state.x, &state.y));
        let (d_v, t_v) = timed(|| direction_v(problem, sizes.mu, &state.x, &state.y, &state.v));
        let (d_x, t_x) = timed(|| direction_x(problem, sizes.mu, &state.x, &state.y, &state.v));
        let directions = Directions {
            d_y: d_y?,
            d_v: d_v?,
            d_x: d_x?,
        };
        let direction_time = clock.elapsed();

        let kkt = kkt_residual(problem, &state.x, &state.y, &state.v)?;
        let upper_value = problem.upper_value(&state.x, &state.y);
        records.push(SolverRecord {
            k: state.k,
            upper_value,
            kkt,
            dx_norm: directions.d_x.norm(),
            sizes,
            wall_time_s: wall.as_secs_f64(),
            parallel_time_s: parallel.as_secs_f64(),
        });
        observer(&IterationView {
            state: &state,
            sizes: &sizes,
            directions: &directions,
            upper_value,
            kkt,
            wall_time: wall,
            parallel_time: parallel,
        });

        if done >= budget.max_iters {
            status = RunStatus::Completed;
            break;
        }
        if budget.kkt_tol.is_some_and(|tol| kkt <= tol) {
            status = RunStatus::Converged;
            break;
        }
        if budget.wall_clock_limit.is_some_and(|limit| wall >= limit) {
            status = RunStatus::TimeLimit;
            break;
        }

        let clock = Instant::now();
        let mut next = state.clone();
        let ((), u_y) = timed(|| next.y.axpy(-sizes.beta, &directions.d_y));
        let ((), u_v) = timed(|| next.v.axpy(sizes.eta, &directions.d_v));
        let ((), u_x) = timed(|| next.x.axpy(-sizes.alpha, &directions.d_x));
        next.k += 1;
        timing.y = t_y + u_y;
        timing.v = t_v + u_v;
        timing.x = t_x + u_x;
        timing.total = direction_time + clock.elapsed();
        wall += timing.total;
        parallel += timing.parallel().min(timing.total);

        if !next.is_finite() {
            log::warn!("non-finite iterate at k = {}; run stopped", next.k);
            status = RunStatus::Diverged;
            break;
        }
        state = next;
        done += 1;
    }

    Ok(RunOutcome {
        final_state: state,
        records,
        status,
        warnings,
    })
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let clock = Instant::now();
    let out = f();
    (out, clock.elapsed())
}
