use crate::baselines::{outer_loop, EngineKind, OuterView};
use crate::diagnostics::{error_decomposition, lyapunov_value};
use crate::linalg::Vector;
use crate::problem::BilevelProblem;
use crate::problems::{make_problem, ClosedFormOracle, ToyProblem};
use crate::solver::{run, IterationView, SolverState};

use super::config::{Method, RunConfig};
use super::trace::{IterateRecord, Trace, TraceMetadata};
use super::HarnessError;

/// Builds the configured toy problem.
pub fn build_problem(cfg: &RunConfig) -> Result<ToyProblem, HarnessError> {
    let p = &cfg.problem;
    Ok(make_problem(p.kind, p.n, Some(p.seed), Some(p.condition_number))?)
}

/// Runs one experiment and returns its trace.
///
/// Every iterate `k = 0, …, K` is recorded, so a completed run has
/// `max_iters + 1` records. The closed-form oracle of the toy problem is
/// evaluated at the aggregation weight of each iterate (`μ = 0` for the
/// baselines). A diverged run is not an error: the trace ends at the last
/// finite iterate and its status says `diverged`.
pub fn run_experiment(cfg: &RunConfig) -> Result<Trace, HarnessError> {
    let mut warnings = cfg.validate()?;
    let problem = build_problem(cfg)?;
    run_on(cfg, &problem, &mut warnings)
}

pub(crate) fn run_on(cfg: &RunConfig, problem: &ToyProblem, warnings: &mut Vec<String>) -> Result<Trace, HarnessError> {
    let x_star = problem.solution();
    let n = problem.dim_x();
    let m = problem.dim_y();
    let x0 = Vector::filled(n, cfg.init.x);
    let y0 = Vector::filled(m, cfg.init.y);
    let mut records = Vec::with_capacity(cfg.budget.max_iters as usize + 1);
    let mut oracle_failure: Option<String> = None;

    let (status, final_x, solve_failures) = match cfg.method {
        Method::SlBamm(strategy) => {
            let params = cfg.schedule.to_params(strategy);
            let init = SolverState::new(x0, y0, Vector::filled(m, cfg.init.v));
            let mut observe = |view: &IterationView<'_>| {
                let s = view.state;
                let mut record = IterateRecord {
                    k: s.k,
                    wall_time_s: view.wall_time.as_secs_f64(),
                    parallel_time_s: view.parallel_time.as_secs_f64(),
                    f: view.upper_value,
                    kkt: Some(view.kkt),
                    x_err: None,
                    y_err: None,
                    v_err: None,
                    hypergrad_err: None,
                    grad_phi_norm: None,
                    mu: Some(view.sizes.mu),
                    alpha: Some(view.sizes.alpha),
                    beta: Some(view.sizes.beta),
                    eta: Some(view.sizes.eta),
                    lyapunov_v: None,
                    dx_norm: view.directions.d_x.norm(),
                    x_rel_err: None,
                    hypergrad_rel_err: None,
                };
                match problem.oracle(&s.x, view.sizes.mu) {
                    Ok(oracle) => {
                        if let Ok(d) =
                            error_decomposition(problem, &x_star, &oracle, &s.x, &s.y, Some(&s.v), &view.directions.d_x)
                        {
                            record.x_err = Some(d.x_err);
                            record.y_err = Some(d.y_err);
                            record.v_err = d.v_err;
                            record.hypergrad_err = Some(d.hypergrad_err);
                        }
                        record.grad_phi_norm = Some(oracle.grad_phi.norm());
                        record.lyapunov_v = lyapunov_value(problem, &params, s.k, s, &oracle).map(|v| v.value);
                    }
                    Err(e) => {
                        oracle_failure.get_or_insert_with(|| format!("oracle unavailable at k = {}: {e}", s.k));
                    }
                }
                records.push(record);
            };
            let outcome = run(problem, &params, &init, &cfg.budget.to_budget(), &mut observe)?;
            for w in outcome.warnings {
                if !warnings.contains(&w) {
                    warnings.push(w);
                }
            }
            (outcome.status, outcome.final_state.x, 0)
        }
        Method::Baseline(kind) => {
            let engine = cfg.engine.to_engine(kind);
            let mu = if kind == EngineKind::Bda { engine.bda_mu } else { 0.0 };
            let mut observe = |view: &OuterView<'_>| {
                let mut record = IterateRecord {
                    k: view.k,
                    wall_time_s: view.wall_time.as_secs_f64(),
                    parallel_time_s: view.parallel_time.as_secs_f64(),
                    f: view.upper_value,
                    kkt: view.kkt,
                    x_err: None,
                    y_err: None,
                    v_err: None,
                    hypergrad_err: None,
                    grad_phi_norm: None,
                    mu: Some(mu),
                    alpha: Some(cfg.engine.ul_lr),
                    beta: Some(engine.inner_lr),
                    eta: None,
                    lyapunov_v: None,
                    dx_norm: view.d_x.norm(),
                    x_rel_err: None,
                    hypergrad_rel_err: None,
                };
                match problem.oracle(view.x, 0.0) {
                    Ok(oracle) => {
                        if let Ok(d) = error_decomposition(problem, &x_star, &oracle, view.x, view.y, view.v, view.d_x)
                        {
                            record.x_err = Some(d.x_err);
                            record.y_err = Some(d.y_err);
                            record.v_err = d.v_err;
                            record.hypergrad_err = Some(d.hypergrad_err);
                        }
                        record.grad_phi_norm = Some(oracle.grad_phi.norm());
                    }
                    Err(e) => {
                        oracle_failure.get_or_insert_with(|| format!("oracle unavailable at k = {}: {e}", view.k));
                    }
                }
                records.push(record);
            };
            let outcome = outer_loop(
                &engine,
                problem,
                &x0,
                &y0,
                cfg.engine.ul_lr,
                &cfg.budget.to_budget(),
                cfg.engine.warm_start,
                &mut observe,
            )?;
            if outcome.solve_failures > 0 {
                warnings.push(format!(
                    "{} of {} linear solves did not converge",
                    outcome.solve_failures,
                    outcome.records.len()
                ));
            }
            (outcome.status, outcome.final_x, outcome.solve_failures)
        }
    };
    let scale = x_star.norm();
    if scale > 0.0 {
        for r in &mut records {
            r.x_rel_err = r.x_err.map(|e| e / scale);
            r.hypergrad_rel_err = r.hypergrad_err.map(|e| e / scale);
        }
    }
    if let Some(msg) = oracle_failure {
        log::warn!("{msg}");
        warnings.push(msg);
    }

    Ok(Trace {
        metadata: TraceMetadata {
            config: cfg.clone(),
            status,
            warnings: std::mem::take(warnings),
            solve_failures,
            oracle: true,
            final_x,
        },
        records,
    })
}
