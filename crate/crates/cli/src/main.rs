//! `bamm`: command-line front end for running, comparing and sweeping
//! bilevel solvers on the toy problems.

use std::path::PathBuf;
use std::process::ExitCode;

use bamm_core::diagnostics::{check_derivatives, DerivativeReport};
use bamm_core::harness::{
    compare, parse_config, run_experiment, sweep, write_sweep, write_trace, ConfigOverrides, HarnessError, Method,
    RunConfig, SweepParam, Target, TargetMetric, TimingMode, Trace, TraceFormat,
};
use bamm_core::solver::BetaMode;
use bamm_core::{make_problem, ClosedFormOracle, ProblemKind, Vector};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bamm", version, about = "Single-loop bilevel optimization on toy problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one method and write its trace.
    #[command(allow_negative_numbers = true)]
    Run {
        /// TOML configuration; flags override its values.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// Run several methods on one problem instance and report iterations to a target.
    #[command(allow_negative_numbers = true)]
    Compare {
        /// TOML configurations, one per method.
        #[arg(long = "config", conflicts_with = "methods")]
        configs: Vec<PathBuf>,
        /// Methods to run with the flag settings, e.g. `slbamm-s3,rhg,cg`.
        #[arg(long, value_delimiter = ',')]
        methods: Vec<Method>,
        #[arg(long, default_value = "dx_norm")]
        target_metric: TargetMetric,
        /// Threshold the metric has to reach.
        #[arg(long, default_value_t = 1e-3)]
        target: f64,
        /// JSON summary path.
        #[arg(long)]
        summary: Option<PathBuf>,
        /// Directory for one trace per method.
        #[arg(long)]
        trace_dir: Option<PathBuf>,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// Run one configuration over a list of values of one parameter.
    #[command(allow_negative_numbers = true)]
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        /// One of n, p, tau, T, M, eps.
        #[arg(long)]
        param: SweepParam,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        /// Directory for the traces and `summary.json`.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// Compare the analytic derivatives of a problem with finite differences.
    Check {
        #[arg(long, default_value = "llc")]
        problem: ProblemKind,
        #[arg(long, default_value_t = 10)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        condition_number: Option<f64>,
        #[arg(long, default_value_t = 5)]
        points: usize,
        #[arg(long, default_value_t = 1.0)]
        radius: f64,
    },
    /// Print the closed-form oracle at a point as JSON.
    #[command(allow_negative_numbers = true)]
    Oracle {
        #[arg(long, default_value = "llsc")]
        problem: ProblemKind,
        #[arg(long, default_value_t = 10)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        condition_number: Option<f64>,
        /// Upper-level point: one value fills every coordinate, otherwise n values.
        #[arg(long, value_delimiter = ',', default_value = "0")]
        x: Vec<f64>,
        #[arg(long, default_value_t = 0.0)]
        mu: f64,
    },
}

#[derive(Args)]
struct OverrideArgs {
    /// slbamm-s1|s2|s3|sc, rhg, bda, cg or ns.
    #[arg(long)]
    method: Option<Method>,
    /// llc, llsc or random_llsc.
    #[arg(long)]
    problem: Option<ProblemKind>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    condition_number: Option<f64>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    mu_bar: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// constant or decay.
    #[arg(long, value_parser = parse_beta_mode)]
    beta_mode: Option<BetaMode>,
    #[arg(long)]
    eta_bar: Option<f64>,
    #[arg(long)]
    alpha_bar: Option<f64>,
    #[arg(long)]
    alpha_gain: Option<f64>,
    /// Inner steps T of RHG and BDA.
    #[arg(long)]
    inner_steps: Option<usize>,
    #[arg(long)]
    inner_lr: Option<f64>,
    #[arg(long)]
    bda_mu: Option<f64>,
    #[arg(long)]
    cg_tol: Option<f64>,
    /// Neumann truncation M.
    #[arg(long)]
    ns_length: Option<usize>,
    /// Upper-level step size of the baselines.
    #[arg(long)]
    ul_lr: Option<f64>,
    #[arg(long)]
    warm_start: Option<bool>,
    /// Outer iteration budget K.
    #[arg(long, visible_alias = "iters")]
    max_iters: Option<u64>,
    #[arg(long)]
    kkt_tol: Option<f64>,
    #[arg(long)]
    time_limit: Option<f64>,
    /// Trace path.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// csv or json.
    #[arg(long)]
    format: Option<TraceFormat>,
    /// wall or parallel.
    #[arg(long)]
    timing: Option<TimingMode>,
}

fn parse_beta_mode(s: &str) -> Result<BetaMode, String> {
    match s {
        "constant" => Ok(BetaMode::Constant),
        "decay" => Ok(BetaMode::Decay),
        other => Err(format!("unknown beta mode `{other}` (expected constant or decay)")),
    }
}

impl OverrideArgs {
    fn overrides(&self) -> ConfigOverrides {
        ConfigOverrides {
            method: self.method,
            problem: self.problem,
            n: self.n,
            seed: self.seed,
            condition_number: self.condition_number,
            p: self.p,
            tau: self.tau,
            mu_bar: self.mu_bar,
            beta: self.beta,
            beta_mode: self.beta_mode,
            eta_bar: self.eta_bar,
            alpha_bar: self.alpha_bar,
            alpha_gain: self.alpha_gain,
            inner_steps: self.inner_steps,
            inner_lr: self.inner_lr,
            bda_mu: self.bda_mu,
            cg_tol: self.cg_tol,
            ns_length: self.ns_length,
            ul_lr: self.ul_lr,
            warm_start: self.warm_start,
            max_iters: self.max_iters,
            kkt_tol: self.kkt_tol,
            wall_clock_limit_s: self.time_limit,
            output: self.output.clone(),
            format: self.format,
            timing: self.timing,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode, HarnessError> {
    match command {
        Command::Run { config, overrides } => {
            if config.is_none() && overrides.problem.is_none() {
                return Err(HarnessError::Usage("run needs --config or --problem".into()));
            }
            let cfg = parse_config(&overrides.overrides(), config.as_deref())?;
            let trace = run_experiment(&cfg)?;
            emit_warnings(&trace);
            if let Some(path) = &cfg.output.path {
                write_trace(&trace, path, cfg.output.format)?;
            }
            println!("{}", run_summary(&trace));
        }
        Command::Compare {
            configs,
            methods,
            target_metric,
            target,
            summary,
            trace_dir,
            overrides,
        } => {
            let cfgs = compare_configs(&configs, &methods, &overrides)?;
            let target = Target {
                metric: target_metric,
                threshold: target,
            };
            let (result, traces) = compare(&cfgs, target)?;
            print!("{}", result.render_table());
            if let Some(path) = &summary {
                result.write_json(path)?;
            }
            if let Some(dir) = &trace_dir {
                for (cfg, trace) in cfgs.iter().zip(&traces) {
                    write_trace(trace, &dir.join(trace_file(cfg)), cfg.output.format)?;
                }
            }
        }
        Command::Sweep {
            config,
            param,
            values,
            out_dir,
            overrides,
        } => {
            let base = parse_config(&overrides.overrides(), config.as_deref())?;
            let outcome = sweep(&base, param, &values)?;
            for trace in &outcome.traces {
                emit_warnings(trace);
            }
            println!(
                "{param:>8}  {:>10}  {:>8}  {:>12}  {:>12}  {:>12}",
                "status", "iters", "final_F", "x_err", "wall_s"
            );
            for pt in &outcome.summary.points {
                let x_err = pt.final_x_err.map_or_else(|| "-".to_string(), |v| format!("{v:.3e}"));
                println!(
                    "{:>8}  {:>10}  {:>8}  {:>12.4e}  {x_err:>12}  {:>12.4}",
                    pt.value, pt.status, pt.iterations, pt.final_f, pt.wall_time_s
                );
            }
            if let Some(dir) = &out_dir {
                write_sweep(&outcome, dir)?;
            }
        }
        Command::Check {
            problem,
            n,
            seed,
            condition_number,
            points,
            radius,
        } => {
            let p = make_problem(problem, n, Some(seed), condition_number)?;
            let report = check_derivatives(&p, points, radius, seed);
            print_check(&report);
            if !report.passed {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Oracle {
            problem,
            n,
            seed,
            condition_number,
            x,
            mu,
        } => {
            let p = make_problem(problem, n, Some(seed), condition_number)?;
            let x = match x.as_slice() {
                [fill] => Vector::filled(n, *fill),
                values if values.len() == n => Vector::from(values.to_vec()),
                values => {
                    return Err(HarnessError::validation(
                        "x",
                        format!("expected 1 or {n} values, got {}", values.len()),
                    ))
                }
            };
            let oracle = p.oracle(&x, mu)?;
            let text = serde_json::to_string_pretty(&oracle).map_err(|e| HarnessError::Other(e.to_string()))?;
            println!("{text}");
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn compare_configs(files: &[PathBuf], methods: &[Method], args: &OverrideArgs) -> Result<Vec<RunConfig>, HarnessError> {
    let overrides = args.overrides();
    if !files.is_empty() {
        return files.iter().map(|f| parse_config(&overrides, Some(f))).collect();
    }
    let methods = if methods.is_empty() { &Method::ALL[..] } else { methods };
    methods
        .iter()
        .map(|&m| {
            parse_config(
                &ConfigOverrides {
                    method: Some(m),
                    ..overrides.clone()
                },
                None,
            )
        })
        .collect()
}

fn trace_file(cfg: &RunConfig) -> String {
    let ext = match cfg.output.format {
        TraceFormat::Csv => "csv",
        TraceFormat::Json => "json",
    };
    format!("{}.{ext}", cfg.method)
}

fn emit_warnings(trace: &Trace) {
    for w in &trace.metadata.warnings {
        log::warn!("{}: {w}", trace.metadata.config.method);
    }
}

fn run_summary(trace: &Trace) -> String {
    let meta = &trace.metadata;
    let mut out = format!("method {}  status {}", meta.config.method, meta.status.as_str());
    if let Some(last) = trace.last() {
        out.push_str(&format!("  iterations {}  F {:.6e}", last.k, last.f));
        if let Some(kkt) = last.kkt {
            out.push_str(&format!("  kkt {kkt:.3e}"));
        }
        if let Some(e) = last.x_err {
            out.push_str(&format!("  x_err {e:.3e}"));
        }
        out.push_str(&format!("  wall {:.3}s", last.wall_time_s));
    }
    if let Some(path) = &meta.config.output.path {
        out.push_str(&format!("\ntrace written to {}", path.display()));
    }
    out
}

fn print_check(report: &DerivativeReport) {
    for c in &report.checks {
        let mark = if c.max_rel_error <= report.threshold {
            "ok"
        } else {
            "FAIL"
        };
        println!("{:<14} {:>10.3e}  {mark}", c.name, c.max_rel_error);
    }
    match &report.worst {
        Some((name, point)) if !report.passed => {
            println!("worst: {name} at x = {:?}", point.x.as_slice());
        }
        _ => {}
    }
    println!(
        "{} (max relative error {:.3e}, threshold {:.0e})",
        if report.passed { "passed" } else { "failed" },
        report.max_error(),
        report.threshold
    );
}
