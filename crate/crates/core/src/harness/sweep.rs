use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::compare::write_json;
use super::config::RunConfig;
use super::experiment::run_experiment;
use super::trace::{write_trace, Trace};
use super::HarnessError;

/// Wall-clock limit per point applied to dimension sweeps that set none.
pub const SWEEP_N_TIME_LIMIT_S: f64 = 60.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParam {
    /// Problem dimension.
    #[serde(rename = "n")]
    N,
    #[serde(rename = "p")]
    P,
    #[serde(rename = "tau")]
    Tau,
    /// Inner steps of the baselines.
    #[serde(rename = "T")]
    T,
    /// Neumann truncation.
    #[serde(rename = "M")]
    M,
    /// CG tolerance.
    #[serde(rename = "eps")]
    Eps,
}

impl SweepParam {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::N => "n",
            Self::P => "p",
            Self::Tau => "tau",
            Self::T => "T",
            Self::M => "M",
            Self::Eps => "eps",
        }
    }

    /// Sets this parameter of `cfg` to `value`.
    pub fn apply(self, cfg: &mut RunConfig, value: f64) -> Result<(), HarnessError> {
        let count = || {
            if value >= 0.0 && value.fract() == 0.0 && value <= u32::MAX as f64 {
                Ok(value as usize)
            } else {
                Err(HarnessError::validation(
                    self.as_str(),
                    format!("sweep value {value} must be a non-negative integer"),
                ))
            }
        };
        match self {
            Self::N => cfg.problem.n = count()?,
            Self::P => cfg.schedule.p = value,
            Self::Tau => cfg.schedule.tau = value,
            Self::T => cfg.engine.inner_steps = count()?,
            Self::M => cfg.engine.ns_length = count()?,
            Self::Eps => cfg.engine.cg_tol = value,
        }
        Ok(())
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for SweepParam {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "n" => Ok(Self::N),
            "p" => Ok(Self::P),
            "tau" => Ok(Self::Tau),
            "T" | "t" | "inner_steps" => Ok(Self::T),
            "M" | "m" | "ns_length" => Ok(Self::M),
            "eps" | "cg_tol" => Ok(Self::Eps),
            other => Err(format!(
                "unknown sweep parameter `{other}` (expected n, p, tau, T, M or eps)"
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub status: String,
    /// Iterations performed.
    pub iterations: u64,
    pub final_f: f64,
    pub final_kkt: Option<f64>,
    pub final_x_err: Option<f64>,
    pub final_hypergrad_err: Option<f64>,
    pub wall_time_s: f64,
    pub parallel_time_s: f64,
    pub wall_per_iter_s: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub param: SweepParam,
    pub points: Vec<SweepPoint>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepOutcome {
    pub summary: SweepSummary,
    /// One trace per value, in input order.
    pub traces: Vec<Trace>,
}

/// Runs `base` once per value of `param`.
///
/// Points run one after another so their timings do not interfere. An `n`
/// sweep without a wall-clock limit gets [`SWEEP_N_TIME_LIMIT_S`] per point.
pub fn sweep(base: &RunConfig, param: SweepParam, values: &[f64]) -> Result<SweepOutcome, HarnessError> {
    if values.is_empty() {
        return Err(HarnessError::Usage("sweep needs at least one value".into()));
    }
    let mut cfgs = Vec::with_capacity(values.len());
    for &value in values {
        let mut cfg = base.clone();
        param.apply(&mut cfg, value)?;
        if param == SweepParam::N && cfg.budget.wall_clock_limit_s.is_none() {
            cfg.budget.wall_clock_limit_s = Some(SWEEP_N_TIME_LIMIT_S);
        }
        cfg.validate()?;
        cfgs.push(cfg);
    }
    let mut points = Vec::with_capacity(values.len());
    let mut traces = Vec::with_capacity(values.len());
    for (cfg, &value) in cfgs.iter().zip(values) {
        let trace = run_experiment(cfg)?;
        points.push(point(value, &trace));
        traces.push(trace);
    }
    Ok(SweepOutcome {
        summary: SweepSummary { param, points },
        traces,
    })
}

fn point(value: f64, trace: &Trace) -> SweepPoint {
    let last = trace.last();
    let iterations = last.map_or(0, |r| r.k);
    let wall = last.map_or(0.0, |r| r.wall_time_s);
    SweepPoint {
        value,
        status: trace.metadata.status.as_str().to_string(),
        iterations,
        final_f: last.map_or(f64::NAN, |r| r.f),
        final_kkt: last.and_then(|r| r.kkt),
        final_x_err: last.and_then(|r| r.x_err),
        final_hypergrad_err: last.and_then(|r| r.hypergrad_err),
        wall_time_s: wall,
        parallel_time_s: last.map_or(0.0, |r| r.parallel_time_s),
        wall_per_iter_s: (iterations > 0).then(|| wall / iterations as f64),
    }
}

/// Writes each trace as `<param>_<value>.<csv|json>` and the summary as
/// `summary.json` into `dir`. Returns the written paths, summary last.
pub fn write_sweep(outcome: &SweepOutcome, dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let mut written = Vec::new();
    for (point, trace) in outcome.summary.points.iter().zip(&outcome.traces) {
        let format = trace.metadata.config.output.format;
        let ext = match format {
            super::config::TraceFormat::Csv => "csv",
            super::config::TraceFormat::Json => "json",
        };
        let path = dir.join(format!("{}_{}.{ext}", outcome.summary.param, point.value));
        write_trace(trace, &path, format)?;
        written.push(path);
    }
    let summary = dir.join("summary.json");
    write_json(&outcome.summary, &summary)?;
    written.push(summary);
    Ok(written)
}
