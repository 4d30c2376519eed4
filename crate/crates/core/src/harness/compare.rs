use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::config::{RunConfig, TimingMode};
use super::experiment::{build_problem, run_on};
use super::trace::{IterateRecord, Trace};
use super::HarnessError;

/// Marker for a method that never reached the target within its budget.
pub const BUDGET_EXHAUSTED: &str = "budget_exhausted";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetMetric {
    DxNorm,
    Kkt,
    XErr,
    YErr,
    HypergradErr,
    GradPhiNorm,
}

impl TargetMetric {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::DxNorm => "dx_norm",
            Self::Kkt => "kkt",
            Self::XErr => "x_err",
            Self::YErr => "y_err",
            Self::HypergradErr => "hypergrad_err",
            Self::GradPhiNorm => "grad_phi_norm",
        }
    }

    pub fn value(self, r: &IterateRecord) -> Option<f64> {
        match self {
            Self::DxNorm => Some(r.dx_norm),
            Self::Kkt => r.kkt,
            Self::XErr => r.x_err,
            Self::YErr => r.y_err,
            Self::HypergradErr => r.hypergrad_err,
            Self::GradPhiNorm => r.grad_phi_norm,
        }
    }
}

impl fmt::Display for TargetMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for TargetMetric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dx_norm" => Ok(Self::DxNorm),
            "kkt" => Ok(Self::Kkt),
            "x_err" => Ok(Self::XErr),
            "y_err" => Ok(Self::YErr),
            "hypergrad_err" => Ok(Self::HypergradErr),
            "grad_phi_norm" => Ok(Self::GradPhiNorm),
            other => Err(format!(
                "unknown metric `{other}` (expected dx_norm, kkt, x_err, y_err, hypergrad_err or grad_phi_norm)"
            )),
        }
    }
}

/// Reached when `metric ≤ threshold`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub metric: TargetMetric,
    pub threshold: f64,
}

/// First record index at which the target metric is at or below the threshold.
pub fn iterations_to_target(trace: &Trace, target: &Target) -> Option<u64> {
    trace
        .records
        .iter()
        .find(|r| target.metric.value(r).is_some_and(|v| v <= target.threshold))
        .map(|r| r.k)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub method: String,
    /// `reached` or [`BUDGET_EXHAUSTED`].
    pub outcome: String,
    pub iterations_to_target: Option<u64>,
    /// Cumulative times at the target, or at the last iterate when missed.
    pub wall_time_s: f64,
    pub parallel_time_s: f64,
    /// Time under the configured timing mode.
    pub time_s: f64,
    pub final_metric: Option<f64>,
    pub final_f: f64,
    pub final_x_err: Option<f64>,
    pub status: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareSummary {
    pub target: Target,
    pub rows: Vec<CompareRow>,
}

impl CompareSummary {
    /// Aligned plain-text table.
    pub fn render_table(&self) -> String {
        let header = [
            "method".to_string(),
            format!("iters_to_{}<={:e}", self.target.metric, self.target.threshold),
            "wall_s".to_string(),
            "parallel_s".to_string(),
            format!("final_{}", self.target.metric),
            "final_F".to_string(),
            "status".to_string(),
        ];
        let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.3e}"));
        let rows: Vec<[String; 7]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.method.clone(),
                    r.iterations_to_target
                        .map_or_else(|| BUDGET_EXHAUSTED.to_string(), |k| k.to_string()),
                    format!("{:.4}", r.wall_time_s),
                    format!("{:.4}", r.parallel_time_s),
                    opt(r.final_metric),
                    format!("{:.6e}", r.final_f),
                    r.status.clone(),
                ]
            })
            .collect();
        let mut widths = header.clone().map(|h| h.len());
        for row in &rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.len());
            }
        }
        let line = |cells: &[String; 7]| {
            let parts: Vec<String> = cells
                .iter()
                .zip(widths)
                .enumerate()
                .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
                .collect();
            parts.join("  ").trim_end().to_string()
        };
        let mut out = line(&header);
        out.push('\n');
        out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
        out.push('\n');
        for row in &rows {
            out.push_str(&line(row));
            out.push('\n');
        }
        out
    }

    pub fn write_json(&self, path: &Path) -> Result<(), HarnessError> {
        write_json(self, path)
    }
}

pub(crate) fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    let text = serde_json::to_string_pretty(value).map_err(|e| HarnessError::Other(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| HarnessError::io(path, e))
}

/// Runs every configuration on one shared problem instance and tabulates
/// how long each needs to reach `target`.
pub fn compare(cfgs: &[RunConfig], target: Target) -> Result<(CompareSummary, Vec<Trace>), HarnessError> {
    let first = cfgs
        .first()
        .ok_or_else(|| HarnessError::Usage("compare needs at least one configuration".into()))?;
    if let Some(other) = cfgs.iter().find(|c| c.problem != first.problem) {
        return Err(HarnessError::Usage(format!(
            "all compared runs must share one problem instance; `{}` differs from `{}`",
            other.method, first.method
        )));
    }
    let mut warnings = Vec::new();
    for cfg in cfgs {
        warnings.extend(cfg.validate()?);
    }
    let problem = build_problem(first)?;
    let mut rows = Vec::with_capacity(cfgs.len());
    let mut traces = Vec::with_capacity(cfgs.len());
    for cfg in cfgs {
        let trace = run_on(cfg, &problem, &mut Vec::new())?;
        rows.push(summarize(cfg, &trace, &target));
        traces.push(trace);
    }
    for w in warnings {
        log::warn!("{w}");
    }
    Ok((CompareSummary { target, rows }, traces))
}

fn summarize(cfg: &RunConfig, trace: &Trace, target: &Target) -> CompareRow {
    let hit = iterations_to_target(trace, target);
    let at = hit
        .and_then(|k| trace.records.iter().find(|r| r.k == k))
        .or_else(|| trace.last());
    let (wall, parallel) = at.map_or((0.0, 0.0), |r| (r.wall_time_s, r.parallel_time_s));
    let last = trace.last();
    CompareRow {
        method: cfg.method.to_string(),
        outcome: if hit.is_some() { "reached" } else { BUDGET_EXHAUSTED }.to_string(),
        iterations_to_target: hit,
        wall_time_s: wall,
        parallel_time_s: parallel,
        time_s: match cfg.output.timing {
            TimingMode::Wall => wall,
            TimingMode::Parallel => parallel,
        },
        final_metric: last.and_then(|r| target.metric.value(r)),
        final_f: last.map_or(f64::NAN, |r| r.f),
        final_x_err: last.and_then(|r| r.x_err),
        status: trace.metadata.status.as_str().to_string(),
    }
}
