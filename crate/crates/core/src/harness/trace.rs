use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::linalg::Vector;
use crate::solver::RunStatus;

use super::config::{RunConfig, TraceFormat};
use super::HarnessError;

/// CSV header, in order.
pub const CSV_COLUMNS: [&str; 15] = [
    "k",
    "wall_time_s",
    "parallel_time_s",
    "F",
    "kkt",
    "x_err",
    "y_err",
    "v_err",
    "hypergrad_err",
    "grad_phi_norm",
    "mu",
    "alpha",
    "beta",
    "eta",
    "lyapunov_V",
];

/// One recorded iterate. Oracle-dependent fields are `None` without an oracle;
/// `v_err` and `kkt` also need a multiplier, `lyapunov_v` a single-loop run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterateRecord {
    pub k: u64,
    /// Cumulative algorithm time up to this iterate.
    pub wall_time_s: f64,
    pub parallel_time_s: f64,
    #[serde(rename = "F")]
    pub f: f64,
    pub kkt: Option<f64>,
    pub x_err: Option<f64>,
    pub y_err: Option<f64>,
    pub v_err: Option<f64>,
    pub hypergrad_err: Option<f64>,
    pub grad_phi_norm: Option<f64>,
    pub mu: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub eta: Option<f64>,
    #[serde(rename = "lyapunov_V")]
    pub lyapunov_v: Option<f64>,
    /// `‖d_x‖`; JSON only.
    pub dx_norm: f64,
    /// `x_err / ‖x*‖`; JSON only, absent when `x* = 0`.
    #[serde(default)]
    pub x_rel_err: Option<f64>,
    /// `hypergrad_err / ‖x*‖`; JSON only, absent when `x* = 0`.
    #[serde(default)]
    pub hypergrad_rel_err: Option<f64>,
}

#[derive(Serialize)]
struct CsvRow {
    k: u64,
    wall_time_s: f64,
    parallel_time_s: f64,
    #[serde(rename = "F")]
    f: f64,
    kkt: Option<f64>,
    x_err: Option<f64>,
    y_err: Option<f64>,
    v_err: Option<f64>,
    hypergrad_err: Option<f64>,
    grad_phi_norm: Option<f64>,
    mu: Option<f64>,
    alpha: Option<f64>,
    beta: Option<f64>,
    eta: Option<f64>,
    #[serde(rename = "lyapunov_V")]
    lyapunov_v: Option<f64>,
}

impl From<&IterateRecord> for CsvRow {
    fn from(r: &IterateRecord) -> Self {
        Self {
            k: r.k,
            wall_time_s: r.wall_time_s,
            parallel_time_s: r.parallel_time_s,
            f: r.f,
            kkt: r.kkt,
            x_err: r.x_err,
            y_err: r.y_err,
            v_err: r.v_err,
            hypergrad_err: r.hypergrad_err,
            grad_phi_norm: r.grad_phi_norm,
            mu: r.mu,
            alpha: r.alpha,
            beta: r.beta,
            eta: r.eta,
            lyapunov_v: r.lyapunov_v,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceMetadata {
    /// The fully resolved configuration.
    pub config: RunConfig,
    pub status: RunStatus,
    pub warnings: Vec<String>,
    /// Linear solves flagged as not converged (AID baselines).
    pub solve_failures: usize,
    /// Whether a closed-form oracle was attached.
    pub oracle: bool,
    /// Last finite upper-level iterate.
    pub final_x: Vector,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub metadata: TraceMetadata,
    pub records: Vec<IterateRecord>,
}

impl Trace {
    pub fn last(&self) -> Option<&IterateRecord> {
        self.records.last()
    }

    /// Copy with both timing columns zeroed, for determinism comparisons.
    pub fn without_timing(&self) -> Trace {
        let mut t = self.clone();
        for r in &mut t.records {
            r.wall_time_s = 0.0;
            r.parallel_time_s = 0.0;
        }
        t
    }
}

/// Writes `trace` to `path`. CSV holds the records only; JSON holds the
/// metadata and the records. Absent values are empty CSV fields or JSON
/// `null`; floats use the shortest representation that round-trips. JSON has
/// no infinities or NaN, so non-finite values are written as `null` too.
pub fn write_trace(trace: &Trace, path: &Path, format: TraceFormat) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    let mut out = BufWriter::new(file);
    match format {
        TraceFormat::Csv => write_csv(trace, &mut out).map_err(|e| csv_error(path, e))?,
        TraceFormat::Json => {
            serde_json::to_writer_pretty(&mut out, trace).map_err(|e| HarnessError::io(path, e.into()))?;
            out.write_all(b"\n").map_err(|e| HarnessError::io(path, e))?;
        }
    }
    out.flush().map_err(|e| HarnessError::io(path, e))
}

/// Serializes the records as CSV into `out`.
pub fn write_csv<W: Write>(trace: &Trace, out: W) -> Result<(), csv::Error> {
    let mut writer = csv::Writer::from_writer(out);
    if trace.records.is_empty() {
        writer.write_record(CSV_COLUMNS)?;
    }
    for r in &trace.records {
        writer.serialize(CsvRow::from(r))?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_trace_json(path: &Path) -> Result<Trace, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
}

fn csv_error(path: &Path, e: csv::Error) -> HarnessError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => HarnessError::io(path, io),
        other => HarnessError::Other(format!("{}: csv error {other:?}", path.display())),
    }
}
