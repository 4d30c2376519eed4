//! Experiment orchestration: configuration, single runs, method comparisons,
//! parameter sweeps and trace files.
//!
//! Errors map to process exit codes through [`HarnessError::exit_code`]:
//! 2 for usage and malformed configuration files, 3 for out-of-range values,
//! 4 for I/O failures and 1 for anything else. A diverged run is a result,
//! not an error.

mod compare;
mod config;
mod experiment;
mod sweep;
mod trace;

pub use compare::{compare, iterations_to_target, CompareRow, CompareSummary, Target, TargetMetric, BUDGET_EXHAUSTED};
pub use config::{
    parse_config, BudgetSection, ConfigOverrides, EngineSection, InitSection, Method, OutputSection, ProblemSection,
    RunConfig, ScheduleSection, TimingMode, TraceFormat,
};
pub use experiment::{build_problem, run_experiment};
pub use sweep::{sweep, write_sweep, SweepOutcome, SweepParam, SweepPoint, SweepSummary, SWEEP_N_TIME_LIMIT_S};
pub use trace::{read_trace_json, write_csv, write_trace, IterateRecord, Trace, TraceMetadata, CSV_COLUMNS};

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::baselines::BaselineError;
use crate::problem::ProblemError;
use crate::solver::SolverError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("usage: {0}")]
    Usage(String),
    /// Unparseable configuration file or unknown key.
    #[error("configuration: {0}")]
    Config(String),
    #[error("invalid {key}: {reason}")]
    Validation { key: String, reason: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error("{0}")]
    Other(String),
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn validation(key: &str, reason: impl Into<String>) -> Self {
        Self::Validation {
            key: key.to_string(),
            reason: reason.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) | Self::Config(_) => 2,
            Self::Validation { .. }
            | Self::Solver(SolverError::InvalidParameter { .. })
            | Self::Baseline(BaselineError::InvalidParameter { .. })
            | Self::Problem(ProblemError::InvalidParameter(_)) => 3,
            Self::Io { .. } => 4,
            _ => 1,
        }
    }
}
