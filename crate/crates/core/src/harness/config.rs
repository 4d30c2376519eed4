use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::baselines::{EngineConfig, EngineKind, DEFAULT_NS_RESIDUAL_TOL};
use crate::problems::{ProblemKind, DEFAULT_CONDITION_NUMBER};
use crate::solver::{BetaBoundPolicy, BetaMode, Budget, ScheduleParams, Strategy};

use super::HarnessError;

/// The single-loop method with one of its strategies, or a baseline engine.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Method {
    SlBamm(Strategy),
    Baseline(EngineKind),
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::SlBamm(Strategy::S1),
        Method::SlBamm(Strategy::S2),
        Method::SlBamm(Strategy::S3),
        Method::SlBamm(Strategy::Sc),
        Method::Baseline(EngineKind::Rhg),
        Method::Baseline(EngineKind::Bda),
        Method::Baseline(EngineKind::CgAid),
        Method::Baseline(EngineKind::NsAid),
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::SlBamm(Strategy::S1) => "slbamm-s1",
            Self::SlBamm(Strategy::S2) => "slbamm-s2",
            Self::SlBamm(Strategy::S3) => "slbamm-s3",
            Self::SlBamm(Strategy::Sc) => "slbamm-sc",
            Self::Baseline(EngineKind::Rhg) => "rhg",
            Self::Baseline(EngineKind::Bda) => "bda",
            Self::Baseline(EngineKind::CgAid) => "cg",
            Self::Baseline(EngineKind::NsAid) => "ns",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.to_ascii_lowercase();
        if let Some(strategy) = lower.strip_prefix("slbamm-").or_else(|| lower.strip_prefix("sl-bamm-")) {
            return strategy.parse().map(Method::SlBamm);
        }
        lower
            .parse()
            .map(Method::Baseline)
            .map_err(|_| format!("unknown method `{s}` (expected slbamm-s1|s2|s3|sc, rhg, bda, cg or ns)"))
    }
}

impl TryFrom<String> for Method {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Method> for String {
    fn from(m: Method) -> Self {
        m.as_str().to_string()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProblemSection {
    pub kind: ProblemKind,
    pub n: usize,
    /// Seed for `random_llsc`.
    pub seed: u64,
    pub condition_number: f64,
}

impl Default for ProblemSection {
    fn default() -> Self {
        Self {
            kind: ProblemKind::Llc,
            n: 100,
            seed: 0,
            condition_number: DEFAULT_CONDITION_NUMBER,
        }
    }
}

/// [`ScheduleParams`] without the strategy, which comes from the method.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleSection {
    pub p: f64,
    pub tau: f64,
    pub mu_bar: f64,
    pub beta: f64,
    pub beta_mode: BetaMode,
    pub beta_bound: BetaBoundPolicy,
    pub eta_bar: f64,
    pub alpha_bar: f64,
    pub alpha_gain: f64,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        let d = ScheduleParams::default();
        Self {
            p: d.p,
            tau: d.tau,
            mu_bar: d.mu_bar,
            beta: d.beta,
            beta_mode: d.beta_mode,
            beta_bound: d.beta_bound,
            eta_bar: d.eta_bar,
            alpha_bar: d.alpha_bar,
            alpha_gain: d.alpha_gain,
        }
    }
}

impl ScheduleSection {
    pub fn to_params(&self, strategy: Strategy) -> ScheduleParams {
        ScheduleParams {
            strategy,
            p: self.p,
            tau: self.tau,
            mu_bar: self.mu_bar,
            beta: self.beta,
            beta_mode: self.beta_mode,
            beta_bound: self.beta_bound,
            eta_bar: self.eta_bar,
            alpha_bar: self.alpha_bar,
            alpha_gain: self.alpha_gain,
        }
    }
}

/// [`EngineConfig`] without the kind, plus the outer-loop settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EngineSection {
    pub inner_steps: usize,
    pub inner_lr: f64,
    pub bda_mu: f64,
    pub cg_tol: f64,
    pub cg_max_iter: Option<usize>,
    pub ns_length: usize,
    pub ns_beta: Option<f64>,
    pub ns_residual_tol: f64,
    /// Upper-level learning rate of the outer gradient descent.
    pub ul_lr: f64,
    pub warm_start: bool,
}

impl Default for EngineSection {
    fn default() -> Self {
        let d = EngineConfig::default();
        Self {
            inner_steps: d.inner_steps,
            inner_lr: d.inner_lr,
            bda_mu: d.bda_mu,
            cg_tol: d.cg_tol,
            cg_max_iter: d.cg_max_iter,
            ns_length: d.ns_length,
            ns_beta: d.ns_beta,
            ns_residual_tol: DEFAULT_NS_RESIDUAL_TOL,
            ul_lr: 0.005,
            warm_start: true,
        }
    }
}

impl EngineSection {
    pub fn to_engine(&self, kind: EngineKind) -> EngineConfig {
        EngineConfig {
            kind,
            inner_steps: self.inner_steps,
            inner_lr: self.inner_lr,
            bda_mu: self.bda_mu,
            cg_tol: self.cg_tol,
            cg_max_iter: self.cg_max_iter,
            ns_length: self.ns_length,
            ns_beta: self.ns_beta,
            ns_residual_tol: self.ns_residual_tol,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BudgetSection {
    pub max_iters: u64,
    pub kkt_tol: Option<f64>,
    pub wall_clock_limit_s: Option<f64>,
}

impl Default for BudgetSection {
    fn default() -> Self {
        Self {
            max_iters: 4000,
            kkt_tol: None,
            wall_clock_limit_s: None,
        }
    }
}

impl BudgetSection {
    pub fn to_budget(&self) -> Budget {
        Budget {
            max_iters: self.max_iters,
            kkt_tol: self.kkt_tol,
            wall_clock_limit: self.wall_clock_limit_s.map(Duration::from_secs_f64),
        }
    }
}

/// Constant fill values of the initial iterate.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitSection {
    pub x: f64,
    pub y: f64,
    pub v: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceFormat {
    #[default]
    Csv,
    Json,
}

impl FromStr for TraceFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(format!("unknown trace format `{other}` (expected csv or json)")),
        }
    }
}

/// Clock used for time-to-target figures. Traces always carry both.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimingMode {
    #[default]
    Wall,
    /// Per iteration, the slowest of the three update computations.
    Parallel,
}

impl FromStr for TimingMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "wall" => Ok(Self::Wall),
            "parallel" => Ok(Self::Parallel),
            other => Err(format!("unknown timing mode `{other}` (expected wall or parallel)")),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub path: Option<PathBuf>,
    pub format: TraceFormat,
    pub timing: TimingMode,
}

/// A fully resolved experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub method: Method,
    pub problem: ProblemSection,
    pub schedule: ScheduleSection,
    pub engine: EngineSection,
    pub budget: BudgetSection,
    pub init: InitSection,
    pub output: OutputSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            method: Method::SlBamm(Strategy::S3),
            problem: ProblemSection::default(),
            schedule: ScheduleSection::default(),
            engine: EngineSection::default(),
            budget: BudgetSection::default(),
            init: InitSection::default(),
            output: OutputSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String, HarnessError> {
        toml::to_string(self).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            HarnessError::Config(msg) => HarnessError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Schedule for the single-loop methods (strategy from `method`, `S3`
    /// for baselines).
    pub fn schedule_params(&self) -> ScheduleParams {
        let strategy = match self.method {
            Method::SlBamm(s) => s,
            Method::Baseline(_) => Strategy::S3,
        };
        self.schedule.to_params(strategy)
    }

    /// Rejects out-of-range values, naming the offending key, and returns
    /// warnings for values outside the ranges covered by the theory.
    pub fn validate(&self) -> Result<Vec<String>, HarnessError> {
        if self.problem.n < 1 {
            return Err(HarnessError::validation("problem.n", "must be at least 1"));
        }
        if !(self.problem.condition_number >= 1.0 && self.problem.condition_number.is_finite()) {
            return Err(HarnessError::validation(
                "problem.condition_number",
                format!("= {} must be finite and >= 1", self.problem.condition_number),
            ));
        }
        if self.budget.max_iters < 1 {
            return Err(HarnessError::validation("budget.max_iters", "must be at least 1"));
        }
        if let Some(t) = self.budget.kkt_tol {
            if !(t > 0.0) {
                return Err(HarnessError::validation(
                    "budget.kkt_tol",
                    format!("= {t} must be positive"),
                ));
            }
        }
        if let Some(t) = self.budget.wall_clock_limit_s {
            if !(t > 0.0 && t.is_finite()) {
                return Err(HarnessError::validation(
                    "budget.wall_clock_limit_s",
                    format!("= {t} must be positive and finite"),
                ));
            }
        }
        for (name, value) in [
            ("init.x", self.init.x),
            ("init.y", self.init.y),
            ("init.v", self.init.v),
        ] {
            if !value.is_finite() {
                return Err(HarnessError::validation(name, "must be finite"));
            }
        }
        match self.method {
            Method::SlBamm(strategy) => self.schedule.to_params(strategy).validate().map_err(|e| match e {
                crate::solver::SolverError::InvalidParameter { name, reason } => HarnessError::Validation {
                    key: format!("schedule.{name}"),
                    reason,
                },
                other => HarnessError::Validation {
                    key: "schedule".into(),
                    reason: other.to_string(),
                },
            }),
            Method::Baseline(kind) => {
                if !(self.engine.ul_lr >= 0.0 && self.engine.ul_lr.is_finite()) {
                    return Err(HarnessError::validation(
                        "engine.ul_lr",
                        format!("= {} must be non-negative and finite", self.engine.ul_lr),
                    ));
                }
                self.engine.to_engine(kind).validate().map_err(|e| match e {
                    crate::baselines::BaselineError::InvalidParameter { name, reason } => HarnessError::Validation {
                        key: format!("engine.{name}"),
                        reason,
                    },
                    other => HarnessError::Validation {
                        key: "engine".into(),
                        reason: other.to_string(),
                    },
                })?;
                Ok(Vec::new())
            }
        }
    }
}

/// Command-line values layered over a file or the defaults. `None` leaves
/// the underlying value untouched.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConfigOverrides {
    pub method: Option<Method>,
    pub problem: Option<ProblemKind>,
    pub n: Option<usize>,
    pub seed: Option<u64>,
    pub condition_number: Option<f64>,
    pub p: Option<f64>,
    pub tau: Option<f64>,
    pub mu_bar: Option<f64>,
    pub beta: Option<f64>,
    pub beta_mode: Option<BetaMode>,
    pub eta_bar: Option<f64>,
    pub alpha_bar: Option<f64>,
    pub alpha_gain: Option<f64>,
    pub inner_steps: Option<usize>,
    pub inner_lr: Option<f64>,
    pub bda_mu: Option<f64>,
    pub cg_tol: Option<f64>,
    pub ns_length: Option<usize>,
    pub ul_lr: Option<f64>,
    pub warm_start: Option<bool>,
    pub max_iters: Option<u64>,
    pub kkt_tol: Option<f64>,
    pub wall_clock_limit_s: Option<f64>,
    pub output: Option<PathBuf>,
    pub format: Option<TraceFormat>,
    pub timing: Option<TimingMode>,
}

impl ConfigOverrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        fn set<T: Clone>(slot: &mut T, value: &Option<T>) {
            if let Some(v) = value {
                *slot = v.clone();
            }
        }
        set(&mut cfg.method, &self.method);
        set(&mut cfg.problem.kind, &self.problem);
        set(&mut cfg.problem.n, &self.n);
        set(&mut cfg.problem.seed, &self.seed);
        set(&mut cfg.problem.condition_number, &self.condition_number);
        set(&mut cfg.schedule.p, &self.p);
        set(&mut cfg.schedule.tau, &self.tau);
        set(&mut cfg.schedule.mu_bar, &self.mu_bar);
        set(&mut cfg.schedule.beta, &self.beta);
        set(&mut cfg.schedule.beta_mode, &self.beta_mode);
        set(&mut cfg.schedule.eta_bar, &self.eta_bar);
        set(&mut cfg.schedule.alpha_bar, &self.alpha_bar);
        set(&mut cfg.schedule.alpha_gain, &self.alpha_gain);
        set(&mut cfg.engine.inner_steps, &self.inner_steps);
        set(&mut cfg.engine.inner_lr, &self.inner_lr);
        set(&mut cfg.engine.bda_mu, &self.bda_mu);
        set(&mut cfg.engine.cg_tol, &self.cg_tol);
        set(&mut cfg.engine.ns_length, &self.ns_length);
        set(&mut cfg.engine.ul_lr, &self.ul_lr);
        set(&mut cfg.engine.warm_start, &self.warm_start);
        set(&mut cfg.budget.max_iters, &self.max_iters);
        if self.kkt_tol.is_some() {
            cfg.budget.kkt_tol = self.kkt_tol;
        }
        if self.wall_clock_limit_s.is_some() {
            cfg.budget.wall_clock_limit_s = self.wall_clock_limit_s;
        }
        if self.output.is_some() {
            cfg.output.path.clone_from(&self.output);
        }
        set(&mut cfg.output.format, &self.format);
        set(&mut cfg.output.timing, &self.timing);
    }
}

/// Resolves a configuration: defaults, then `file`, then `overrides`.
pub fn parse_config(overrides: &ConfigOverrides, file: Option<&Path>) -> Result<RunConfig, HarnessError> {
    let mut cfg = match file {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    overrides.apply(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}
