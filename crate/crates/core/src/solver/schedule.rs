use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::SolverError;

/// Step-size strategy.
///
/// `S1`–`S3` target a merely convex lower level with a decaying aggregation
/// weight `μ_k = μ̄(k+1)^{−p}`; `SC` targets a strongly convex lower level
/// with `μ_k ≡ 0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    S1,
    S2,
    S3,
    Sc,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::S1 => "s1",
            Self::S2 => "s2",
            Self::S3 => "s3",
            Self::Sc => "sc",
        }
    }

    /// Open upper bounds on `(p, τ)` under which the convergence guarantee
    /// for this strategy holds.
    pub fn exponent_bounds(self) -> Option<(f64, f64)> {
        match self {
            Self::S1 => Some((1.0 / 10.0, 1.0 / 30.0)),
            Self::S2 => Some((1.0 / 6.0, 1.0 / 18.0)),
            Self::S3 => Some((1.0 / 4.0, 1.0 / 12.0)),
            Self::Sc => None,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "s1" => Ok(Self::S1),
            "s2" => Ok(Self::S2),
            "s3" => Ok(Self::S3),
            "sc" => Ok(Self::Sc),
            other => Err(format!("unknown strategy `{other}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BetaMode {
    /// `β_k = β`
    #[default]
    Constant,
    /// `β_k = β(k+1)^{−τ/2}`
    Decay,
}

/// What to do when `β_k` exceeds `1 / (L_Fy2 + L_fy2)` and the problem
/// supplies both constants.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BetaBoundPolicy {
    #[default]
    Warn,
    Enforce,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleParams {
    pub strategy: Strategy,
    /// Decay exponent of `μ_k` (ignored by `SC`).
    pub p: f64,
    pub tau: f64,
    /// `μ̄`, the initial aggregation weight.
    pub mu_bar: f64,
    /// Lower-level step `β` (or `β̄` in decay mode).
    pub beta: f64,
    pub beta_mode: BetaMode,
    pub beta_bound: BetaBoundPolicy,
    /// `η̄` (SC only).
    pub eta_bar: f64,
    /// `ᾱ` (SC only).
    pub alpha_bar: f64,
    /// Constant factor on `α_k` for every strategy. Decay exponents are never
    /// changed.
    pub alpha_gain: f64,
}

impl Default for ScheduleParams {
    fn default() -> Self {
        Self {
            strategy: Strategy::S3,
            p: 0.05,
            tau: 0.025,
            mu_bar: 0.9,
            beta: 0.1,
            beta_mode: BetaMode::Constant,
            beta_bound: BetaBoundPolicy::Warn,
            eta_bar: 1.0,
            alpha_bar: 1.0,
            alpha_gain: 1.0,
        }
    }
}

impl ScheduleParams {
    pub fn with_strategy(strategy: Strategy) -> Self {
        Self {
            strategy,
            ..Self::default()
        }
    }

    /// Rejects values the formulas cannot use and returns warnings for values
    /// outside the ranges where the convergence guarantees apply.
    pub fn validate(&self) -> Result<Vec<String>, SolverError> {
        let positive = [
            ("beta", self.beta),
            ("eta_bar", self.eta_bar),
            ("alpha_bar", self.alpha_bar),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(invalid(name, value, "must be positive and finite"));
            }
        }
        for (name, value) in [("p", self.p), ("tau", self.tau), ("alpha_gain", self.alpha_gain)] {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(invalid(name, value, "must be non-negative and finite"));
            }
        }
        if self.strategy != Strategy::Sc && !(self.mu_bar > 0.0 && self.mu_bar <= 1.0) {
            return Err(invalid("mu_bar", self.mu_bar, "must lie in (0, 1]"));
        }

        let mut warnings = Vec::new();
        if let Some((p_max, tau_max)) = self.strategy.exponent_bounds() {
            if !(self.p > 0.0 && self.p < p_max) {
                warnings.push(format!(
                    "p = {} is outside (0, {p_max:.4}) for strategy {}",
                    self.p, self.strategy
                ));
            }
            if !(self.tau > 0.0 && self.tau < tau_max) {
                warnings.push(format!(
                    "tau = {} is outside (0, {tau_max:.4}) for strategy {}",
                    self.tau, self.strategy
                ));
            }
            if self.mu_bar > 0.5 {
                warnings.push(format!(
                    "mu_bar = {} exceeds 1/2; the descent analysis assumes mu_k <= 1/2",
                    self.mu_bar
                ));
            }
        } else if !(self.tau > 0.0) {
            warnings.push("tau = 0 gives constant step sizes for strategy sc".to_string());
        }
        Ok(warnings)
    }

    /// Step sizes for iteration `k`.
    pub fn step_sizes(&self, k: u64) -> StepSizes {
        schedule_step_sizes(self, k)
    }
}

fn invalid(name: &'static str, value: f64, reason: &str) -> SolverError {
    SolverError::InvalidParameter {
        name,
        reason: format!("{name} = {value} {reason}"),
    }
}

/// `(μ_k, β_k, η_k, α_k)` for one iteration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepSizes {
    pub mu: f64,
    pub beta: f64,
    pub eta: f64,
    pub alpha: f64,
}

/// Evaluates the schedule at iteration `k`:
///
/// ```text
/// μ_k = μ̄(k+1)^{−p}                    (S1–S3),  0 (SC)
/// β_k = β  or  β(k+1)^{−τ/2}
/// S1: η_k = (k+1)^{−τ/2} β_k μ_k²,   α_k = (k+1)^{−3τ/2} β_k μ_k⁷
/// S2: η_k = (k+1)^{−τ/2} β_k μ_k,    α_k = (k+1)^{−3τ/2} β_k μ_k⁵
/// S3: η_k = (k+1)^{−τ/2} β_k,        α_k = (k+1)^{−3τ/2} β_k μ_k³
/// SC: η_k = η̄(k+1)^{−τ/2} β_k,       α_k = ᾱ(k+1)^{−τ} β_k
/// ```
///
/// `α_k` is then multiplied by `alpha_gain`.
pub fn schedule_step_sizes(params: &ScheduleParams, k: u64) -> StepSizes {
    let t = (k + 1) as f64;
    let half_tau = t.powf(-params.tau / 2.0);
    let beta = match params.beta_mode {
        BetaMode::Constant => params.beta,
        BetaMode::Decay => params.beta * half_tau,
    };
    let (mu, eta, alpha) = match params.strategy {
        Strategy::Sc => (
            0.0,
            params.eta_bar * half_tau * beta,
            params.alpha_bar * t.powf(-params.tau) * beta,
        ),
        strategy => {
            let mu = params.mu_bar * t.powf(-params.p);
            let slow = t.powf(-1.5 * params.tau);
            let (eta_pow, alpha_pow) = match strategy {
                Strategy::S1 => (2, 7),
                Strategy::S2 => (1, 5),
                _ => (0, 3),
            };
            (mu, half_tau * beta * mu.powi(eta_pow), slow * beta * mu.powi(alpha_pow))
        }
    };
    StepSizes {
        mu,
        beta,
        eta,
        alpha: params.alpha_gain * alpha,
    }
}
