//! Comparison hypergradient engines and the gradient-descent outer loop that
//! drives them.
//!
//! * RHG: reverse-mode differentiation through `T` inner gradient steps.
//! * BDA: RHG on the aggregation `ψ_μ` with a constant `μ`.
//! * CG-AID / NS-AID: `T` inner steps to locate `y`, then the implicit
//!   hypergradient with `[∇²_yy f]⁻¹ ∇_yF` approximated by conjugate gradient
//!   or a truncated Neumann series.

mod engines;
mod outer;

pub use engines::{
    aid_cg_hypergradient, aid_ns_hypergradient, inner_gd, rhg_hypergradient, AidOutcome, DEFAULT_NS_RESIDUAL_TOL,
};
pub use outer::{outer_loop, OuterOutcome, OuterRecord, OuterView};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{LinalgError, Vector};
use crate::problem::{BilevelProblem, ProblemError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BaselineError {
    #[error("invalid {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("inner iterate y_{t} is not finite")]
    InnerDiverged { t: usize },
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

impl BaselineError {
    fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Self::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineKind {
    Rhg,
    Bda,
    CgAid,
    NsAid,
}

impl EngineKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Rhg => "rhg",
            Self::Bda => "bda",
            Self::CgAid => "cg_aid",
            Self::NsAid => "ns_aid",
        }
    }
}

impl fmt::Display for EngineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for EngineKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rhg" => Ok(Self::Rhg),
            "bda" => Ok(Self::Bda),
            "cg" | "cg_aid" | "cg-aid" => Ok(Self::CgAid),
            "ns" | "ns_aid" | "ns-aid" => Ok(Self::NsAid),
            other => Err(format!("unknown engine `{other}`")),
        }
    }
}

/// Configuration of one hypergradient engine.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EngineConfig {
    pub kind: EngineKind,
    /// Inner gradient steps `T` (all engines; AID engines use them to locate `y`).
    pub inner_steps: usize,
    /// Inner step size `β`.
    pub inner_lr: f64,
    /// Constant aggregation weight for BDA.
    pub bda_mu: f64,
    pub cg_tol: f64,
    /// `None` means `10 · dim_y`.
    pub cg_max_iter: Option<usize>,
    /// Neumann truncation `M` (the series has `M + 1` terms).
    pub ns_length: usize,
    /// Neumann step; `None` means `inner_lr`.
    pub ns_beta: Option<f64>,
    /// A Neumann solve with `‖s_{M+1}‖ / ‖∇_yF‖` above this is flagged.
    pub ns_residual_tol: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            kind: EngineKind::Rhg,
            inner_steps: 100,
            inner_lr: 0.1,
            bda_mu: 0.1,
            cg_tol: 1e-10,
            cg_max_iter: None,
            ns_length: 40,
            ns_beta: None,
            ns_residual_tol: DEFAULT_NS_RESIDUAL_TOL,
        }
    }
}

/// One engine evaluation at `x`.
#[derive(Clone, Debug, PartialEq)]
pub struct Hypergradient {
    /// The upper-level direction `d_x`.
    pub g: Vector,
    /// Lower-level point reached by the inner loop.
    pub y: Vector,
    /// Multiplier estimate (AID engines only).
    pub v: Option<Vector>,
    /// Whether the linear solve met its tolerance (AID engines only).
    pub solve_converged: Option<bool>,
}

impl EngineConfig {
    pub fn new(kind: EngineKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), BaselineError> {
        if self.inner_steps < 1 {
            return Err(BaselineError::invalid("inner_steps", "T must be at least 1"));
        }
        if !(self.inner_lr > 0.0 && self.inner_lr.is_finite()) {
            return Err(BaselineError::invalid(
                "inner_lr",
                format!("inner_lr = {} must be positive and finite", self.inner_lr),
            ));
        }
        if !(self.bda_mu > 0.0 && self.bda_mu < 1.0) {
            return Err(BaselineError::invalid(
                "bda_mu",
                format!("bda_mu = {} must lie in (0, 1)", self.bda_mu),
            ));
        }
        if !(self.cg_tol > 0.0) {
            return Err(BaselineError::invalid(
                "cg_tol",
                format!("cg_tol = {} must be positive", self.cg_tol),
            ));
        }
        if let Some(b) = self.ns_beta {
            if !(b > 0.0 && b.is_finite()) {
                return Err(BaselineError::invalid(
                    "ns_beta",
                    format!("ns_beta = {b} must be positive and finite"),
                ));
            }
        }
        if !(self.ns_residual_tol > 0.0) {
            return Err(BaselineError::invalid(
                "ns_residual_tol",
                format!("ns_residual_tol = {} must be positive", self.ns_residual_tol),
            ));
        }
        Ok(())
    }

    /// The engine's direction at `x`, with the inner loop started from `y0`.
    pub fn hypergradient<P: BilevelProblem + ?Sized>(
        &self,
        problem: &P,
        x: &Vector,
        y0: &Vector,
    ) -> Result<Hypergradient, BaselineError> {
        let beta = self.inner_lr;
        let steps = self.inner_steps;
        match self.kind {
            EngineKind::Rhg | EngineKind::Bda => {
                let mu = if self.kind == EngineKind::Bda { self.bda_mu } else { 0.0 };
                let (g, y) = rhg_hypergradient(problem, x, y0, beta, steps, mu)?;
                Ok(Hypergradient {
                    g,
                    y,
                    v: None,
                    solve_converged: None,
                })
            }
            EngineKind::CgAid | EngineKind::NsAid => {
                let (y, _) = inner_gd(problem, x, y0, beta, steps, 0.0)?;
                let out = if self.kind == EngineKind::CgAid {
                    let max_iter = self.cg_max_iter.unwrap_or(10 * problem.dim_y());
                    aid_cg_hypergradient(problem, x, &y, self.cg_tol, max_iter)?
                } else {
                    let mut out = aid_ns_hypergradient(problem, x, &y, self.ns_beta.unwrap_or(beta), self.ns_length)?;
                    out.converged = out.g.is_finite() && out.relative_residual() <= self.ns_residual_tol;
                    out
                };
                Ok(Hypergradient {
                    g: out.g,
                    y,
                    v: Some(out.v),
                    solve_converged: Some(out.converged),
                })
            }
        }
    }
}
