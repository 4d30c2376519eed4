//! Toy bilevel problems with analytic derivatives and closed-form oracles.

mod llc;
mod llsc;

pub use llc::{llc_oracle, llc_oracle_limit, LlcProblem};
pub use llsc::{llsc_oracle, LlscProblem};

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::linalg::{Matrix, Vector};
use crate::problem::{BilevelProblem, ProblemError, ProblemMetadata};

/// Closed-form `y*_μ(x)`, `v*_μ(x)`, `Φ_μ(x)` and `∇Φ_μ(x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleValues {
    pub y_star: Vector,
    pub v_star: Vector,
    pub phi: f64,
    pub grad_phi: Vector,
}

/// Problems whose surrogate solution map is known in closed form.
pub trait ClosedFormOracle {
    /// Oracle values at aggregation weight `mu`.
    fn oracle(&self, x: &Vector, mu: f64) -> Result<OracleValues, ProblemError>;

    /// The bilevel solution `x*`.
    fn solution(&self) -> Vector;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Llc,
    Llsc,
    RandomLlsc,
}

impl ProblemKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Llc => "llc",
            Self::Llsc => "llsc",
            Self::RandomLlsc => "random_llsc",
        }
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for ProblemKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "llc" => Ok(Self::Llc),
            "llsc" => Ok(Self::Llsc),
            "random_llsc" | "random-llsc" => Ok(Self::RandomLlsc),
            other => Err(format!(
                "unknown problem kind `{other}` (expected llc, llsc or random_llsc)"
            )),
        }
    }
}

pub const DEFAULT_CONDITION_NUMBER: f64 = 10.0;

/// One of the built-in toy problems.
#[derive(Debug)]
pub enum ToyProblem {
    Llc(LlcProblem),
    Llsc(LlscProblem),
}

impl ToyProblem {
    fn inner(&self) -> &dyn BilevelProblem {
        match self {
            Self::Llc(p) => p,
            Self::Llsc(p) => p,
        }
    }
}

/// Builds a toy problem.
///
/// `random_llsc` draws `A = Q Λ Qᵀ` with `Q` the orthogonal factor of a
/// seeded Gaussian matrix and eigenvalues log-uniform in
/// `[1, condition_number]`; `z₀ = e`. The same seed gives the same matrix bit
/// for bit. `seed` and `condition_number` are ignored for `llc` and `llsc`.
pub fn make_problem(
    kind: ProblemKind,
    n: usize,
    seed: Option<u64>,
    condition_number: Option<f64>,
) -> Result<ToyProblem, ProblemError> {
    if n == 0 {
        return Err(ProblemError::InvalidParameter("dimension n must be at least 1".into()));
    }
    match kind {
        ProblemKind::Llc => Ok(ToyProblem::Llc(LlcProblem::new(n)?)),
        ProblemKind::Llsc => Ok(ToyProblem::Llsc(LlscProblem::identity(n)?)),
        ProblemKind::RandomLlsc => {
            let kappa = condition_number.unwrap_or(DEFAULT_CONDITION_NUMBER);
            let (a, spectrum) = random_spd(n, seed.unwrap_or(0), kappa)?;
            let lo = spectrum.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = spectrum.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            Ok(ToyProblem::Llsc(LlscProblem::with_spectrum(
                a,
                Vector::ones(n),
                lo,
                Some(hi),
            )?))
        }
    }
}

/// Seeded random SPD matrix with spectrum in `[1, condition_number]`.
/// Returns the matrix and its eigenvalues.
pub fn random_spd(n: usize, seed: u64, condition_number: f64) -> Result<(Matrix, Vec<f64>), ProblemError> {
    if !(condition_number >= 1.0 && condition_number.is_finite()) {
        return Err(ProblemError::InvalidParameter(format!(
            "condition number must be finite and >= 1, got {condition_number}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let log_kappa = condition_number.ln();
    let spectrum: Vec<f64> = (0..n).map(|_| (rng.random::<f64>() * log_kappa).exp()).collect();
    let gaussian = nalgebra::DMatrix::<f64>::from_fn(n, n, |_, _| rng.sample(StandardNormal));
    let q = gaussian.qr().q();
    let scaled = &q * nalgebra::DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&spectrum));
    let a = scaled * q.transpose();
    let mut data = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            // Exact symmetry; the product is symmetric only up to rounding.
            data.push(0.5 * (a[(i, j)] + a[(j, i)]));
        }
    }
    Ok((Matrix::from_row_major(n, n, data)?, spectrum))
}

impl BilevelProblem for ToyProblem {
    fn dim_x(&self) -> usize {
        self.inner().dim_x()
    }
    fn dim_y(&self) -> usize {
        self.inner().dim_y()
    }
    fn upper_value(&self, x: &Vector, y: &Vector) -> f64 {
        self.inner().upper_value(x, y)
    }
    fn lower_value(&self, x: &Vector, y: &Vector) -> f64 {
        self.inner().lower_value(x, y)
    }
    fn grad_x_upper(&self, x: &Vector, y: &Vector) -> Vector {
        self.inner().grad_x_upper(x, y)
    }
    fn grad_y_upper(&self, x: &Vector, y: &Vector) -> Vector {
        self.inner().grad_y_upper(x, y)
    }
    fn grad_y_lower(&self, x: &Vector, y: &Vector) -> Vector {
        self.inner().grad_y_lower(x, y)
    }
    fn hvp_yy_upper(&self, x: &Vector, y: &Vector, v: &Vector) -> Vector {
        self.inner().hvp_yy_upper(x, y, v)
    }
    fn hvp_yy_lower(&self, x: &Vector, y: &Vector, v: &Vector) -> Vector {
        self.inner().hvp_yy_lower(x, y, v)
    }
    fn jvp_xy_upper(&self, x: &Vector, y: &Vector, v: &Vector) -> Vector {
        self.inner().jvp_xy_upper(x, y, v)
    }
    fn jvp_xy_lower(&self, x: &Vector, y: &Vector, v: &Vector) -> Vector {
        self.inner().jvp_xy_lower(x, y, v)
    }
    fn metadata(&self) -> ProblemMetadata {
        self.inner().metadata()
    }
}

impl ClosedFormOracle for ToyProblem {
    fn oracle(&self, x: &Vector, mu: f64) -> Result<OracleValues, ProblemError> {
        match self {
            Self::Llc(p) => p.oracle(x, mu),
            Self::Llsc(p) => p.oracle(x, mu),
        }
    }

    fn solution(&self) -> Vector {
        match self {
            Self::Llc(p) => p.solution(),
            Self::Llsc(p) => p.solution(),
        }
    }
}
