use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::linalg::{fd_gradient, fd_hvp, Vector, DEFAULT_FD_STEP};
use crate::problem::BilevelProblem;

/// Largest relative error accepted by [`check_derivatives`].
pub const DERIVATIVE_TOL: f64 = 1e-6;

/// The analytic actions compared against finite differences, in report order.
pub const CHECKED_DERIVATIVES: [&str; 7] = [
    "grad_x_upper",
    "grad_y_upper",
    "grad_y_lower",
    "hvp_yy_upper",
    "hvp_yy_lower",
    "jvp_xy_upper",
    "jvp_xy_lower",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivativeCheck {
    pub name: String,
    /// `max ‖analytic − fd‖ / max(1, ‖fd‖)` over the sampled points.
    pub max_rel_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplePoint {
    pub x: Vector,
    pub y: Vector,
    pub v: Vector,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivativeReport {
    pub checks: Vec<DerivativeCheck>,
    pub threshold: f64,
    /// Derivative and point with the largest error.
    pub worst: Option<(String, SamplePoint)>,
    pub passed: bool,
}

impl DerivativeReport {
    pub fn max_error(&self) -> f64 {
        self.checks.iter().map(|c| c.max_rel_error).fold(0.0, f64::max)
    }
}

/// Compares every analytic derivative action of `problem` with central
/// differences at `num_points` seeded random points `(x, y, v)`, each of
/// norm at most `radius`.
///
/// Mixed products `∇²_xy · v` are checked as the finite-difference
/// `x`-gradient of `⟨v, ∇_y ·⟩`. A non-finite evaluation counts as an
/// infinite error. At least one point is always sampled.
pub fn check_derivatives<P: BilevelProblem + ?Sized>(
    problem: &P,
    num_points: usize,
    radius: f64,
    seed: u64,
) -> DerivativeReport {
    let h = DEFAULT_FD_STEP;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut errors = [0.0f64; CHECKED_DERIVATIVES.len()];
    let mut worst: Option<(f64, usize, SamplePoint)> = None;

    for _ in 0..num_points.max(1) {
        let x = sample_ball(&mut rng, problem.dim_x(), radius);
        let y = sample_ball(&mut rng, problem.dim_y(), radius);
        let v = sample_ball(&mut rng, problem.dim_y(), radius);

        let gx_upper = fd_gradient(|x| problem.upper_value(x, &y), &x, h);
        let gy_upper = fd_gradient(|y| problem.upper_value(&x, y), &y, h);
        let gy_lower = fd_gradient(|y| problem.lower_value(&x, y), &y, h);
        let hv_upper = fd_hvp(|y| problem.grad_y_upper(&x, y), &y, &v, h);
        let hv_lower = fd_hvp(|y| problem.grad_y_lower(&x, y), &y, &v, h);
        let jv_upper = fd_gradient(|x| v.dot(&problem.grad_y_upper(x, &y)), &x, h);
        let jv_lower = fd_gradient(|x| v.dot(&problem.grad_y_lower(x, &y)), &x, h);

        let pairs = [
            (problem.grad_x_upper(&x, &y), gx_upper),
            (problem.grad_y_upper(&x, &y), gy_upper),
            (problem.grad_y_lower(&x, &y), gy_lower),
            (problem.hvp_yy_upper(&x, &y, &v), hv_upper),
            (problem.hvp_yy_lower(&x, &y, &v), hv_lower),
            (problem.jvp_xy_upper(&x, &y, &v), jv_upper),
            (problem.jvp_xy_lower(&x, &y, &v), jv_lower),
        ];
        for (i, (analytic, fd)) in pairs.into_iter().enumerate() {
            let err = match fd {
                Ok(fd) => relative_error(&analytic, &fd),
                Err(_) => f64::INFINITY,
            };
            errors[i] = errors[i].max(err);
            if worst.as_ref().map_or(true, |(w, _, _)| err > *w) {
                worst = Some((
                    err,
                    i,
                    SamplePoint {
                        x: x.clone(),
                        y: y.clone(),
                        v: v.clone(),
                    },
                ));
            }
        }
    }

    let checks: Vec<_> = CHECKED_DERIVATIVES
        .iter()
        .zip(errors)
        .map(|(name, max_rel_error)| DerivativeCheck {
            name: (*name).to_string(),
            max_rel_error,
        })
        .collect();
    let passed = checks.iter().all(|c| c.max_rel_error <= DERIVATIVE_TOL);
    DerivativeReport {
        checks,
        threshold: DERIVATIVE_TOL,
        worst: worst.map(|(_, i, point)| (CHECKED_DERIVATIVES[i].to_string(), point)),
        passed,
    }
}

fn relative_error(analytic: &Vector, fd: &Vector) -> f64 {
    if analytic.dim() != fd.dim() {
        return f64::INFINITY;
    }
    let err = analytic.distance(fd) / fd.norm().max(1.0);
    if err.is_nan() {
        f64::INFINITY
    } else {
        err
    }
}

/// Uniform sample from the ball of the given radius.
fn sample_ball(rng: &mut ChaCha8Rng, dim: usize, radius: f64) -> Vector {
    let mut d = Vector::from_fn(dim, |_| rng.sample(StandardNormal));
    let norm = d.norm();
    if norm == 0.0 {
        return d;
    }
    let r = radius * rng.random::<f64>().powf(1.0 / dim as f64);
    d.scale(r / norm);
    d
}
