//! Property tests over randomly generated problems, points and schedules.

use bamm_core::diagnostics::check_derivatives;
use bamm_core::harness::{read_trace_json, write_trace, IterateRecord, RunConfig, Trace, TraceFormat, TraceMetadata};
use bamm_core::linalg::{cg_solve, fd_gradient, Vector, DEFAULT_FD_STEP};
use bamm_core::problems::LlcProblem;
use bamm_core::solver::{kkt_residual, slbamm_step, BetaMode};
use bamm_core::{
    make_problem, AggregationContext, BilevelProblem, ClosedFormOracle, ProblemKind, RunStatus, ScheduleParams,
    SolverState, Strategy, ToyProblem,
};
use proptest::prelude::*;
use proptest::strategy::Strategy as _;

fn vector(n: usize) -> impl proptest::strategy::Strategy<Value = Vector> {
    prop::collection::vec(-3.0..3.0f64, n).prop_map(Vector::from)
}

fn random_llsc(n: usize, seed: u64, kappa: f64) -> ToyProblem {
    make_problem(ProblemKind::RandomLlsc, n, Some(seed), Some(kappa)).unwrap()
}

/// A random strongly convex instance with three points in the right spaces.
fn llsc_case() -> impl proptest::strategy::Strategy<Value = (ToyProblem, Vector, Vector, Vector, Vector)> {
    (1usize..8, any::<u64>(), 1.0..50.0f64).prop_flat_map(|(n, seed, kappa)| {
        (vector(n), vector(n), vector(n), vector(n))
            .prop_map(move |(x, y, u, v)| (random_llsc(n, seed, kappa), x, y, u, v))
    })
}

fn close(a: &Vector, b: &Vector, tol: f64) -> bool {
    a.distance(b) <= tol * (1.0 + a.norm().max(b.norm()))
}

fn strategy() -> impl proptest::strategy::Strategy<Value = Strategy> {
    prop_oneof![
        Just(Strategy::S1),
        Just(Strategy::S2),
        Just(Strategy::S3),
        Just(Strategy::Sc)
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hvp_is_linear_and_symmetric((p, x, y, u, v) in llsc_case(), a in -2.0..2.0f64, mu in 0.0..1.0f64) {
        let ctx = AggregationContext::new(&p, mu);
        let hu = ctx.hvp_yy(&x, &y, &u).unwrap();
        let hv = ctx.hvp_yy(&x, &y, &v).unwrap();
        let combo = Vector::lincomb(a, &u, 1.0, &v);
        prop_assert!(close(&ctx.hvp_yy(&x, &y, &combo).unwrap(), &Vector::lincomb(a, &hu, 1.0, &hv), 1e-12));
        prop_assert!((u.dot(&hv) - v.dot(&hu)).abs() <= 1e-10 * (1.0 + u.norm() * v.norm()));
    }

    #[test]
    fn jvp_is_linear((p, x, y, u, v) in llsc_case(), a in -2.0..2.0f64) {
        let ju = p.jvp_xy_lower(&x, &y, &u);
        let jv = p.jvp_xy_lower(&x, &y, &v);
        let combo = Vector::lincomb(a, &u, 1.0, &v);
        prop_assert!(close(&p.jvp_xy_lower(&x, &y, &combo), &Vector::lincomb(a, &ju, 1.0, &jv), 1e-12));
    }

    #[test]
    fn hessian_rayleigh_quotient_within_spectrum(
        n in 1usize..8, seed in any::<u64>(), kappa in 1.0..50.0f64, v in vector(8)
    ) {
        let p = random_llsc(n, seed, kappa);
        let v = Vector::from(v.as_slice()[..n].to_vec());
        prop_assume!(v.norm() > 1e-3);
        let ToyProblem::Llsc(q) = &p else { unreachable!() };
        let x = Vector::zeros(n);
        let rq = v.dot(&p.hvp_yy_lower(&x, &x, &v)) / v.norm_sq();
        prop_assert!(rq >= q.lambda_min() * (1.0 - 1e-10));
        prop_assert!(rq <= q.lambda_max().unwrap() * (1.0 + 1e-10));
    }

    #[test]
    fn lower_gradient_matches_finite_differences((p, x, y, _u, _v) in llsc_case()) {
        let fd = fd_gradient(|y: &Vector| p.lower_value(&x, y), &y, DEFAULT_FD_STEP).unwrap();
        prop_assert!(close(&p.grad_y_lower(&x, &y), &fd, 1e-6));
    }

    #[test]
    fn kkt_vanishes_only_with_the_hypergradient((p, x, _y, _u, _v) in llsc_case()) {
        let o = p.oracle(&x, 0.0).unwrap();
        let kkt = kkt_residual(&p, &x, &o.y_star, &o.v_star).unwrap();
        let g2 = o.grad_phi.norm_sq();
        prop_assert!((kkt - g2).abs() <= 1e-9 * (1.0 + g2));
    }

    #[test]
    fn llc_lower_gradient_vanishes_on_solution_set(n in 1usize..6, x in vector(6), tail in vector(6)) {
        let p = LlcProblem::new(n).unwrap();
        let x = Vector::from(x.as_slice()[..n].to_vec());
        let y = x.concat(&Vector::from(tail.as_slice()[..n].to_vec()));
        prop_assert_eq!(p.grad_y_lower(&x, &y), Vector::zeros(2 * n));
    }

    #[test]
    fn cg_residual_meets_tolerance((p, _x, _y, u, _v) in llsc_case()) {
        let ToyProblem::Llsc(q) = &p else { unreachable!() };
        let out = cg_solve(q.a(), &u, 1e-10, 10 * u.dim() + 10).unwrap();
        prop_assert!(out.converged);
        let r = Vector::lincomb(1.0, &u, -1.0, &q.a().matvec(&out.x));
        prop_assert!(r.norm() <= 1e-10 * u.norm().max(1.0) * (1.0 + 1e-6));
    }

    #[test]
    fn schedules_are_monotone(
        strategy in strategy(),
        p_exp in 0.0..0.3f64,
        tau in 0.0..0.3f64,
        mu_bar in 0.01..1.0f64,
        decay in any::<bool>(),
        k in 0u64..100_000,
    ) {
        let params = ScheduleParams {
            strategy,
            p: p_exp,
            tau,
            mu_bar,
            beta_mode: if decay { BetaMode::Decay } else { BetaMode::Constant },
            ..ScheduleParams::default()
        };
        let now = params.step_sizes(k);
        let next = params.step_sizes(k + 1);
        prop_assert!((0.0..=1.0).contains(&now.mu));
        for (a, b) in [(now.mu, next.mu), (now.alpha, next.alpha), (now.eta, next.eta), (now.beta, next.beta)] {
            prop_assert!(b <= a, "{:?} -> {:?}", now, next);
            prop_assert!(b >= 0.0);
        }
        if strategy != Strategy::Sc {
            prop_assert!(now.alpha <= now.eta);
        }
    }

    #[test]
    fn one_step_changes_only_by_directions((p, x, y, _u, v) in llsc_case(), strategy in strategy(), k in 0u64..50) {
        let sizes = ScheduleParams::with_strategy(strategy).step_sizes(k);
        let state = SolverState { x: x.clone(), y: y.clone(), v: v.clone(), k };
        let next = slbamm_step(&p, &state, &sizes).unwrap();
        let ctx = AggregationContext::new(&p, sizes.mu);
        let d_y = ctx.grad_y(&x, &y).unwrap();
        prop_assert!(close(&next.y, &Vector::lincomb(1.0, &y, -sizes.beta, &d_y), 1e-14));
        prop_assert_eq!(next.k, k + 1);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn json_traces_round_trip(values in prop::collection::vec(prop_oneof![-1e150..1e150f64, Just(0.0), Just(1e-310)], 1..6)) {
        let records: Vec<IterateRecord> = values
            .iter()
            .enumerate()
            .map(|(k, &v)| IterateRecord {
                k: k as u64,
                wall_time_s: v.abs(),
                parallel_time_s: v.abs(),
                f: v,
                kkt: Some(v * v),
                x_err: (k % 2 == 0).then_some(v),
                y_err: None,
                v_err: Some(-v),
                hypergrad_err: None,
                grad_phi_norm: Some(v.abs()),
                mu: Some(0.5),
                alpha: Some(v),
                beta: None,
                eta: Some(1e-300),
                lyapunov_v: None,
                dx_norm: v.abs(),
                x_rel_err: Some(v),
                hypergrad_rel_err: None,
            })
            .collect();
        let trace = Trace {
            metadata: TraceMetadata {
                config: RunConfig::default(),
                status: RunStatus::Completed,
                warnings: vec!["w".into()],
                solve_failures: 0,
                oracle: true,
                final_x: Vector::from(values.clone()),
            },
            records,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.json");
        write_trace(&trace, &path, TraceFormat::Json).unwrap();
        prop_assert_eq!(read_trace_json(&path).unwrap(), trace);
    }
}

#[test]
fn derivatives_match_finite_differences_on_wide_samples() {
    let problems = [
        ("llc", make_problem(ProblemKind::Llc, 5, None, None).unwrap()),
        ("llsc", make_problem(ProblemKind::Llsc, 5, None, None).unwrap()),
        ("random_llsc", random_llsc(5, 17, 30.0)),
    ];
    for (name, p) in &problems {
        let report = check_derivatives(p, 100, 10.0, 23);
        assert!(report.passed, "{name}: {:?}", report.checks);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn llc_oracle_is_stationary(n in 1usize..6, x in vector(6), k in 0u64..10_000) {
        let p = LlcProblem::new(n).unwrap();
        let x = Vector::from(x.as_slice()[..n].to_vec());
        let mu = 0.9 * ((k + 1) as f64).powf(-0.05);
        let o = p.oracle(&x, mu).unwrap();
        let ctx = AggregationContext::new(&p, mu);
        prop_assert!(ctx.grad_y(&x, &o.y_star).unwrap().norm() <= 1e-12 * (1.0 + x.norm()));
        let lhs = ctx.hvp_yy(&x, &o.y_star, &o.v_star).unwrap();
        prop_assert!(close(&lhs, &p.grad_y_upper(&x, &o.y_star), 1e-12));

        // ‖v*_μ‖ ≤ ‖∇_y F(x, y*_μ)‖ / σ_ψμ with σ_ψμ = μ σ_F + (1−μ) σ_f.
        let sigma = p.metadata().sigma_psi(mu).unwrap();
        prop_assert!(o.v_star.norm() <= p.grad_y_upper(&x, &o.y_star).norm() / sigma * (1.0 + 1e-12) + 1e-15);
    }
}
