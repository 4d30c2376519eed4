//! End-to-end acceptance checks. Each test prints one `PASS`/`FAIL` line and
//! then asserts. Tests take a shared lock so timings are not disturbed by
//! concurrently running checks.

use std::io::Write;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use bamm_core::baselines::{aid_cg_hypergradient, aid_ns_hypergradient, rhg_hypergradient};
use bamm_core::diagnostics::check_derivatives;
use bamm_core::harness::{run_experiment, write_csv, Method, RunConfig, CSV_COLUMNS};
use bamm_core::linalg::{Matrix, Vector};
use bamm_core::problems::{random_spd, ClosedFormOracle, LlcProblem, LlscProblem};
use bamm_core::solver::{kkt_residual, run, schedule_step_sizes, IterationView};
use bamm_core::{BilevelProblem, Budget, ProblemKind, RunStatus, ScheduleParams, SolverState, Strategy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

/// Written to the stderr handle, which the test harness does not capture, so
/// the line shows up in a plain `cargo test` run.
fn report(id: u32, name: &str, pass: bool, detail: String) {
    let line = format!("{} {id:>2} {name}: {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(pass, "acceptance {id} ({name}) failed: {detail}");
}

fn rms(a: &Vector, b: &Vector) -> f64 {
    a.distance(b) / (a.dim() as f64).sqrt()
}

fn config(method: &str, kind: ProblemKind, n: usize, iters: u64) -> RunConfig {
    let mut cfg = RunConfig {
        method: method.parse().unwrap(),
        ..RunConfig::default()
    };
    cfg.problem.kind = kind;
    cfg.problem.n = n;
    cfg.budget.max_iters = iters;
    cfg
}

/// Independent oracle for the strongly convex toy problem:
/// `∇Φ(x) = (x − z₀) + A⁻¹x` by an LU solve.
fn llsc_grad_phi(a: &Matrix, z0: &Vector, x: &Vector) -> Vector {
    let n = x.dim();
    let m = nalgebra::DMatrix::from_row_slice(n, n, a.as_slice());
    let sol = m.lu().solve(&nalgebra::DVector::from_column_slice(x)).unwrap();
    Vector::from_fn(n, |i| x[i] - z0[i] + sol[i])
}

fn random_vector(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vector {
    Vector::from_fn(n, |_| scale * (2.0 * rng.random::<f64>() - 1.0))
}

#[test]
fn a01_llc_convergence() {
    let _guard = serial();
    let n = 100;
    let cfg = config("slbamm-s3", ProblemKind::Llc, n, 4000);
    let clock = Instant::now();
    let trace = run_experiment(&cfg).unwrap();
    let elapsed = clock.elapsed();
    let x_err = rms(&trace.metadata.final_x, &Vector::ones(n));
    let kkt_ratio = trace.records[4000].kkt.unwrap() / trace.records[10].kkt.unwrap();
    let pass = trace.records.len() == 4001 && x_err <= 5e-2 && kkt_ratio <= 1e-3 && elapsed <= Duration::from_secs(30);
    report(
        1,
        "llc_convergence",
        pass,
        format!("rms ||x-e|| = {x_err:.3e}, kkt(K)/kkt(10) = {kkt_ratio:.3e}, time = {elapsed:.2?}"),
    );
}

#[test]
fn a02_baselines_fail_on_llc() {
    let _guard = serial();
    let n = 100;
    let e = Vector::ones(n);
    let half = e.scaled(0.5);

    let rhg = run_experiment(&config("rhg", ProblemKind::Llc, n, 500)).unwrap();
    let x = &rhg.metadata.final_x;
    let to_half = rms(x, &half);
    let to_e = rms(x, &e);

    let cg = run_experiment(&config("cg", ProblemKind::Llc, n, 500)).unwrap();
    let ns = run_experiment(&config("ns", ProblemKind::Llc, n, 500)).unwrap();
    let pass = to_half <= 1e-2 && to_e >= 0.4 && cg.metadata.solve_failures > 0 && ns.metadata.solve_failures > 0;
    report(
        2,
        "baselines_fail_on_llc",
        pass,
        format!(
            "rhg rms ||x-e/2|| = {to_half:.3e}, rms ||x-e|| = {to_e:.3}; flagged solves: cg {}/501, ns {}/501",
            cg.metadata.solve_failures, ns.metadata.solve_failures
        ),
    );
}

#[test]
fn a03_ablation_without_aggregation() {
    let _guard = serial();
    let n = 100;
    let trace = run_experiment(&config("slbamm-sc", ProblemKind::Llc, n, 4000)).unwrap();
    let x = &trace.metadata.final_x;
    let to_half = rms(x, &Vector::filled(n, 0.5));
    let to_e = rms(x, &Vector::ones(n));
    let pass = trace.metadata.status == RunStatus::Completed && to_half <= 1e-2 && to_e >= 0.4;
    report(
        3,
        "ablation_mu_zero",
        pass,
        format!("rms ||x-e/2|| = {to_half:.3e}, rms ||x-e|| = {to_e:.3}"),
    );
}

#[test]
fn a04_llsc_convergence() {
    let _guard = serial();
    let n = 100;
    let cfg = config("slbamm-sc", ProblemKind::Llsc, n, 4000);
    let clock = Instant::now();
    let trace = run_experiment(&cfg).unwrap();
    let elapsed = clock.elapsed();
    let half = Vector::filled(n, 0.5);
    let rel = trace.metadata.final_x.distance(&half) / half.norm();
    let hyper = trace.records.last().unwrap().hypergrad_err.unwrap();
    let pass = trace.records.len() == 4001 && rel <= 1e-3 && hyper <= 1e-3 && elapsed <= Duration::from_secs(30);
    report(
        4,
        "llsc_convergence",
        pass,
        format!("||x-e/2||/||e/2|| = {rel:.3e}, ||d_x - grad Phi|| = {hyper:.3e}, time = {elapsed:.2?}"),
    );
}

#[test]
fn a05_hypergradient_exactness() {
    let _guard = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(5);

    let mut cg_worst = 0.0f64;
    for i in 0..50 {
        let n = rng.random_range(1..=16);
        let kappa = 1.0 + 99.0 * rng.random::<f64>();
        let (a, spectrum) = random_spd(n, 1000 + i, kappa).unwrap();
        let z0 = random_vector(&mut rng, n, 1.0);
        let lo = spectrum.iter().copied().fold(f64::INFINITY, f64::min);
        let p = LlscProblem::with_spectrum(a.clone(), z0.clone(), lo, None).unwrap();
        let x = random_vector(&mut rng, n, 2.0);
        let y = p.oracle(&x, 0.0).unwrap().y_star;
        let g = aid_cg_hypergradient(&p, &x, &y, 1e-10, 10 * n).unwrap().g;
        cg_worst = cg_worst.max(g.distance(&llsc_grad_phi(&a, &z0, &x)));
    }

    let n = 10;
    let p = LlscProblem::identity(n).unwrap();
    let x = random_vector(&mut rng, n, 1.0);
    let exact = llsc_grad_phi(&Matrix::identity(n), &Vector::ones(n), &x);
    let (g, _) = rhg_hypergradient(&p, &x, &Vector::zeros(n), 0.5, 1000, 0.0).unwrap();
    let rhg_err = g.distance(&exact);

    let y = x.clone();
    let errors: Vec<f64> = (0..12)
        .map(|m| aid_ns_hypergradient(&p, &x, &y, 0.5, m).unwrap().g.distance(&exact))
        .collect();
    let ratios: Vec<f64> = errors.windows(2).map(|w| w[1] / w[0]).collect();
    let ns_ok = ratios.iter().all(|r| (r - 0.5).abs() <= 0.05);

    let pass = cg_worst <= 1e-8 && rhg_err <= 1e-6 && ns_ok;
    report(
        5,
        "hypergradient_exactness",
        pass,
        format!(
            "cg worst = {cg_worst:.3e}, rhg(T=1000) = {rhg_err:.3e}, ns ratios in [{:.4}, {:.4}]",
            ratios.iter().copied().fold(f64::INFINITY, f64::min),
            ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        ),
    );
}

#[test]
fn a06_kkt_equals_hypergradient_norm() {
    let _guard = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    for i in 0..100 {
        let n = 1 + i % 12;
        let (a, _) = random_spd(n, 600 + i as u64, 20.0).unwrap();
        let z0 = random_vector(&mut rng, n, 1.0);
        let p = LlscProblem::new(a.clone(), z0.clone()).unwrap();
        let x = random_vector(&mut rng, n, 1.0);
        let o = p.oracle(&x, 0.0).unwrap();
        let kkt = kkt_residual(&p, &x, &o.y_star, &o.v_star).unwrap();
        worst = worst.max((kkt - llsc_grad_phi(&a, &z0, &x).norm_sq()).abs());
    }
    let n = 8;
    let p = LlscProblem::identity(n).unwrap();
    let half = Vector::filled(n, 0.5);
    let o = p.oracle(&half, 0.0).unwrap();
    let at_solution = kkt_residual(&p, &half, &o.y_star, &o.v_star).unwrap();
    let pass = worst <= 1e-10 && at_solution <= 1e-20;
    report(
        6,
        "kkt_identity",
        pass,
        format!("max |kkt - ||grad Phi||^2| = {worst:.3e}, kkt at e/2 = {at_solution:.3e}"),
    );
}

#[test]
fn a07_derivative_suite() {
    let _guard = serial();
    let mut reports = vec![
        ("llc", check_derivatives(&LlcProblem::new(20).unwrap(), 5, 1.0, 70)),
        (
            "llsc",
            check_derivatives(&LlscProblem::identity(20).unwrap(), 5, 1.0, 71),
        ),
    ];
    for seed in 0..10u64 {
        let p = bamm_core::make_problem(ProblemKind::RandomLlsc, 20, Some(seed), None).unwrap();
        reports.push(("random_llsc", check_derivatives(&p, 5, 1.0, 100 + seed)));
    }
    let worst = reports.iter().map(|(_, r)| r.max_error()).fold(0.0, f64::max);
    let all_pass = reports.iter().all(|(_, r)| r.passed);

    let faulty = check_derivatives(&Shifted(LlscProblem::identity(5).unwrap()), 3, 1.0, 7);
    let pass = all_pass && !faulty.passed;
    report(
        7,
        "derivative_suite",
        pass,
        format!(
            "{} problems, worst relative error {worst:.3e}; injected fault detected: {}",
            reports.len(),
            !faulty.passed
        ),
    );
}

/// `∇_y f` off by one in its first component.
struct Shifted(LlscProblem);

impl BilevelProblem for Shifted {
    fn dim_x(&self) -> usize {
        self.0.dim_x()
    }
    fn dim_y(&self) -> usize {
        self.0.dim_y()
    }
    fn upper_value(&self, x: &Vector, y: &Vector) -> f64 {
        self.0.upper_value(x, y)
    }
    fn lower_value(&self, x: &Vector, y: &Vector) -> f64 {
        self.0.lower_value(x, y)
    }
    fn grad_x_upper(&self, x: &Vector, y: &Vector) -> Vector {
        self.0.grad_x_upper(x, y)
    }
    fn grad_y_upper(&self, x: &Vector, y: &Vector) -> Vector {
        self.0.grad_y_upper(x, y)
    }
    fn grad_y_lower(&self, x: &Vector, y: &Vector) -> Vector {
        let mut g = self.0.grad_y_lower(x, y);
        g[0] += 1.0;
        g
    }
    fn hvp_yy_upper(&self, x: &Vector, y: &Vector, v: &Vector) -> Vector {
        self.0.hvp_yy_upper(x, y, v)
    }
    fn hvp_yy_lower(&self, x: &Vector, y: &Vector, v: &Vector) -> Vector {
        self.0.hvp_yy_lower(x, y, v)
    }
    fn jvp_xy_upper(&self, x: &Vector, y: &Vector, v: &Vector) -> Vector {
        self.0.jvp_xy_upper(x, y, v)
    }
    fn jvp_xy_lower(&self, x: &Vector, y: &Vector, v: &Vector) -> Vector {
        self.0.jvp_xy_lower(x, y, v)
    }
}

#[test]
fn a08_schedule_values() {
    let _guard = serial();
    let base = ScheduleParams {
        mu_bar: 0.9,
        p: 0.05,
        tau: 0.025,
        beta: 0.1,
        ..ScheduleParams::default()
    };
    // (μ, β, η, α) at k = 0: μ = μ̄, η = β μ^a, α = β μ^b.
    let expected = [
        (Strategy::S1, [0.9, 0.1, 0.1 * 0.81, 0.1 * 0.4782969]),
        (Strategy::S2, [0.9, 0.1, 0.1 * 0.9, 0.1 * 0.59049]),
        (Strategy::S3, [0.9, 0.1, 0.1, 0.1 * 0.729]),
        (Strategy::Sc, [0.0, 0.1, 0.1, 0.1]),
    ];
    let mut worst = 0.0f64;
    for (strategy, want) in expected {
        let s = schedule_step_sizes(
            &ScheduleParams {
                strategy,
                ..base.clone()
            },
            0,
        );
        for (got, want) in [s.mu, s.beta, s.eta, s.alpha].into_iter().zip(want) {
            worst = worst.max((got - want).abs());
        }
    }
    let s1 = schedule_step_sizes(
        &ScheduleParams {
            strategy: Strategy::S1,
            ..base
        },
        0,
    );
    let s1_literal = [s1.mu - 0.9, s1.beta - 0.1, s1.eta - 0.081, s1.alpha - 0.04782969]
        .iter()
        .all(|d| d.abs() <= 1e-15);
    let pass = worst <= 1e-15 && s1_literal;
    report(
        8,
        "schedule_values",
        pass,
        format!("max deviation {worst:.3e} over S1, S2, S3, SC"),
    );
}

#[test]
fn a09_lyapunov_sanity() {
    let _guard = serial();
    let trace = run_experiment(&config("slbamm-s3", ProblemKind::Llc, 100, 4000)).unwrap();
    let v: Vec<f64> = trace.records.iter().map(|r| r.lyapunov_v.unwrap()).collect();
    let v_max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (first, last) = (&trace.records[10], &trace.records[4000]);
    let y_ratio = last.y_err.unwrap() / first.y_err.unwrap();
    let v_ratio = last.v_err.unwrap() / first.v_err.unwrap();
    let pass = v_max <= 10.0 * v[0] && y_ratio <= 1e-2 && v_ratio <= 1e-2;
    report(
        9,
        "lyapunov_sanity",
        pass,
        format!(
            "max V / V_0 = {:.4}, y_err(K)/y_err(10) = {y_ratio:.3e}, v_err(K)/v_err(10) = {v_ratio:.3e}",
            v_max / v[0]
        ),
    );
}

/// Median per-iteration algorithm time of an SC run on a dense random SPD
/// problem, and the total time.
fn scaling_run(n: usize, iters: u64) -> (f64, Duration) {
    let p = bamm_core::make_problem(ProblemKind::RandomLlsc, n, Some(11), None).unwrap();
    let params = ScheduleParams::with_strategy(Strategy::Sc);
    let mut times = Vec::with_capacity(iters as usize + 1);
    let outcome = run(
        &p,
        &params,
        &SolverState::zeros(&p),
        &Budget::iterations(iters),
        &mut |view: &IterationView<'_>| times.push(view.wall_time.as_secs_f64()),
    )
    .unwrap();
    assert_eq!(outcome.status, RunStatus::Completed);
    let mut steps: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
    steps.sort_by(f64::total_cmp);
    (steps[steps.len() / 2], Duration::from_secs_f64(*times.last().unwrap()))
}

#[test]
fn a10_scaling_smoke() {
    let _guard = serial();
    let (small, _) = scaling_run(256, 1000);
    let clock = Instant::now();
    let (large, algorithm_time) = scaling_run(1024, 1000);
    let elapsed = clock.elapsed();
    let ratio = large / small;
    let pass = (8.0..=32.0).contains(&ratio) && elapsed <= Duration::from_secs(120);
    report(
        10,
        "scaling_smoke",
        pass,
        format!(
            "per-iteration {:.1} us (n=256) vs {:.1} us (n=1024), ratio {ratio:.2}; n=1024 run {elapsed:.2?} ({algorithm_time:.2?} in updates)",
            small * 1e6,
            large * 1e6
        ),
    );
}

#[test]
fn a11_harness_contracts() {
    let _guard = serial();
    let mut deterministic = true;
    let mut parallel_bounded = true;
    for method in Method::ALL {
        let mut cfg = config(method.as_str(), ProblemKind::RandomLlsc, 12, 60);
        cfg.problem.seed = 3;
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        deterministic &= a.without_timing() == b.without_timing();
        parallel_bounded &= a.records.iter().all(|r| r.parallel_time_s <= r.wall_time_s);
    }

    let trace = run_experiment(&config("slbamm-s2", ProblemKind::Llc, 3, 2)).unwrap();
    let mut buf = Vec::new();
    write_csv(&trace, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let golden = "k,wall_time_s,parallel_time_s,F,kkt,x_err,y_err,v_err,hypergrad_err,grad_phi_norm,mu,alpha,beta,eta,lyapunov_V";
    let header_ok = text.lines().next() == Some(golden) && CSV_COLUMNS.join(",") == golden;

    let mut cfg = config("bda", ProblemKind::RandomLlsc, 33, 17);
    cfg.budget.kkt_tol = Some(3e-7);
    cfg.schedule.tau = 0.1 / 3.0;
    cfg.output.path = Some("traces/bda.csv".into());
    let round_trip = RunConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap() == cfg;

    let pass = deterministic && parallel_bounded && header_ok && round_trip;
    report(
        11,
        "harness_contracts",
        pass,
        format!(
            "deterministic {deterministic}, parallel <= wall {parallel_bounded}, golden header {header_ok}, config round-trip {round_trip}"
        ),
    );
}
