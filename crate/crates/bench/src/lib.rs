//! Shared fixtures for the criterion benchmarks.

use bamm_core::solver::{slbamm_step, ScheduleParams, SolverState, Strategy};
use bamm_core::{make_problem, ProblemKind, ToyProblem};

/// Dimensions used by the per-iteration benchmarks.
pub const DIMS: [usize; 3] = [64, 256, 1024];

/// Dense strongly convex toy problem with condition number 10.
pub fn dense_problem(n: usize, seed: u64) -> ToyProblem {
    make_problem(ProblemKind::RandomLlsc, n, Some(seed), None).expect("valid benchmark problem")
}

/// State after `iters` SC iterations from zero, so benchmarks start away
/// from the trivial all-zero iterate.
pub fn warm_state(problem: &ToyProblem, iters: u64) -> SolverState {
    let params = ScheduleParams::with_strategy(Strategy::Sc);
    let mut state = SolverState::zeros(problem);
    for k in 0..iters {
        state = slbamm_step(problem, &state, &params.step_sizes(k)).expect("finite benchmark iterate");
    }
    state
}
