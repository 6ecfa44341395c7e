mod common;

use phadapt_core::adjoint::solve_adjoint_jacobi_iterated;
use phadapt_core::driver::{compare_strategies, run_uniform, ADAPTIVE_EXACT, ADAPTIVE_JACOBI, UNIFORM};
use phadapt_core::{
    adjoint_block_matrix, assemble_adjoint_rhs, forward_block_matrix, presets, run_adaptive, solve_adjoint_exact,
    solve_adjoint_jacobi, solve_forward, solve_reference, AdjointMode, AdjointRhs, InputSignal, IterationRecord,
    Matrix, QoiConfig, RunConfig, StopReason, TimeGrid, Vector,
};
use proptest::prelude::*;
use rand::Rng;

fn scenario_run(cfg: &RunConfig) -> phadapt_core::AdaptiveRun {
    run_adaptive(
        &presets::paper_r1(),
        &presets::step_input(),
        &presets::initial_state(),
        presets::HORIZON,
        cfg,
    )
    .unwrap()
}

fn without_timing(records: &[IterationRecord]) -> Vec<IterationRecord> {
    records
        .iter()
        .map(|r| IterationRecord { wall_ms: 0.0, ..r.clone() })
        .collect()
}

#[test]
fn forward_matches_reference_at_fine_resolution() {
    let sys = presets::paper_r1();
    let grid = TimeGrid::uniform(10.0, 1000).unwrap();
    let x0 = presets::initial_state();
    let u = presets::step_input();
    let traj = solve_forward(&sys, &grid, &u, &x0).unwrap().trajectory;
    let exact = solve_reference(&sys, &grid, &u, &x0).unwrap();
    // Relative: the absolute gap is about 0.12 on a state of norm about 7.2.
    let rel = (traj.x(1000) - exact.x(1000)).norm() / exact.x(1000).norm();
    assert!(rel < 2e-2, "relative final-state error {rel}");
}

#[test]
fn reference_with_zero_dynamics_is_linear() {
    let sys = phadapt_core::PhSystem::new(
        Matrix::zeros(3, 3),
        Matrix::zeros(3, 3),
        Matrix::identity(3, 3),
        presets::b(),
    )
    .unwrap();
    let grid = TimeGrid::uniform(4.0, 8).unwrap();
    let u = InputSignal::constant(4.0, Vector::from_element(1, 2.0)).unwrap();
    let x0 = presets::initial_state();
    let exact = solve_reference(&sys, &grid, &u, &x0).unwrap();
    for (t, x) in grid.nodes().iter().zip(exact.state().values()) {
        let expect = &x0 + presets::b().column(0) * (2.0 * t);
        assert!((x - expect).amax() < 1e-12);
    }
}

#[test]
fn block_duality_on_random_stacks() {
    let mut rng = common::rng(21);
    for _ in 0..20 {
        let n = rng.random_range(1..=4);
        let m = rng.random_range(1..=10);
        let sys = common::random_system(&mut rng, n, 1);
        let grid = common::random_grid(&mut rng, 2.0, m);
        let x = common::random_vector(&mut rng, n * (m + 1));
        let lam = common::random_vector(&mut rng, n * (m + 1));
        let fwd = forward_block_matrix(&sys, &grid);
        let adj = adjoint_block_matrix(&sys, &grid);
        let lhs = (&fwd * &x).dot(&lam);
        let rhs = x.dot(&(&adj * &lam));
        assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
    }
}

#[test]
fn exact_adjoint_is_the_derivative_of_a_linear_functional() {
    // For J(b) = ⟨l, X(b)⟩ with M_fwd X = b, dJ/db = Λ, so perturbing the
    // initial state by δ changes J by ⟨λ_0, δ⟩.
    let mut rng = common::rng(22);
    let sys = common::random_system(&mut rng, 3, 1);
    let grid = common::random_grid(&mut rng, 3.0, 12);
    let u = common::random_input(&mut rng, 3.0, 1);
    let rhs = AdjointRhs {
        loads: (0..=12).map(|_| common::random_vector(&mut rng, 3)).collect(),
    };
    let lam = solve_adjoint_exact(&sys, &grid, &rhs).unwrap();
    let x0 = common::random_vector(&mut rng, 3);
    let delta = common::random_vector(&mut rng, 3);
    let j = |x0: &Vector| {
        let traj = solve_forward(&sys, &grid, &u, x0).unwrap().trajectory;
        rhs.dot(traj.state().values())
    };
    let change = j(&(&x0 + &delta)) - j(&x0);
    assert!((change - lam.lambda.value(0).dot(&delta)).abs() < 1e-10);
}

#[test]
fn one_jacobi_sweep_is_the_one_shot_approximation() {
    let mut rng = common::rng(23);
    let sys = common::random_system(&mut rng, 4, 1);
    let grid = common::random_grid(&mut rng, 1.0, 9);
    let rhs = AdjointRhs {
        loads: (0..=9).map(|_| common::random_vector(&mut rng, 4)).collect(),
    };
    let once = solve_adjoint_jacobi_iterated(&sys, &grid, &rhs, 1).unwrap();
    let shot = solve_adjoint_jacobi(&sys, &grid, &rhs).unwrap();
    assert_eq!(once.lambda, shot.lambda);
}

#[test]
fn jacobi_error_decreases_with_sweeps_on_stable_system() {
    let sys = presets::paper_r2();
    let grid = TimeGrid::uniform(10.0, 40).unwrap();
    let traj = solve_forward(&sys, &grid, &presets::step_input(), &presets::initial_state())
        .unwrap()
        .trajectory;
    let rhs = assemble_adjoint_rhs(&sys, &traj, &presets::step_input(), &QoiConfig::local()).unwrap();
    let exact = solve_adjoint_exact(&sys, &grid, &rhs).unwrap();
    let mut last = f64::INFINITY;
    for k in [1, 2, 4, 8, 16, 41] {
        let approx = solve_adjoint_jacobi_iterated(&sys, &grid, &rhs, k).unwrap();
        let e = approx.lambda.max_abs_diff(&exact.lambda).unwrap();
        assert!(e <= last);
        last = e;
    }
    assert!(last <= 1e-12);
}

#[test]
fn adaptive_i_loc_decreases_for_the_step_scenario() {
    let run = scenario_run(&RunConfig { max_iters: 8, max_intervals: 100_000, ..RunConfig::default() });
    assert!(run.iterations.len() >= 5);
    for w in run.iterations.windows(2) {
        assert!(w[1].i_loc < w[0].i_loc, "{} -> {}", w[0].i_loc, w[1].i_loc);
        assert!(w[1].intervals > w[0].intervals);
    }
}

#[test]
fn estimator_and_true_error_are_rank_correlated() {
    let run = scenario_run(&RunConfig { max_iters: 15, max_intervals: 100_000, ..RunConfig::default() });
    let est: Vec<f64> = run.iterations.iter().map(|r| r.estimator_total).collect();
    let gap: Vec<f64> = run.iterations.iter().map(|r| r.i_loc_reference_gap()).collect();
    assert!(spearman(&est, &gap) > 0.0);
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    for (rank, i) in idx.into_iter().enumerate() {
        r[i] = rank as f64;
    }
    r
}

fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let d2: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - y).powi(2)).sum();
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}

#[test]
fn runs_are_deterministic_across_worker_counts() {
    let cfg = RunConfig { max_intervals: 120, ..RunConfig::default() };
    let records = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| without_timing(&scenario_run(&cfg).iterations))
    };
    let one = records(1);
    assert_eq!(one, records(1));
    assert_eq!(one, records(4));
}

#[test]
fn comparison_names_adaptive_exact_lowest() {
    let cmp = compare_strategies(
        &presets::paper_r1(),
        &presets::step_input(),
        &presets::initial_state(),
        presets::HORIZON,
        &RunConfig::default(),
    )
    .unwrap();
    assert_eq!(cmp.strategies, vec![UNIFORM, ADAPTIVE_EXACT, ADAPTIVE_JACOBI]);
    let last = cmp.final_matched().unwrap();
    assert_eq!(last.intervals, 200);
    assert_eq!(cmp.lowest_i_loc(last), Some(ADAPTIVE_EXACT));
    assert!(cmp.trade_off().is_none());
}

#[test]
fn uniform_runs_double() {
    let run = run_uniform(
        &presets::paper_r2(),
        &presets::step_input(),
        &presets::initial_state(),
        10.0,
        3,
        25,
    )
    .unwrap();
    let ms: Vec<usize> = run.iterations.iter().map(|r| r.intervals).collect();
    assert_eq!(ms, vec![25, 50, 100]);
    assert_eq!(run.final_grid, TimeGrid::uniform(10.0, 100).unwrap());
    assert!(run.iterations.windows(2).all(|w| w[1].max_error < w[0].max_error));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn budget_is_respected(theta in 0.05..1.0f64, initial_m in 2usize..30, extra in 0usize..80, jacobi in any::<bool>()) {
        let cfg = RunConfig {
            theta,
            initial_m,
            max_intervals: initial_m + extra,
            max_iters: 200,
            adjoint_mode: if jacobi { AdjointMode::Jacobi } else { AdjointMode::Exact },
            ..RunConfig::default()
        };
        let run = scenario_run(&cfg);
        prop_assert!(run.iterations.iter().all(|r| r.intervals <= cfg.max_intervals));
        prop_assert!(run.iterations.windows(2).all(|w| w[0].intervals < w[1].intervals));
        prop_assert_eq!(run.stop_reason, StopReason::MaxIntervals);
        prop_assert_eq!(run.final_grid.intervals(), cfg.max_intervals);
    }

    #[test]
    fn closed_systems_never_gain_energy(seed in any::<u64>(), m in 1usize..40) {
        let mut rng = common::rng(seed);
        let n = rng.random_range(1..=4);
        let sys = common::random_system(&mut rng, n, 1);
        let horizon = rng.random_range(0.1..10.0);
        let grid = common::random_grid(&mut rng, horizon, m);
        let x0 = common::random_vector(&mut rng, n);
        let u = InputSignal::zero(horizon, 1).unwrap();
        let traj = solve_forward(&sys, &grid, &u, &x0).unwrap().trajectory;
        for i in 1..=m {
            let prev = phadapt_core::hamiltonian(&sys, traj.x(i - 1)).unwrap();
            let cur = phadapt_core::hamiltonian(&sys, traj.x(i)).unwrap();
            prop_assert!(cur <= prev + 1e-12 * prev.max(1.0));
        }
    }
}
