//! Benchmarks for the hot numerical paths: grid value iteration, the exact
//! finite-horizon envelope, window-learner fixed points, stationary analysis,
//! and episode simulation.

use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use pathrec_core::baselines::value_myopic;
use pathrec_core::grid::BeliefGrid;
use pathrec_core::model::ModelParams;
use pathrec_core::multipath::solve_3path;
use pathrec_core::oracle;
use pathrec_core::qlearn::{
    asymptotic_q, policy_from_q, qlearning_online, stationary_window_distribution, LearningSchedule,
};
use pathrec_core::sim::{run_episode, MyopicPolicy};
use pathrec_core::solver::solve_value_function;

fn reference_params() -> ModelParams {
    ModelParams::symmetric(0.9, 0.9, 1.0, 0.5, 0.9).unwrap()
}

fn bench_value_iteration(c: &mut Criterion) {
    let params = reference_params();
    let grid = BeliefGrid::default_grid();
    c.bench_function("solve_value_function_1001", |b| {
        b.iter(|| solve_value_function(black_box(&params), &grid, 1e-9))
    });
    c.bench_function("value_myopic_1001", |b| {
        b.iter(|| value_myopic(black_box(&params), &grid, 1e-9).unwrap())
    });
}

fn bench_oracle(c: &mut Criterion) {
    let params = reference_params();
    c.bench_function("finite_horizon_envelope_81", |b| {
        b.iter(|| oracle::finite_horizon_optimal(black_box(&params), 81))
    });
}

fn bench_qlearn(c: &mut Criterion) {
    let params = reference_params();
    c.bench_function("asymptotic_q_k4", |b| {
        b.iter(|| asymptotic_q(black_box(&params), 4, 1e-9))
    });
    let (table, _) = asymptotic_q(&params, 4, 1e-9);
    let policy = policy_from_q(&table);
    c.bench_function("stationary_window_distribution_k4", |b| {
        b.iter(|| stationary_window_distribution(black_box(&policy), &params))
    });
    c.bench_function("qlearning_online_100k", |b| {
        b.iter(|| {
            qlearning_online(
                black_box(&params),
                2,
                &LearningSchedule::default(),
                0.1,
                100_000,
                7,
            )
        })
    });
}

fn bench_multipath(c: &mut Criterion) {
    let params = ModelParams::symmetric(0.9, 0.9, 1.0, 0.7, 0.9).unwrap();
    let axis = BeliefGrid::new(100);
    let mut group = c.benchmark_group("multipath");
    group.sample_size(10);
    group.bench_function("solve_3path_100", |b| {
        b.iter(|| solve_3path(black_box(&params), &axis, 1e-9))
    });
    group.finish();
}

fn bench_sim(c: &mut Criterion) {
    let params = reference_params();
    let policy = MyopicPolicy { params };
    c.bench_function("run_episode_10k", |b| {
        b.iter(|| run_episode(black_box(&policy), &params, 10_000, 11, 0.5))
    });
}

criterion_group!(
    benches,
    bench_value_iteration,
    bench_oracle,
    bench_qlearn,
    bench_multipath,
    bench_sim
);
criterion_main!(benches);
