//! Master consistency check: the grid solvers and the seeded simulator must
//! agree on the discounted cost of the optimal and myopic policies across a
//! parameter sweep, within Monte Carlo confidence plus the truncation bound.

use pathrec_core::baselines::value_myopic;
use pathrec_core::grid::BeliefGrid;
use pathrec_core::model::ModelParams;
use pathrec_core::sim::{
    default_horizon, estimate_discounted_cost, GreedyValuePolicy, MyopicPolicy,
};
use pathrec_core::solver::solve_value_function;
use rayon::prelude::*;

#[test]
fn solver_and_simulator_agree_across_the_sweep() {
    let mut instances = Vec::new();
    for p in [0.6, 0.75, 0.9] {
        for q in [0.6, 0.75, 0.9] {
            instances.push(ModelParams::symmetric(p, q, 1.0, 0.5, 0.9).unwrap());
        }
    }
    let failures: Vec<String> = instances
        .par_iter()
        .enumerate()
        .flat_map_iter(|(i, params)| {
            let grid = BeliefGrid::default_grid();
            let (v_opt, _) = solve_value_function(params, &grid, 1e-9);
            let (v_m, _) = value_myopic(params, &grid, 1e-9).unwrap();
            let horizon = default_horizon(params);
            let x0 = 0.5;
            let mut bad = Vec::new();

            let est = estimate_discounted_cost(
                &GreedyValuePolicy {
                    value: &v_opt,
                    params: *params,
                },
                params,
                x0,
                3000,
                horizon,
                900 + i as u64,
            );
            let tol = est.halfwidth_3sigma + est.truncation_bound + 2e-3;
            if (est.mean - v_opt.eval(x0)).abs() >= tol {
                bad.push(format!(
                    "optimal p={} q={}: mc {} vs solver {}",
                    params.p_h,
                    params.q_hh,
                    est.mean,
                    v_opt.eval(x0)
                ));
            }

            let est = estimate_discounted_cost(
                &MyopicPolicy { params: *params },
                params,
                x0,
                3000,
                horizon,
                1900 + i as u64,
            );
            let tol = est.halfwidth_3sigma + est.truncation_bound + 2e-3;
            if (est.mean - v_m.eval(x0)).abs() >= tol {
                bad.push(format!(
                    "myopic p={} q={}: mc {} vs solver {}",
                    params.p_h,
                    params.q_hh,
                    est.mean,
                    v_m.eval(x0)
                ));
            }
            bad
        })
        .collect();
    assert!(failures.is_empty(), "disagreements: {failures:?}");
}
