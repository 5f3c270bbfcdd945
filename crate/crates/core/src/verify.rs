//! End-to-end verification suite: every release-gating property of the
//! solvers, baselines, audits, and learners, each with its tolerance pinned
//! in code. The CLI's `verify` subcommand runs the whole list and fails on
//! any red criterion; the `acceptance` integration tests run the same
//! functions one criterion per test.
//!
//! All checks are deterministic given the seed: stochastic criteria derive
//! replica streams from it, parallel sweeps aggregate in a fixed order, and
//! every reported number is reproducible byte for byte.

use rayon::prelude::*;

use crate::baselines::{
    myopic_threshold, random_poa_sweep, value_myopic, value_no_info, worst_case_instance_myopic,
    worst_case_instance_no_info,
};
use crate::grid::BeliefGrid;
use crate::irm::{ic_audit, stationary_belief_distribution, SimConfig};
use crate::model::{Action, ModelParams};
use crate::multipath::{ic_scan_3path, policy_map_3, solve_3path, Action3, ScanAxis3};
use crate::oracle;
use crate::qlearn::{
    asymptotic_q, ic_regime_scan, policy_from_q, qlearning_online, solve_window_policy_values,
    stationary_window_distribution, LearningSchedule, ObservationWindow, ScanAxis,
};
use crate::sim::{run_episode, GreedyValuePolicy, MyopicPolicy, SelfishFullInfoPolicy};
use crate::solver::{extract_policy, find_threshold, solve_value_function, verify_shape};

/// Outcome of one verification criterion.
#[derive(Debug, Clone)]
pub struct CriterionReport {
    pub id: u32,
    pub name: &'static str,
    pub passed: bool,
    pub details: String,
}

impl CriterionReport {
    pub fn line(&self) -> String {
        format!(
            "criterion {:>2} [{}] {} -- {}",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.details
        )
    }
}

fn fig_params() -> ModelParams {
    ModelParams::symmetric(0.9, 0.9, 1.0, 0.5, 0.9).unwrap()
}

const SOLVE_TOL: f64 = 1e-9;

/// The nine-instance structural sweep shared by criteria 2-4:
/// `(p, q) in {0.6, 0.75, 0.9}^2` at `beta = 0.9`, `c = 1`, `c_m = 0.5`.
fn shape_sweep() -> Vec<ModelParams> {
    let mut out = Vec::with_capacity(9);
    for p in [0.6, 0.75, 0.9] {
        for q in [0.6, 0.75, 0.9] {
            out.push(ModelParams::symmetric(p, q, 1.0, 0.5, 0.9).unwrap());
        }
    }
    out
}

/// Value iteration against the exact finite-horizon reference at eleven
/// beliefs; truncation bias below 1e-3, agreement within 2e-3.
pub fn criterion_1() -> CriterionReport {
    let params = fig_params();
    let horizon = oracle::horizon_for_truncation(&params, 1e-3);
    let reference = oracle::finite_horizon_optimal(&params, horizon);
    let (v, _) = solve_value_function(&params, &BeliefGrid::default_grid(), SOLVE_TOL);
    let mut max_diff = 0.0f64;
    for i in 0..=10 {
        let x = i as f64 / 10.0;
        max_diff = max_diff.max((v.eval(x) - reference.eval(x)).abs());
    }
    CriterionReport {
        id: 1,
        name: "solver matches exact finite-horizon reference",
        passed: max_diff <= 2e-3,
        details: format!(
            "max |V_grid - V_ref| = {max_diff:.3e} over 11 beliefs (horizon {horizon}, tol 2e-3)"
        ),
    }
}

/// Monotone and concave value functions across the structural sweep.
pub fn criterion_2() -> CriterionReport {
    let mut worst = 0.0f64;
    for params in shape_sweep() {
        let (v, _) = solve_value_function(&params, &BeliefGrid::default_grid(), SOLVE_TOL);
        let report = verify_shape(&v);
        worst = worst
            .max(report.max_monotonicity_violation)
            .max(report.max_concavity_violation);
    }
    CriterionReport {
        id: 2,
        name: "value functions monotone and concave",
        passed: worst < 1e-6,
        details: format!("worst shape violation {worst:.3e} across 9 instances (tol 1e-6 * c)"),
    }
}

/// The optimal policy explores at every node at or below the myopic
/// threshold (exact assertion).
pub fn criterion_3() -> CriterionReport {
    let mut violations = 0usize;
    for params in shape_sweep() {
        let grid = BeliefGrid::default_grid();
        let (v, _) = solve_value_function(&params, &grid, SOLVE_TOL);
        let policy = extract_policy(&v, &params);
        let x_hat = myopic_threshold(&params).unwrap().x_hat;
        for (i, x) in grid.nodes().enumerate() {
            if x <= x_hat && policy.actions[i] != Action::P1 {
                violations += 1;
            }
        }
    }
    CriterionReport {
        id: 3,
        name: "optimal policy explores at and below the myopic threshold",
        passed: violations == 0,
        details: format!("{violations} node violations across 9 instances (exact)"),
    }
}

/// Threshold structure wherever the sufficient condition `beta(2q-1) < 2/3`
/// holds.
pub fn criterion_4() -> CriterionReport {
    let mut checked = 0usize;
    let mut failures = 0usize;
    for params in shape_sweep() {
        if params.beta * (2.0 * params.q_hh - 1.0) >= 2.0 / 3.0 {
            continue;
        }
        checked += 1;
        let (v, _) = solve_value_function(&params, &BeliefGrid::default_grid(), SOLVE_TOL);
        let policy = extract_policy(&v, &params);
        if find_threshold(&policy).is_none() {
            failures += 1;
        }
    }
    CriterionReport {
        id: 4,
        name: "threshold policies under the sufficient condition",
        passed: failures == 0 && checked > 0,
        details: format!("{checked} qualifying instances, {failures} without a single crossing"),
    }
}

/// Price-of-anarchy bounds: the random sweep never exceeds `1/(1-beta)`, and
/// the two worst-case generators meet their target ratios.
pub fn criterion_5(seed: u64) -> CriterionReport {
    // (a) randomized 200-instance sweep against the per-instance bound.
    let rows = random_poa_sweep(200, seed, BeliefGrid::DEFAULT_N, SOLVE_TOL);
    let bound_violations = rows
        .iter()
        .filter(|r| r.ratio > 1.0 / (1.0 - r.beta) + 1e-6)
        .count();

    // (b) myopic worst case at beta = 0.9, q = 0.999, eps = 1e-3.
    let grid = BeliefGrid::new(2001);
    let (p_b, x0_b) = worst_case_instance_myopic(0.9, 1e-3, 0.999, 0.5).unwrap();
    let (v_opt_b, _) = solve_value_function(&p_b, &grid, 1e-10);
    let (v_m_b, _) = value_myopic(&p_b, &grid, 1e-10).unwrap();
    let ratio_b = v_m_b.eval(x0_b) / v_opt_b.eval(x0_b);
    let target_b = 0.9 / (1.0 - 0.9);

    // (c) feedback-free worst case at the same q.
    let (p_c, x0_c) = worst_case_instance_no_info(0.9, 0.999, 0.5, None).unwrap();
    let (v_opt_c, _) = solve_value_function(&p_c, &grid, 1e-10);
    let ratio_c = value_no_info(x0_c, &p_c) / v_opt_c.eval(x0_c);

    let pass_a = bound_violations == 0;
    let pass_b = ratio_b >= target_b;
    let pass_c = ratio_c >= 100.0;
    CriterionReport {
        id: 5,
        name: "price-of-anarchy bounds and worst-case instances",
        passed: pass_a && pass_b && pass_c,
        details: format!(
            "(a) {bound_violations}/200 sweep violations of 1/(1-beta)+1e-6; \
             (b) myopic instance ratio {ratio_b:.3} vs required {target_b:.1}; \
             (c) feedback-free instance ratio {ratio_c:.1} vs required 100"
        ),
    }
}

/// Sample-path identity: with a shared seed, fully informed selfish users
/// under any platform walk exactly the myopic platform's trajectory.
pub fn criterion_6(seed: u64) -> CriterionReport {
    let params = fig_params();
    let horizon = 100_000;
    let myopic = run_episode(&MyopicPolicy { params }, &params, horizon, seed, 0.5);
    let selfish = run_episode(
        &SelfishFullInfoPolicy { params },
        &params,
        horizon,
        seed,
        0.5,
    );
    let equal = myopic.records == selfish.records;
    CriterionReport {
        id: 6,
        name: "selfish full-information users equal the myopic platform",
        passed: equal,
        details: format!(
            "{} epochs, trajectories {}",
            horizon,
            if equal { "bit-identical" } else { "diverged" }
        ),
    }
}

/// Eighteen-instance stratified sample of the recommendation audit: both
/// incentive inequalities hold at 3-sigma confidence and the long-run average
/// cost stays at or below the deterministic cost.
pub fn criterion_7(seed: u64) -> CriterionReport {
    let mut lattice = Vec::with_capacity(54);
    for p in [0.6, 0.75, 0.9] {
        for q in [0.6, 0.75, 0.9] {
            for beta in [0.5, 0.9] {
                for c_m in [0.2, 0.5, 0.8] {
                    lattice.push(ModelParams::symmetric(p, q, 1.0, c_m, beta).unwrap());
                }
            }
        }
    }
    // Stride 7 is coprime with the 54-cell lattice, so the 18-instance sample
    // balances every parameter axis.
    let mut picks: Vec<usize> = (0..18).map(|j| (7 * j) % 54).collect();
    picks.sort_unstable();

    let failures: Vec<String> = picks
        .par_iter()
        .enumerate()
        .filter_map(|(i, &idx)| {
            let params = lattice[idx];
            let grid = BeliefGrid::default_grid();
            let (v, _) = solve_value_function(&params, &grid, SOLVE_TOL);
            let policy = GreedyValuePolicy { value: &v, params };
            let config = SimConfig::new(seed.wrapping_add(i as u64));
            let dist = stationary_belief_distribution(&policy, &params, &grid, &config);
            let report = ic_audit(&policy, &dist, &params);
            let lambda_ok = report.lambda <= params.c_m + report.ci_halfwidth_lambda;
            if report.follows_p1 && report.follows_p2 && lambda_ok {
                None
            } else {
                Some(format!(
                    "(p={},q={},beta={},c_m={})",
                    params.p_h, params.q_hh, params.beta, params.c_m
                ))
            }
        })
        .collect();
    CriterionReport {
        id: 7,
        name: "recommendation audit across the instance sweep",
        passed: failures.is_empty(),
        details: if failures.is_empty() {
            "18/18 instances follow both recommendations; lambda <= c_m + 3 sigma".into()
        } else {
            format!("failing instances: {}", failures.join(" "))
        },
    }
}

/// Learner asymptotics: tight fixed-point residual, and the online learner's
/// greedy policy matching the asymptotic policy on at least 95% of stationary
/// window mass.
pub fn criterion_8(seed: u64) -> CriterionReport {
    let params = fig_params();
    let k = 2;
    let (table, stats) = asymptotic_q(&params, k, 1e-9);
    let residual_ok = stats.residual < 1e-9;

    let online_table = qlearning_online(
        &params,
        k,
        &LearningSchedule::new(0.6),
        0.1,
        10_000_000,
        seed,
    );
    let asym_policy = policy_from_q(&table);
    let online_policy = policy_from_q(&online_table);
    let dist = stationary_window_distribution(&asym_policy, &params);
    let agreement: f64 = ObservationWindow::all(k)
        .filter(|w| asym_policy.action(w) == online_policy.action(w))
        .map(|w| dist.window_marginal[w.index()])
        .sum();
    let agreement_ok = agreement >= 0.95;
    CriterionReport {
        id: 8,
        name: "online learner matches its asymptotic fixed point",
        passed: residual_ok && agreement_ok,
        details: format!(
            "residual {:.2e} (tol 1e-9); mass-weighted policy agreement {agreement:.4} \
             (required 0.95; 1e7 epochs, K = 2)",
            stats.residual
        ),
    }
}

/// Learned-policy cost curves: never below optimal, a strictly shrinking
/// worst-case gap from K = 1 to K = 3, and the K = 1 gap peaking at the
/// belief extremes.
pub fn criterion_9() -> CriterionReport {
    let params = fig_params();
    let grid = BeliefGrid::default_grid();
    let (v_opt, _) = solve_value_function(&params, &grid, SOLVE_TOL);

    let mut max_gaps = Vec::new();
    let mut below_optimal = 0usize;
    let mut argmax_k1 = 0.0f64;
    for k in 1..=4u32 {
        let (table, _) = asymptotic_q(&params, k, 1e-9);
        let policy = policy_from_q(&table);
        let values = solve_window_policy_values(&policy, &params, &grid, SOLVE_TOL);
        let mut max_gap = f64::NEG_INFINITY;
        let mut argmax = 0.0;
        for i in 0..=100 {
            let x0 = i as f64 / 100.0;
            let gap = values.cost_at(x0, &params) - v_opt.eval(x0);
            if gap < -1e-6 {
                below_optimal += 1;
            }
            if gap > max_gap {
                max_gap = gap;
                argmax = x0;
            }
        }
        if k == 1 {
            argmax_k1 = argmax;
        }
        max_gaps.push(max_gap);
    }
    let decreasing = max_gaps[0] > max_gaps[1] && max_gaps[1] > max_gaps[2];
    let extremes = argmax_k1 <= 0.1 || argmax_k1 >= 0.9;
    CriterionReport {
        id: 9,
        name: "learned-policy cost approaches optimal as the window grows",
        passed: below_optimal == 0 && decreasing && extremes,
        details: format!(
            "max gaps K=1..4: {:.4}, {:.4}, {:.4}, {:.4}; K=1 argmax at x0 = {argmax_k1}; \
             {below_optimal} points below optimal",
            max_gaps[0], max_gaps[1], max_gaps[2], max_gaps[3]
        ),
    }
}

/// Incentive-regime scans on the three axes: the non-IC set at K = 4 is no
/// larger than at K = 1, and empty at K = 6.
pub fn criterion_10() -> CriterionReport {
    let mut parts = Vec::new();
    let mut shrink_ok = true;
    let mut empty_ok = true;
    for axis in [ScanAxis::CM, ScanAxis::Q, ScanAxis::Beta] {
        let rows = ic_regime_scan(axis, &[1, 4, 6], 1e-9);
        let count = |k: u32| rows.iter().filter(|r| r.k == k && r.non_ic).count();
        let (c1, c4, c6) = (count(1), count(4), count(6));
        shrink_ok &= c4 <= c1;
        empty_ok &= c6 == 0;
        parts.push(format!("{}: K1={c1} K4={c4} K6={c6}", axis.name()));
    }
    CriterionReport {
        id: 10,
        name: "non-IC regimes shrink with K and vanish by K = 6",
        passed: shrink_ok && empty_ok,
        details: format!("non-IC counts -- {}", parts.join("; ")),
    }
}

/// Three-path policy map: the three regions, exact mirror symmetry of the
/// action map, and an exactly symmetric value table.
pub fn criterion_11() -> CriterionReport {
    let params = ModelParams::symmetric(0.9, 0.9, 1.0, 0.7, 0.9).unwrap();
    let axis = BeliefGrid::new(100);
    let (v, _) = solve_3path(&params, &axis, SOLVE_TOL);
    let residual = v.symmetry_residual();
    let map = policy_map_3(&v, &params);
    let n = axis.len();
    let at = |x: f64, y: f64| {
        map.action(
            (x * (n - 1) as f64).round() as usize,
            (y * (n - 1) as f64).round() as usize,
        )
    };
    let regions = at(0.05, 0.95) == Action3::P1
        && at(0.95, 0.05) == Action3::P1Alt
        && at(0.95, 0.95) == Action3::P2;
    let mirror = map.is_mirror_symmetric();
    CriterionReport {
        id: 11,
        name: "three-path policy map regions and symmetry",
        passed: regions && mirror && residual < 1e-8,
        details: format!(
            "regions {}; mirror-symmetric {}; value symmetry residual {residual:.1e} (tol 1e-8)",
            regions, mirror
        ),
    }
}

/// Three-path incentive scan over the reference parameter rows for
/// K = 1..4.
pub fn criterion_12() -> CriterionReport {
    let mut parts = Vec::new();
    let mut all_hold = true;
    for axis in [ScanAxis3::CM, ScanAxis3::Q, ScanAxis3::Beta] {
        let rows = ic_scan_3path(axis, &[1, 2, 3, 4], 1e-9).expect("K <= 4");
        let fails = rows.iter().filter(|r| !r.ic_holds).count();
        all_hold &= fails == 0;
        parts.push(format!("{}: {fails}/{} fail", axis.name(), rows.len()));
    }
    CriterionReport {
        id: 12,
        name: "three-path incentive scan holds on the full ranges",
        passed: all_hold,
        details: parts.join("; "),
    }
}

/// Runs criteria 1-12 in order. Determinism of the CLI `verify` output (the
/// thirteenth gate) is exercised end to end by the CLI acceptance test.
pub fn run_all(seed: u64, mut emit: impl FnMut(&CriterionReport)) -> Vec<CriterionReport> {
    let steps: Vec<Box<dyn Fn() -> CriterionReport>> = vec![
        Box::new(criterion_1),
        Box::new(criterion_2),
        Box::new(criterion_3),
        Box::new(criterion_4),
        Box::new(move || criterion_5(seed)),
        Box::new(move || criterion_6(seed)),
        Box::new(move || criterion_7(seed)),
        Box::new(move || criterion_8(seed)),
        Box::new(criterion_9),
        Box::new(criterion_10),
        Box::new(criterion_11),
        Box::new(criterion_12),
    ];
    let mut reports = Vec::with_capacity(steps.len());
    for step in steps {
        let report = step();
        emit(&report);
        reports.push(report);
    }
    reports
}

/// CSV rendering of a verification run: `id,name,passed,details`.
pub fn report_csv(reports: &[CriterionReport]) -> String {
    let mut out = String::from("id,name,passed,details\n");
    for r in reports {
        out.push_str(&format!(
            "{},{},{},\"{}\"\n",
            r.id,
            r.name,
            r.passed,
            r.details.replace('"', "'")
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    // The full suite runs in the dedicated acceptance test target; here we
    // only pin the cheap deterministic criteria and the report plumbing.

    #[test]
    fn cheap_criteria_pass() {
        assert!(criterion_1().passed, "{}", criterion_1().line());
        assert!(criterion_2().passed, "{}", criterion_2().line());
        assert!(criterion_3().passed, "{}", criterion_3().line());
        assert!(criterion_4().passed, "{}", criterion_4().line());
    }

    #[test]
    fn report_lines_and_csv_are_stable() {
        let r = CriterionReport {
            id: 3,
            name: "example",
            passed: false,
            details: "said \"so\"".into(),
        };
        assert!(r.line().contains("[FAIL]"));
        let csv = report_csv(&[r]);
        assert!(csv.contains("3,example,false,\"said 'so'\""));
    }
}
