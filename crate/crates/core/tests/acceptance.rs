//! Acceptance suite: every release-gating criterion, one test each, printing
//! one pass/fail line per criterion (visible with `--nocapture`).
//!
//! Run with:
//!
//! ```text
//! cargo test -p pathrec-core --test acceptance -- --nocapture
//! ```
//!
//! The same checks back the `pathrec verify` subcommand; the verification
//! seed is fixed so results are byte-reproducible.

use pathrec_core::verify::{self, CriterionReport};

const SEED: u64 = 42;

fn assert_criterion(report: CriterionReport) {
    println!("{}", report.line());
    assert!(report.passed, "{}", report.line());
}

#[test]
fn criterion_01_solver_matches_finite_horizon_reference() {
    assert_criterion(verify::criterion_1());
}

#[test]
fn criterion_02_value_functions_monotone_and_concave() {
    assert_criterion(verify::criterion_2());
}

#[test]
fn criterion_03_policy_explores_below_myopic_threshold() {
    assert_criterion(verify::criterion_3());
}

#[test]
fn criterion_04_threshold_structure_under_sufficient_condition() {
    assert_criterion(verify::criterion_4());
}

#[test]
fn criterion_05_price_of_anarchy_bounds() {
    assert_criterion(verify::criterion_5(SEED));
}

#[test]
fn criterion_06_selfish_users_walk_the_myopic_path() {
    assert_criterion(verify::criterion_6(SEED));
}

#[test]
fn criterion_07_recommendation_audit_sweep() {
    assert_criterion(verify::criterion_7(SEED));
}

#[test]
fn criterion_08_online_learner_matches_fixed_point() {
    assert_criterion(verify::criterion_8(SEED));
}

#[test]
fn criterion_09_learned_policy_cost_approaches_optimal() {
    assert_criterion(verify::criterion_9());
}

#[test]
fn criterion_10_non_ic_regimes_shrink_and_vanish() {
    assert_criterion(verify::criterion_10());
}

#[test]
fn criterion_11_three_path_policy_map() {
    assert_criterion(verify::criterion_11());
}

#[test]
fn criterion_12_three_path_incentive_scan() {
    assert_criterion(verify::criterion_12());
}
