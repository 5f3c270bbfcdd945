//! Incentive audit for the information-restriction mechanism: the platform
//! hides the observation history and announces only the recommended path, so
//! a traveler who knows the model and the platform's policy can reason only
//! about the stationary distribution of the hidden belief conditioned on the
//! recommendation she received.
//!
//! The audit estimates that stationary distribution from a long simulated
//! trajectory, then checks whether following each recommendation is in the
//! traveler's own interest: the expected stochastic-path cost conditioned on
//! "go P1" must not exceed `c_m`, and conditioned on "go P2" must not fall
//! below it. Confidence halfwidths come from batch means over the trajectory,
//! and verdicts inside the confidence band are reported as inconclusive
//! rather than forced either way.

use rand::Rng;
use serde::Serialize;

use crate::grid::BeliefGrid;
use crate::model::{
    belief_step, expected_p1_cost, sample_observation, sample_state_transition, Action,
    ModelParams, PathState,
};
use crate::sim::{seeded_rng, RecommendationPolicy};

/// Controls for the stationary-distribution sampler.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SimConfig {
    pub burn_in: u32,
    pub samples: u64,
    pub seed: u64,
    pub batches: u32,
}

impl SimConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            burn_in: 10_000,
            samples: 1_000_000,
            seed,
            batches: 20,
        }
    }
}

/// Histogram of the belief along a stationary trajectory, bucketed by nearest
/// grid node, plus per-batch sub-histograms for confidence estimates.
#[derive(Debug, Clone)]
pub struct StationaryBeliefDistribution {
    pub grid: BeliefGrid,
    pub masses: Vec<f64>,
    pub sample_count: u64,
    pub burn_in: u32,
    batch_masses: Vec<Vec<f64>>,
}

impl StationaryBeliefDistribution {
    pub fn total_variation(&self, other: &Self) -> f64 {
        assert_eq!(self.grid, other.grid);
        0.5 * self
            .masses
            .iter()
            .zip(&other.masses)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    }
}

/// Samples the belief histogram under `policy` from one long trajectory.
///
/// The chain starts at its stationary split (hidden state drawn from it,
/// belief equal to it) so that the recorded samples describe a system that
/// has already been running for a long time.
pub fn stationary_belief_distribution(
    policy: &dyn RecommendationPolicy,
    params: &ModelParams,
    grid: &BeliefGrid,
    config: &SimConfig,
) -> StationaryBeliefDistribution {
    assert!(config.burn_in >= 10_000, "burn-in too short");
    assert!(config.samples >= 1_000_000, "too few samples");
    assert!(config.batches >= 2);
    let mut rng = seeded_rng(config.seed);
    let x_bar = params.stationary_high();
    let mut state = if rng.random::<f64>() < x_bar {
        PathState::High
    } else {
        PathState::Low
    };
    let mut belief = x_bar;

    let step = |state: &mut PathState, belief: &mut f64, rng: &mut rand_chacha::ChaCha8Rng| {
        let action = policy.action(*belief);
        let observation = sample_observation(*state, action, params, rng);
        *belief = belief_step(*belief, action, observation, params)
            .expect("sampled observation is consistent with the action");
        *state = sample_state_transition(*state, params, rng);
    };

    for _ in 0..config.burn_in {
        step(&mut state, &mut belief, &mut rng);
    }

    let per_batch = config.samples / u64::from(config.batches);
    let mut batch_masses = Vec::with_capacity(config.batches as usize);
    let mut sample_count = 0u64;
    for b in 0..config.batches {
        let mut counts = vec![0u64; grid.len()];
        let this_batch = if b + 1 == config.batches {
            config.samples - per_batch * u64::from(config.batches - 1)
        } else {
            per_batch
        };
        for _ in 0..this_batch {
            counts[grid.nearest(belief)] += 1;
            step(&mut state, &mut belief, &mut rng);
        }
        sample_count += this_batch;
        batch_masses.push(
            counts
                .iter()
                .map(|&c| c as f64 / this_batch as f64)
                .collect(),
        );
    }

    let mut masses = vec![0.0f64; grid.len()];
    for batch in &batch_masses {
        for (m, &bm) in masses.iter_mut().zip(batch) {
            *m += bm;
        }
    }
    for m in &mut masses {
        *m /= batch_masses.len() as f64;
    }
    StationaryBeliefDistribution {
        grid: *grid,
        masses,
        sample_count,
        burn_in: config.burn_in,
        batch_masses,
    }
}

/// Long-run undiscounted average cost of running `policy` at stationarity,
/// integrated over the histogram cells.
pub fn average_cost(
    policy: &dyn RecommendationPolicy,
    dist: &StationaryBeliefDistribution,
    params: &ModelParams,
) -> f64 {
    dist.grid
        .nodes()
        .zip(&dist.masses)
        .map(|(x, &mass)| {
            let per_epoch = match policy.action(x) {
                Action::P1 => expected_p1_cost(x, params),
                Action::P2 => params.c_m,
            };
            mass * per_epoch
        })
        .sum()
}

/// Outcome of one side of the incentive check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    /// The inequality holds with margin beyond the confidence halfwidth.
    Holds,
    /// The point estimate is within the confidence band of `c_m`.
    Inconclusive,
    /// The inequality fails with margin beyond the confidence halfwidth.
    Violated,
    /// The recommendation never occurs at stationarity.
    Vacuous,
}

/// Conditional expected costs given each recommendation, with verdicts.
///
/// `follows_p1` is `cost_given_p1 <= c_m + ci` (a traveler told "P1" cannot
/// expect to do better by deviating); `follows_p2` is
/// `cost_given_p2 >= c_m - ci`. Vacuous sides count as followed.
#[derive(Debug, Clone, Serialize)]
pub struct ICReport {
    pub cost_given_p1: Option<f64>,
    pub cost_given_p2: Option<f64>,
    pub lambda: f64,
    pub c_m: f64,
    pub mass_p1: f64,
    pub mass_p2: f64,
    pub follows_p1: bool,
    pub follows_p2: bool,
    pub verdict_p1: Verdict,
    pub verdict_p2: Verdict,
    pub ci_halfwidth_p1: f64,
    pub ci_halfwidth_p2: f64,
    pub ci_halfwidth_lambda: f64,
}

impl ICReport {
    pub fn ic_holds(&self) -> bool {
        self.follows_p1 && self.follows_p2
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn csv_header() -> &'static str {
        "cost_given_p1,cost_given_p2,lambda,c_m,mass_p1,mass_p2,follows_p1,follows_p2,ci_p1,ci_p2"
    }

    pub fn to_csv_row(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or(String::from(""), |x| x.to_string());
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            fmt(self.cost_given_p1),
            fmt(self.cost_given_p2),
            self.lambda,
            self.c_m,
            self.mass_p1,
            self.mass_p2,
            self.follows_p1,
            self.follows_p2,
            self.ci_halfwidth_p1,
            self.ci_halfwidth_p2
        )
    }
}

struct SideSums {
    mass: f64,
    cost_mass: f64,
}

fn side_sums(
    policy: &dyn RecommendationPolicy,
    grid: &BeliefGrid,
    masses: &[f64],
    params: &ModelParams,
) -> (SideSums, SideSums) {
    let mut p1 = SideSums {
        mass: 0.0,
        cost_mass: 0.0,
    };
    let mut p2 = SideSums {
        mass: 0.0,
        cost_mass: 0.0,
    };
    for (x, &mass) in grid.nodes().zip(masses) {
        if mass == 0.0 {
            continue;
        }
        let side = match policy.action(x) {
            Action::P1 => &mut p1,
            Action::P2 => &mut p2,
        };
        side.mass += mass;
        side.cost_mass += mass * expected_p1_cost(x, params);
    }
    (p1, p2)
}

fn batch_ci(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return f64::INFINITY;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    3.0 * (var / n).sqrt()
}

/// Audits whether travelers want to follow each recommendation, given the
/// stationary belief distribution the policy induces.
pub fn ic_audit(
    policy: &dyn RecommendationPolicy,
    dist: &StationaryBeliefDistribution,
    params: &ModelParams,
) -> ICReport {
    let (p1, p2) = side_sums(policy, &dist.grid, &dist.masses, params);
    let cost_given_p1 = (p1.mass > 0.0).then(|| p1.cost_mass / p1.mass);
    let cost_given_p2 = (p2.mass > 0.0).then(|| p2.cost_mass / p2.mass);
    let lambda = p1.cost_mass + p2.mass * params.c_m;

    let mut batch_p1 = Vec::new();
    let mut batch_p2 = Vec::new();
    let mut batch_lambda = Vec::new();
    for batch in &dist.batch_masses {
        let (b1, b2) = side_sums(policy, &dist.grid, batch, params);
        if b1.mass > 0.0 {
            batch_p1.push(b1.cost_mass / b1.mass);
        }
        if b2.mass > 0.0 {
            batch_p2.push(b2.cost_mass / b2.mass);
        }
        batch_lambda.push(b1.cost_mass + b2.mass * params.c_m);
    }
    let ci_p1 = batch_ci(&batch_p1);
    let ci_p2 = batch_ci(&batch_p2);
    let ci_lambda = batch_ci(&batch_lambda);

    let verdict_low = |cost: Option<f64>, ci: f64| match cost {
        // Side "recommendation is beneficial when its cost <= c_m".
        None => Verdict::Vacuous,
        Some(c) if c <= params.c_m - ci => Verdict::Holds,
        Some(c) if c <= params.c_m + ci => Verdict::Inconclusive,
        Some(_) => Verdict::Violated,
    };
    let verdict_high = |cost: Option<f64>, ci: f64| match cost {
        None => Verdict::Vacuous,
        Some(c) if c >= params.c_m + ci => Verdict::Holds,
        Some(c) if c >= params.c_m - ci => Verdict::Inconclusive,
        Some(_) => Verdict::Violated,
    };

    ICReport {
        cost_given_p1,
        cost_given_p2,
        lambda,
        c_m: params.c_m,
        mass_p1: p1.mass,
        mass_p2: p2.mass,
        follows_p1: cost_given_p1.is_none_or(|c| c <= params.c_m + ci_p1),
        follows_p2: cost_given_p2.is_none_or(|c| c >= params.c_m - ci_p2),
        verdict_p1: verdict_low(cost_given_p1, ci_p1),
        verdict_p2: verdict_high(cost_given_p2, ci_p2),
        ci_halfwidth_p1: ci_p1,
        ci_halfwidth_p2: ci_p2,
        ci_halfwidth_lambda: ci_lambda,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{FixedPolicy, GreedyValuePolicy, MyopicPolicy};
    use crate::solver::solve_value_function;

    fn fig_params() -> ModelParams {
        ModelParams::symmetric(0.9, 0.9, 1.0, 0.5, 0.9).unwrap()
    }

    fn small_grid() -> BeliefGrid {
        BeliefGrid::new(1001)
    }

    #[test]
    fn always_p2_concentrates_at_the_transition_fixed_point() {
        let p = fig_params();
        let policy = FixedPolicy { action: Action::P2 };
        let dist = stationary_belief_distribution(&policy, &p, &small_grid(), &SimConfig::new(1));
        let center = dist.grid.nearest(0.5);
        assert!((dist.masses[center] - 1.0).abs() < 1e-12);
        // Average cost is exactly c_m.
        assert!((average_cost(&policy, &dist, &p) - p.c_m).abs() < 1e-12);
    }

    #[test]
    fn uninformative_observations_concentrate_at_half() {
        let p = ModelParams::new(0.5, 0.5, 0.9, 0.9, 1.0, 0.5, 0.9).unwrap();
        let policy = FixedPolicy { action: Action::P1 };
        let dist = stationary_belief_distribution(&policy, &p, &small_grid(), &SimConfig::new(2));
        let center = dist.grid.nearest(0.5);
        assert!((dist.masses[center] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn always_p1_average_cost_is_stationary_mean() {
        let p = fig_params();
        let policy = FixedPolicy { action: Action::P1 };
        let dist = stationary_belief_distribution(&policy, &p, &small_grid(), &SimConfig::new(3));
        let report = ic_audit(&policy, &dist, &p);
        let expected = (p.c_h() + p.c_l()) / 2.0;
        assert!(
            (report.lambda - expected).abs() < 3.0 * report.ci_halfwidth_lambda + 5e-3,
            "lambda {} vs {}",
            report.lambda,
            expected
        );
    }

    #[test]
    fn masses_are_normalized() {
        let p = fig_params();
        let policy = MyopicPolicy { params: p };
        let dist = stationary_belief_distribution(&policy, &p, &small_grid(), &SimConfig::new(4));
        assert!((dist.masses.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_seeds_agree_in_total_variation() {
        let p = fig_params();
        let grid = small_grid();
        let (v, _) = solve_value_function(&p, &grid, 1e-9);
        let policy = GreedyValuePolicy {
            value: &v,
            params: p,
        };
        let d1 = stationary_belief_distribution(&policy, &p, &grid, &SimConfig::new(10));
        let d2 = stationary_belief_distribution(&policy, &p, &grid, &SimConfig::new(11));
        let tv = d1.total_variation(&d2);
        assert!(tv < 0.01, "total variation {tv}");
    }

    #[test]
    fn optimal_policy_audit_passes_and_average_cost_below_c_m() {
        let p = fig_params();
        let grid = small_grid();
        let (v, _) = solve_value_function(&p, &grid, 1e-9);
        let policy = GreedyValuePolicy {
            value: &v,
            params: p,
        };
        let dist = stationary_belief_distribution(&policy, &p, &grid, &SimConfig::new(5));
        let report = ic_audit(&policy, &dist, &p);
        assert!(report.follows_p1 && report.follows_p2, "{report:?}");
        assert!(
            report.lambda <= p.c_m + report.ci_halfwidth_lambda,
            "lambda {} exceeds c_m",
            report.lambda
        );
    }

    #[test]
    fn myopic_platform_passes_its_own_audit() {
        let p = fig_params();
        let policy = MyopicPolicy { params: p };
        let dist = stationary_belief_distribution(&policy, &p, &small_grid(), &SimConfig::new(6));
        let report = ic_audit(&policy, &dist, &p);
        assert!(report.follows_p1 && report.follows_p2, "{report:?}");
    }

    #[test]
    fn vacuous_side_reported_when_one_path_never_recommended() {
        // c_m above c_h: the stochastic path is always recommended.
        let p = ModelParams::symmetric(0.9, 0.9, 1.0, 0.95, 0.9).unwrap();
        let policy = FixedPolicy { action: Action::P1 };
        let dist = stationary_belief_distribution(&policy, &p, &small_grid(), &SimConfig::new(7));
        let report = ic_audit(&policy, &dist, &p);
        assert_eq!(report.verdict_p2, Verdict::Vacuous);
        assert!(report.follows_p2);
        assert!(report.follows_p1);
        assert_eq!(report.verdict_p1, Verdict::Holds);
    }

    #[test]
    fn mixture_identity_is_exact() {
        let p = fig_params();
        let grid = small_grid();
        let (v, _) = solve_value_function(&p, &grid, 1e-9);
        let policy = GreedyValuePolicy {
            value: &v,
            params: p,
        };
        let dist = stationary_belief_distribution(&policy, &p, &grid, &SimConfig::new(8));
        let report = ic_audit(&policy, &dist, &p);
        let lhs = report.mass_p1 * report.cost_given_p1.unwrap() + report.mass_p2 * p.c_m;
        assert!((lhs - report.lambda).abs() < 1e-12);
        assert!((report.mass_p1 + report.mass_p2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn report_serializes_to_json_and_csv() {
        let p = fig_params();
        let policy = MyopicPolicy { params: p };
        let dist = stationary_belief_distribution(&policy, &p, &small_grid(), &SimConfig::new(9));
        let report = ic_audit(&policy, &dist, &p);
        let json = report.to_json();
        assert!(json.contains("\"follows_p1\""));
        let row = report.to_csv_row();
        assert_eq!(
            row.matches(',').count(),
            ICReport::csv_header().matches(',').count()
        );
    }
}
