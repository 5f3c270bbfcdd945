//! Tabular Q-learning over windows of recent observations.
//!
//! A model-free platform cannot carry a belief, so its state is the vector of
//! the last `K` traveler reports, each one of {no-hazard, hazard, no-info}.
//! The module provides the online learner, the deterministic fixed-point
//! system its iterates converge to, exact stationary analysis of the learned
//! policy, the incentive checks a sophisticated traveler would run against
//! it, and exact policy evaluation against the optimal benchmark.
//!
//! Windows are indexed lexicographically with digit order
//! no-hazard < hazard < no-info; the first (oldest) report is the most
//! significant digit.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::grid::BeliefGrid;
use crate::irm::{ICReport, Verdict};
use crate::model::{
    expected_p1_cost, posterior_update, sample_observation, sample_state_transition,
    transition_prior, Action, Belief, ModelParams, Observation, PathState,
};
use crate::sim::seeded_rng;
use crate::solver::{certified_stop, BackupStencil};

fn digit(obs: Observation) -> usize {
    match obs {
        Observation::NoHazard => 0,
        Observation::Hazard => 1,
        Observation::NoInfo => 2,
    }
}

fn obs_from_digit(d: usize) -> Observation {
    match d {
        0 => Observation::NoHazard,
        1 => Observation::Hazard,
        _ => Observation::NoInfo,
    }
}

/// Number of distinct windows of length `k`.
pub fn window_count(k: u32) -> usize {
    3usize.pow(k)
}

/// Ordered vector of the last `k` observations, stored by its lexicographic
/// index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ObservationWindow {
    k: u32,
    index: usize,
}

impl ObservationWindow {
    pub fn new(k: u32, index: usize) -> Self {
        assert!(k >= 1 && index < window_count(k));
        Self { k, index }
    }

    /// The window a fresh system starts with: no information at all.
    pub fn all_no_info(k: u32) -> Self {
        Self::new(k, window_count(k) - 1)
    }

    pub fn from_observations(obs: &[Observation]) -> Self {
        assert!(!obs.is_empty());
        let index = obs.iter().fold(0usize, |acc, &o| acc * 3 + digit(o));
        Self {
            k: obs.len() as u32,
            index,
        }
    }

    pub fn observations(&self) -> Vec<Observation> {
        let mut digits = Vec::with_capacity(self.k as usize);
        let mut rest = self.index;
        for _ in 0..self.k {
            digits.push(rest % 3);
            rest /= 3;
        }
        digits.reverse();
        digits.into_iter().map(obs_from_digit).collect()
    }

    /// Drops the oldest report and appends the newest.
    pub fn shift(&self, obs: Observation) -> Self {
        let base = window_count(self.k) / 3;
        Self {
            k: self.k,
            index: (self.index % base) * 3 + digit(obs),
        }
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    /// Compact text form, oldest first: `0` no-hazard, `1` hazard, `e` no
    /// info (e.g. `"01e"`).
    pub fn label(&self) -> String {
        self.observations()
            .iter()
            .map(|o| match o {
                Observation::NoHazard => '0',
                Observation::Hazard => '1',
                Observation::NoInfo => 'e',
            })
            .collect()
    }

    pub fn all(k: u32) -> impl Iterator<Item = ObservationWindow> {
        (0..window_count(k)).map(move |index| ObservationWindow { k, index })
    }
}

/// Probability that the stochastic path is in its high-cost state at the next
/// departure, given the last `k` reports: start the filter at the chain's
/// stationary split and fold the window through it (no-info epochs apply the
/// transition only).
pub fn prob_h_given_window(w: &ObservationWindow, params: &ModelParams) -> f64 {
    let mut x = params.stationary_high();
    for obs in w.observations() {
        x = transition_prior(posterior_update(x, obs, params), params);
    }
    x
}

/// Expected one-epoch cost of the stochastic path given the window.
pub fn expected_p1_cost_window(w: &ObservationWindow, params: &ModelParams) -> f64 {
    expected_p1_cost(prob_h_given_window(w, params), params)
}

/// Window whose conditional high-state probability is closest to `x`; ties
/// break toward the lowest window index.
pub fn window_for_belief(x: Belief, k: u32, params: &ModelParams) -> ObservationWindow {
    let mut best = ObservationWindow::new(k, 0);
    let mut best_dist = f64::INFINITY;
    for w in ObservationWindow::all(k) {
        let d = (prob_h_given_window(&w, params) - x).abs();
        if d < best_dist {
            best_dist = d;
            best = w;
        }
    }
    best
}

/// Action-value table over `(window, action)` with visit counts.
#[derive(Debug, Clone)]
pub struct QTable {
    pub k: u32,
    pub values: Vec<[f64; 2]>,
    pub visits: Vec<[u64; 2]>,
}

impl QTable {
    pub fn zeros(k: u32) -> Self {
        let n = window_count(k);
        Self {
            k,
            values: vec![[0.0; 2]; n],
            visits: vec![[0; 2]; n],
        }
    }

    pub fn q(&self, w: &ObservationWindow, a: Action) -> f64 {
        self.values[w.index()][action_slot(a)]
    }

    /// Action with the smaller Q-value; ties go to P1.
    pub fn greedy(&self, w: &ObservationWindow) -> Action {
        let [q1, q2] = self.values[w.index()];
        if q1 <= q2 {
            Action::P1
        } else {
            Action::P2
        }
    }

    pub fn sup_distance(&self, other: &Self) -> f64 {
        assert_eq!(self.k, other.k);
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a[0] - b[0]).abs().max((a[1] - b[1]).abs()))
            .fold(0.0, f64::max)
    }
}

fn action_slot(a: Action) -> usize {
    match a {
        Action::P1 => 0,
        Action::P2 => 1,
    }
}

/// Step-size schedule `alpha = 1 / (1 + visits)^omega` with
/// `omega in (0.5, 1]`, which satisfies the usual summability conditions.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LearningSchedule {
    pub omega: f64,
}

impl LearningSchedule {
    pub fn new(omega: f64) -> Self {
        assert!(
            omega > 0.5 && omega <= 1.0,
            "omega must lie in (0.5, 1], got {omega}"
        );
        Self { omega }
    }

    /// Step size for the `n`-th visit (1-based) of a `(window, action)` pair.
    fn alpha(&self, n: u64) -> f64 {
        1.0 / (1.0 + n as f64).powf(self.omega)
    }
}

impl Default for LearningSchedule {
    fn default() -> Self {
        Self::new(0.6)
    }
}

/// Online Q-learning against the simulated world with epsilon-greedy
/// exploration. Each epoch touches exactly the visited `(window, action)`
/// entry; the learner is inherently sequential.
pub fn qlearning_online(
    params: &ModelParams,
    k: u32,
    schedule: &LearningSchedule,
    epsilon: f64,
    epochs: u64,
    seed: u64,
) -> QTable {
    assert!(epochs >= 1);
    assert!((0.0..=1.0).contains(&epsilon));
    let mut rng = seeded_rng(seed);
    let mut table = QTable::zeros(k);
    let mut state = if rng.random::<f64>() < params.stationary_high() {
        PathState::High
    } else {
        PathState::Low
    };
    let mut window = ObservationWindow::all_no_info(k);
    for _ in 0..epochs {
        let action = if rng.random::<f64>() < epsilon {
            if rng.random::<f64>() < 0.5 {
                Action::P1
            } else {
                Action::P2
            }
        } else {
            table.greedy(&window)
        };
        let observation = sample_observation(state, action, params, &mut rng);
        let cost = match (action, observation) {
            (Action::P2, _) => params.c_m,
            (Action::P1, Observation::Hazard) => params.c,
            (Action::P1, _) => 0.0,
        };
        let next = window.shift(observation);
        let slot = action_slot(action);
        let idx = window.index();
        table.visits[idx][slot] += 1;
        let alpha = schedule.alpha(table.visits[idx][slot]);
        let continuation = table.values[next.index()][0].min(table.values[next.index()][1]);
        table.values[idx][slot] =
            (1.0 - alpha) * table.values[idx][slot] + alpha * (cost + params.beta * continuation);
        window = next;
        state = sample_state_transition(state, params, &mut rng);
    }
    table
}

/// Solver diagnostics for fixed-point iterations.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FixedPointStats {
    pub iterations: u32,
    pub residual: f64,
}

/// Deterministic system the online learner converges to: a synchronous
/// fixed-point iteration over all `2 * 3^k` entries, contracting in sup-norm
/// with modulus `beta`. Window transitions are deterministic shifts; only the
/// observation is random, with hazard probability taken from
/// [`prob_h_given_window`].
pub fn asymptotic_q(params: &ModelParams, k: u32, tol: f64) -> (QTable, FixedPointStats) {
    assert!(tol > 0.0);
    let n = window_count(k);
    let mut haz_prob = Vec::with_capacity(n);
    let mut shifts = Vec::with_capacity(n);
    for w in ObservationWindow::all(k) {
        let x = prob_h_given_window(&w, params);
        haz_prob.push(x * params.p_h + (1.0 - x) * params.p_l);
        shifts.push([
            w.shift(Observation::Hazard).index(),
            w.shift(Observation::NoHazard).index(),
            w.shift(Observation::NoInfo).index(),
        ]);
    }

    let scale = params.c.max(params.c_m) / (1.0 - params.beta);
    let stop = certified_stop(tol, params.beta, scale);
    let mut table = QTable::zeros(k);
    let mut next = vec![[0.0f64; 2]; n];
    let mut iterations = 0u32;
    loop {
        let mut diff = 0.0f64;
        for i in 0..n {
            let m = |j: usize| table.values[j][0].min(table.values[j][1]);
            let q1 = haz_prob[i] * (params.c + params.beta * m(shifts[i][0]))
                + (1.0 - haz_prob[i]) * params.beta * m(shifts[i][1]);
            let q2 = params.c_m + params.beta * m(shifts[i][2]);
            diff = diff.max((q1 - table.values[i][0]).abs());
            diff = diff.max((q2 - table.values[i][1]).abs());
            next[i] = [q1, q2];
        }
        std::mem::swap(&mut table.values, &mut next);
        iterations += 1;
        if diff <= stop {
            return (
                table,
                FixedPointStats {
                    iterations,
                    residual: diff,
                },
            );
        }
    }
}

/// Greedy action per window; ties go to P1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowPolicy {
    pub k: u32,
    pub actions: Vec<Action>,
}

impl WindowPolicy {
    pub fn action(&self, w: &ObservationWindow) -> Action {
        self.actions[w.index()]
    }
}

pub fn policy_from_q(table: &QTable) -> WindowPolicy {
    WindowPolicy {
        k: table.k,
        actions: (0..window_count(table.k))
            .map(|i| {
                let [q1, q2] = table.values[i];
                if q1 <= q2 {
                    Action::P1
                } else {
                    Action::P2
                }
            })
            .collect(),
    }
}

/// Exact stationary distribution of the joint (hidden state, window) chain
/// under a window policy.
#[derive(Debug, Clone)]
pub struct WindowDistribution {
    pub k: u32,
    /// Joint mass indexed by `state * 3^k + window` with state 0 = High.
    pub joint: Vec<f64>,
    /// Marginal over windows.
    pub window_marginal: Vec<f64>,
    /// Windows that carry (numerically) no stationary mass.
    pub transient: Vec<bool>,
    pub residual: f64,
    pub iterations: u32,
}

/// Computes the stationary distribution by damped power iteration from the
/// fresh-start state (stationary hidden split, all-no-info window). If the
/// chain decomposes, this converges to the stationary mixture reachable from
/// that start, and unreached windows are reported as transient.
pub fn stationary_window_distribution(
    policy: &WindowPolicy,
    params: &ModelParams,
) -> WindowDistribution {
    let k = policy.k;
    let n = window_count(k);
    let total = 2 * n;

    // Sparse row structure: from (state, window) there are at most four
    // successors (observation branch x hidden transition).
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::with_capacity(4); total];
    for w in ObservationWindow::all(k) {
        let a = policy.action(&w);
        for (s_idx, p_haz) in [(0usize, params.p_h), (1usize, params.p_l)] {
            let from = s_idx * n + w.index();
            let stay = if s_idx == 0 { params.q_hh } else { params.q_ll };
            let trans = [(s_idx, stay), (1 - s_idx, 1.0 - stay)];
            let obs_branches: &[(Observation, f64)] = match a {
                Action::P1 => &[
                    (Observation::Hazard, p_haz),
                    (Observation::NoHazard, 1.0 - p_haz),
                ],
                Action::P2 => &[(Observation::NoInfo, 1.0)],
            };
            for &(obs, p_obs) in obs_branches {
                if p_obs == 0.0 {
                    continue;
                }
                let w_next = w.shift(obs).index();
                for &(s_next, p_s) in &trans {
                    if p_s == 0.0 {
                        continue;
                    }
                    rows[from].push((s_next * n + w_next, p_obs * p_s));
                }
            }
        }
    }

    let mut mu = vec![0.0f64; total];
    let start = ObservationWindow::all_no_info(k).index();
    mu[start] = params.stationary_high();
    mu[n + start] = 1.0 - params.stationary_high();

    let mut pushed = vec![0.0f64; total];
    let mut iterations = 0u32;
    let residual = loop {
        pushed.iter_mut().for_each(|v| *v = 0.0);
        for (from, row) in rows.iter().enumerate() {
            let mass = mu[from];
            if mass == 0.0 {
                continue;
            }
            for &(to, p) in row {
                pushed[to] += mass * p;
            }
        }
        let mut moved = 0.0f64;
        for i in 0..total {
            // Damping by (P + I) / 2 removes any periodicity.
            let next = 0.5 * (mu[i] + pushed[i]);
            moved += (next - mu[i]).abs();
            mu[i] = next;
        }
        iterations += 1;
        if moved <= 1e-13 || iterations >= 500_000 {
            // Report the undamped residual ||mu - mu P||_1.
            pushed.iter_mut().for_each(|v| *v = 0.0);
            for (from, row) in rows.iter().enumerate() {
                for &(to, p) in row {
                    pushed[to] += mu[from] * p;
                }
            }
            break mu
                .iter()
                .zip(&pushed)
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>();
        }
    };

    let window_marginal: Vec<f64> = (0..n).map(|w| mu[w] + mu[n + w]).collect();
    let transient = window_marginal.iter().map(|&m| m < 1e-13).collect();
    WindowDistribution {
        k,
        joint: mu,
        window_marginal,
        transient,
        residual,
        iterations,
    }
}

/// Exact incentive check for a window policy: conditional expected
/// stochastic-path cost given each recommendation, integrated over the exact
/// stationary window distribution. No Monte Carlo error, so the confidence
/// halfwidths are zero.
pub fn ic_check(
    policy: &WindowPolicy,
    dist: &WindowDistribution,
    params: &ModelParams,
) -> ICReport {
    assert_eq!(policy.k, dist.k);
    let mut mass = [0.0f64; 2];
    let mut cost_mass = [0.0f64; 2];
    for w in ObservationWindow::all(policy.k) {
        let m = dist.window_marginal[w.index()];
        if m == 0.0 {
            continue;
        }
        let side = action_slot(policy.action(&w));
        mass[side] += m;
        cost_mass[side] += m * expected_p1_cost_window(&w, params);
    }
    let cost_given_p1 = (mass[0] > 0.0).then(|| cost_mass[0] / mass[0]);
    let cost_given_p2 = (mass[1] > 0.0).then(|| cost_mass[1] / mass[1]);
    let verdict_p1 = match cost_given_p1 {
        None => Verdict::Vacuous,
        Some(c) if c <= params.c_m => Verdict::Holds,
        Some(_) => Verdict::Violated,
    };
    let verdict_p2 = match cost_given_p2 {
        None => Verdict::Vacuous,
        Some(c) if c >= params.c_m => Verdict::Holds,
        Some(_) => Verdict::Violated,
    };
    ICReport {
        cost_given_p1,
        cost_given_p2,
        lambda: cost_mass[0] + mass[1] * params.c_m,
        c_m: params.c_m,
        mass_p1: mass[0],
        mass_p2: mass[1],
        follows_p1: verdict_p1 != Verdict::Violated,
        follows_p2: verdict_p2 != Verdict::Violated,
        verdict_p1,
        verdict_p2,
        ci_halfwidth_p1: 0.0,
        ci_halfwidth_p2: 0.0,
        ci_halfwidth_lambda: 0.0,
    }
}

/// Which model parameter a regime scan varies; the companion parameters are
/// pinned to the reference settings of each scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ScanAxis {
    /// `c_m in {0, 0.001, ..., 1}` at `beta = p = q = 0.9`, `c = 1`.
    CM,
    /// `q in {0.5, 0.501, ..., 0.999}` at `beta = p = 0.9`, `c_m = 0.8`, `c = 1`.
    Q,
    /// `beta in {0.001, ..., 0.999}` at `p = q = 0.9`, `c_m = 0.8`, `c = 1`.
    Beta,
}

impl ScanAxis {
    pub fn values(&self) -> Vec<f64> {
        match self {
            ScanAxis::CM => (0..=1000).map(|i| i as f64 / 1000.0).collect(),
            ScanAxis::Q => (500..=999).map(|i| i as f64 / 1000.0).collect(),
            ScanAxis::Beta => (1..=999).map(|i| i as f64 / 1000.0).collect(),
        }
    }

    pub fn params(&self, value: f64) -> ModelParams {
        match self {
            ScanAxis::CM => ModelParams::symmetric(0.9, 0.9, 1.0, value, 0.9),
            ScanAxis::Q => ModelParams::symmetric(0.9, value, 1.0, 0.8, 0.9),
            ScanAxis::Beta => ModelParams::symmetric(0.9, 0.9, 1.0, 0.8, value),
        }
        .expect("scan instances are valid")
    }

    pub fn name(&self) -> &'static str {
        match self {
            ScanAxis::CM => "c_m",
            ScanAxis::Q => "q",
            ScanAxis::Beta => "beta",
        }
    }
}

/// One cell of a regime scan.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RegimeRow {
    pub axis_value: f64,
    pub k: u32,
    pub follows_p1: bool,
    pub follows_p2: bool,
    pub non_ic: bool,
}

/// For each axis value and window length: learned policy (asymptotic fixed
/// point), exact stationary window distribution, incentive verdicts.
pub fn ic_regime_scan(axis: ScanAxis, ks: &[u32], tol: f64) -> Vec<RegimeRow> {
    let values = axis.values();
    let mut cells: Vec<(f64, u32)> = Vec::with_capacity(values.len() * ks.len());
    for &k in ks {
        for &v in &values {
            cells.push((v, k));
        }
    }
    cells
        .par_iter()
        .map(|&(value, k)| {
            let params = axis.params(value);
            let (table, _) = asymptotic_q(&params, k, tol);
            let policy = policy_from_q(&table);
            let dist = stationary_window_distribution(&policy, &params);
            let report = ic_check(&policy, &dist, &params);
            RegimeRow {
                axis_value: value,
                k,
                follows_p1: report.follows_p1,
                follows_p2: report.follows_p2,
                non_ic: !report.ic_holds(),
            }
        })
        .collect()
}

/// Renders regime rows as CSV with columns `axis_value,K,ic_p1,ic_p2,non_ic`.
pub fn regime_csv(rows: &[RegimeRow]) -> String {
    let mut out = String::from("axis_value,K,ic_p1,ic_p2,non_ic\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.axis_value,
            r.k,
            r.follows_p1,
            r.follows_p2,
            u8::from(r.non_ic)
        ));
    }
    out
}

/// Exact expected discounted cost of following a window policy, tabulated
/// over (window, belief-node) pairs. The belief dimension tracks the true
/// Bayesian filter on the solver grid; the policy only ever sees the window.
#[derive(Debug, Clone)]
pub struct WindowPolicyValues {
    pub k: u32,
    pub grid: BeliefGrid,
    values: Vec<f64>,
}

impl WindowPolicyValues {
    fn slot(&self, w: usize, i: usize) -> f64 {
        self.values[w * self.grid.len() + i]
    }

    /// Cost of starting at belief `x0`, entering at the window whose
    /// conditional probability best matches `x0`.
    pub fn cost_at(&self, x0: Belief, params: &ModelParams) -> f64 {
        let w = window_for_belief(x0, self.k, params).index();
        let (i, frac) = self.grid.locate(x0);
        self.slot(w, i) + frac * (self.slot(w, i + 1) - self.slot(w, i))
    }
}

/// Policy evaluation of a window policy by fixed-point iteration over the
/// (window, belief) table, certified like the optimal solver.
pub fn solve_window_policy_values(
    policy: &WindowPolicy,
    params: &ModelParams,
    grid: &BeliefGrid,
    tol: f64,
) -> WindowPolicyValues {
    let k = policy.k;
    let n_w = window_count(k);
    let n_x = grid.len();
    let stencil = BackupStencil::new(grid, params);
    let shifts: Vec<[usize; 3]> = ObservationWindow::all(k)
        .map(|w| {
            [
                w.shift(Observation::Hazard).index(),
                w.shift(Observation::NoHazard).index(),
                w.shift(Observation::NoInfo).index(),
            ]
        })
        .collect();

    let scale = params.c.max(params.c_m) / (1.0 - params.beta);
    let stop = certified_stop(tol, params.beta, scale);
    let mut values = vec![0.0f64; n_w * n_x];
    let mut next = vec![0.0f64; n_w * n_x];
    loop {
        let mut diff = 0.0f64;
        for (w_idx, shift) in shifts.iter().enumerate() {
            let action = policy.actions[w_idx];
            let base_haz = &values[shift[0] * n_x..(shift[0] + 1) * n_x];
            let base_clear = &values[shift[1] * n_x..(shift[1] + 1) * n_x];
            let base_skip = &values[shift[2] * n_x..(shift[2] + 1) * n_x];
            for i in 0..n_x {
                let v = match action {
                    Action::P1 => {
                        stencil.cost[i]
                            + params.beta
                                * (stencil.p_haz[i] * stencil.after_hazard[i].eval(base_haz)
                                    + (1.0 - stencil.p_haz[i])
                                        * stencil.after_no_hazard[i].eval(base_clear))
                    }
                    Action::P2 => {
                        params.c_m + params.beta * stencil.after_no_info[i].eval(base_skip)
                    }
                };
                let slot = w_idx * n_x + i;
                diff = diff.max((v - next[slot]).abs());
                next[slot] = v;
            }
        }
        std::mem::swap(&mut values, &mut next);
        if diff <= stop {
            return WindowPolicyValues {
                k,
                grid: *grid,
                values,
            };
        }
    }
}

/// One-shot wrapper around [`solve_window_policy_values`].
pub fn evaluate_window_policy(
    policy: &WindowPolicy,
    params: &ModelParams,
    x0: Belief,
    grid: &BeliefGrid,
    tol: f64,
) -> f64 {
    solve_window_policy_values(policy, params, grid, tol).cost_at(x0, params)
}
