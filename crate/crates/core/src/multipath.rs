//! Three-path extension: two independent stochastic paths plus the
//! deterministic one, solved on a two-dimensional belief grid, with the
//! window-based learner and incentive scan extended to per-path windows.
//!
//! Exploring one stochastic path Bayes-updates its belief while the other
//! path's belief drifts by its chain transition; the deterministic path
//! drifts both. Under identical path parameters the value function is
//! symmetric in its two arguments, and the backup here preserves that
//! symmetry bit for bit.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::grid::BeliefGrid;
use crate::irm::Verdict;
use crate::model::{
    expected_p1_cost, hazard_probability, step_hazard, step_no_hazard, transition_prior, Belief,
    ModelParams, Observation,
};
use crate::qlearn::{expected_p1_cost_window, window_count, FixedPointStats, ObservationWindow};
use crate::solver::certified_stop;

#[derive(Debug, Error)]
pub enum MultipathError {
    #[error("joint window space too large for K = {k}: {joint_states} states (two {windows}-window paths with 4 hidden-state pairs); K <= 4 is supported")]
    WindowSpaceTooLarge {
        k: u32,
        windows: usize,
        joint_states: usize,
    },
}

/// Pair of beliefs, one per stochastic path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Belief2 {
    pub x1: Belief,
    pub x1_alt: Belief,
}

/// Path choice in the three-path world.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Action3 {
    /// First stochastic path.
    P1,
    /// Second stochastic path.
    P1Alt,
    /// Deterministic path.
    P2,
}

/// Value function on an `n x n` grid over the belief square, evaluated off
/// the grid by bilinear interpolation.
#[derive(Debug, Clone)]
pub struct ValueFunction2D {
    pub axis: BeliefGrid,
    pub values: Vec<f64>,
}

impl ValueFunction2D {
    fn zero(axis: BeliefGrid) -> Self {
        Self {
            values: vec![0.0; axis.len() * axis.len()],
            axis,
        }
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.axis.len() + j]
    }

    pub fn eval(&self, x: Belief2) -> f64 {
        let n = self.axis.len();
        let (i, fi) = self.axis.locate(x.x1);
        let (j, fj) = self.axis.locate(x.x1_alt);
        bilerp(&self.values, n, i, fi, j, fj)
    }

    /// Largest asymmetry `|V(a, b) - V(b, a)|` over the grid.
    pub fn symmetry_residual(&self) -> f64 {
        let n = self.axis.len();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                worst = worst.max((self.at(i, j) - self.at(j, i)).abs());
            }
        }
        worst
    }
}

/// Bilinear interpolation with a mirror-invariant summation order, so that a
/// symmetric value array yields bitwise-identical results for mirrored
/// queries.
#[inline]
fn bilerp(values: &[f64], n: usize, i: usize, fi: f64, j: usize, fj: f64) -> f64 {
    let v00 = values[i * n + j];
    let v01 = values[i * n + j + 1];
    let v10 = values[(i + 1) * n + j];
    let v11 = values[(i + 1) * n + j + 1];
    let t00 = (1.0 - fi) * (1.0 - fj) * v00;
    let t01 = (1.0 - fi) * fj * v01;
    let t10 = fi * (1.0 - fj) * v10;
    let t11 = fi * fj * v11;
    (t00 + t11) + (t01 + t10)
}

/// Per-axis stencil for one stochastic path.
struct AxisStencil {
    cost: Vec<f64>,
    p_haz: Vec<f64>,
    after_hazard: Vec<(usize, f64)>,
    after_no_hazard: Vec<(usize, f64)>,
    after_no_info: Vec<(usize, f64)>,
}

impl AxisStencil {
    fn new(axis: &BeliefGrid, params: &ModelParams) -> Self {
        let nodes: Vec<f64> = axis.nodes().collect();
        Self {
            cost: nodes.iter().map(|&x| expected_p1_cost(x, params)).collect(),
            p_haz: nodes
                .iter()
                .map(|&x| hazard_probability(x, params))
                .collect(),
            after_hazard: nodes
                .iter()
                .map(|&x| axis.locate(step_hazard(x, params)))
                .collect(),
            after_no_hazard: nodes
                .iter()
                .map(|&x| axis.locate(step_no_hazard(x, params)))
                .collect(),
            after_no_info: nodes
                .iter()
                .map(|&x| axis.locate(transition_prior(x, params)))
                .collect(),
        }
    }
}

/// Action values at a pair of node indices. `explore_first` computes the
/// value of probing the path laid along `a`-coordinates while the `b`-path
/// drifts; the caller orients coordinates so both stochastic actions share
/// one code path (which is what keeps the solved table exactly symmetric).
struct Backup2D<'a> {
    a: &'a AxisStencil,
    b: &'a AxisStencil,
    n: usize,
    beta: f64,
    c_m: f64,
}

impl Backup2D<'_> {
    /// `lookup(i, fi, j, fj)` reads the continuation value with the explored
    /// path's coordinate first.
    #[inline]
    fn explore_first(&self, ia: usize, ib: usize, values: &[f64], swap: bool) -> f64 {
        let drift = self.b.after_no_info[ib];
        let read = |(ea, fa): (usize, f64)| {
            if swap {
                bilerp(values, self.n, drift.0, drift.1, ea, fa)
            } else {
                bilerp(values, self.n, ea, fa, drift.0, drift.1)
            }
        };
        self.a.cost[ia]
            + self.beta
                * (self.a.p_haz[ia] * read(self.a.after_hazard[ia])
                    + (1.0 - self.a.p_haz[ia]) * read(self.a.after_no_hazard[ia]))
    }

    #[inline]
    fn take_safe(&self, ia: usize, ib: usize, values: &[f64]) -> f64 {
        let da = self.a.after_no_info[ia];
        let db = self.b.after_no_info[ib];
        self.c_m + self.beta * bilerp(values, self.n, da.0, da.1, db.0, db.1)
    }
}

/// Action values at an arbitrary belief pair against a converged table.
pub fn q_values_3(x: Belief2, v: &ValueFunction2D, params: &ModelParams) -> [f64; 3] {
    let q = |explored: Belief, other: Belief, swap: bool| {
        let haz = hazard_probability(explored, params);
        let drift = transition_prior(other, params);
        let read = |e: Belief| {
            if swap {
                v.eval(Belief2 {
                    x1: drift,
                    x1_alt: e,
                })
            } else {
                v.eval(Belief2 {
                    x1: e,
                    x1_alt: drift,
                })
            }
        };
        expected_p1_cost(explored, params)
            + params.beta
                * (haz * read(step_hazard(explored, params))
                    + (1.0 - haz) * read(step_no_hazard(explored, params)))
    };
    let q1 = q(x.x1, x.x1_alt, false);
    let q1_alt = q(x.x1_alt, x.x1, true);
    let q2 = params.c_m
        + params.beta
            * v.eval(Belief2 {
                x1: transition_prior(x.x1, params),
                x1_alt: transition_prior(x.x1_alt, params),
            });
    [q1, q1_alt, q2]
}

/// Value iteration for two stochastic paths with (possibly) distinct
/// parameters. Deterministic-path cost and discount are taken from the first
/// parameter set and must match the second's.
pub(crate) fn solve_3path_with(
    params_a: &ModelParams,
    params_b: &ModelParams,
    axis: &BeliefGrid,
    tol: f64,
) -> (ValueFunction2D, FixedPointStats) {
    assert!(tol > 0.0);
    assert_eq!(params_a.c_m, params_b.c_m);
    assert_eq!(params_a.beta, params_b.beta);
    let n = axis.len();
    let sa = AxisStencil::new(axis, params_a);
    let sb = AxisStencil::new(axis, params_b);
    let forward = Backup2D {
        a: &sa,
        b: &sb,
        n,
        beta: params_a.beta,
        c_m: params_a.c_m,
    };
    let backward = Backup2D {
        a: &sb,
        b: &sa,
        n,
        beta: params_a.beta,
        c_m: params_a.c_m,
    };

    let scale = params_a.c_m.max(params_a.c).max(params_b.c) / (1.0 - params_a.beta);
    let stop = certified_stop(tol, params_a.beta, scale);
    let mut v = ValueFunction2D::zero(*axis);
    let mut next = vec![0.0f64; n * n];
    let mut iterations = 0u32;
    loop {
        let mut diff = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let q1 = forward.explore_first(i, j, &v.values, false);
                let q1_alt = backward.explore_first(j, i, &v.values, true);
                let q2 = forward.take_safe(i, j, &v.values);
                let val = q1.min(q1_alt).min(q2);
                let slot = i * n + j;
                diff = diff.max((val - next[slot]).abs());
                next[slot] = val;
            }
        }
        std::mem::swap(&mut v.values, &mut next);
        iterations += 1;
        if diff <= stop {
            return (
                v,
                FixedPointStats {
                    iterations,
                    residual: diff,
                },
            );
        }
    }
}

/// Solves the three-path optimality equation on an `n x n` belief grid (both
/// stochastic paths follow the same model).
pub fn solve_3path(
    params: &ModelParams,
    axis: &BeliefGrid,
    tol: f64,
) -> (ValueFunction2D, FixedPointStats) {
    solve_3path_with(params, params, axis, tol)
}

/// Grid of optimal actions over the belief square.
#[derive(Debug, Clone)]
pub struct PolicyMap2D {
    pub axis: BeliefGrid,
    pub actions: Vec<Action3>,
}

impl PolicyMap2D {
    pub fn action(&self, i: usize, j: usize) -> Action3 {
        self.actions[i * self.axis.len() + j]
    }

    /// Mirror symmetry: the action at `(a, b)` must equal the action at
    /// `(b, a)` with the two stochastic paths exchanged.
    pub fn is_mirror_symmetric(&self) -> bool {
        let n = self.axis.len();
        (0..n).all(|i| {
            (0..n).all(|j| {
                let m = match self.action(j, i) {
                    Action3::P1 => Action3::P1Alt,
                    Action3::P1Alt => Action3::P1,
                    Action3::P2 => Action3::P2,
                };
                // Diagonal ties resolve to P1 on both sides of the mirror.
                self.action(i, j) == m || (i == j && self.action(i, j) == Action3::P1)
            })
        })
    }

    /// CSV with columns `x1,x1p,action` (1, 1', 2).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x1,x1p,action\n");
        let n = self.axis.len();
        for i in 0..n {
            for j in 0..n {
                let a = match self.action(i, j) {
                    Action3::P1 => "1",
                    Action3::P1Alt => "1p",
                    Action3::P2 => "2",
                };
                out.push_str(&format!(
                    "{},{},{a}\n",
                    self.axis.node(i),
                    self.axis.node(j)
                ));
            }
        }
        out
    }
}

/// Greedy action per grid cell; ties prefer P1, then P1', then P2.
pub fn policy_map_3(v: &ValueFunction2D, params: &ModelParams) -> PolicyMap2D {
    let n = v.axis.len();
    let mut actions = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let [q1, q1_alt, q2] = q_values_3(
                Belief2 {
                    x1: v.axis.node(i),
                    x1_alt: v.axis.node(j),
                },
                v,
                params,
            );
            let a = if q1 <= q1_alt && q1 <= q2 {
                Action3::P1
            } else if q1_alt <= q2 {
                Action3::P1Alt
            } else {
                Action3::P2
            };
            actions.push(a);
        }
    }
    PolicyMap2D {
        axis: v.axis,
        actions,
    }
}

// --- Window learner over per-path observation windows ---------------------

/// Q-table over pairs of per-path windows (the path not traveled records
/// no-info), with the three-path action set.
#[derive(Debug, Clone)]
pub struct Q3Table {
    pub k: u32,
    /// Indexed by `w1 * 3^k + w2`.
    pub values: Vec<[f64; 3]>,
}

fn pair_count(k: u32) -> usize {
    window_count(k) * window_count(k)
}

fn check_k(k: u32) -> Result<(), MultipathError> {
    if k == 0 || k > 4 {
        return Err(MultipathError::WindowSpaceTooLarge {
            k,
            windows: window_count(k.max(1)),
            joint_states: 4 * pair_count(k.max(1)),
        });
    }
    Ok(())
}

/// Asymptotic fixed point of three-path window Q-learning.
pub fn asymptotic_q3(
    params: &ModelParams,
    k: u32,
    tol: f64,
) -> Result<(Q3Table, FixedPointStats), MultipathError> {
    check_k(k)?;
    let w_count = window_count(k);
    let mut haz = Vec::with_capacity(w_count);
    let mut shift_haz = Vec::with_capacity(w_count);
    let mut shift_clear = Vec::with_capacity(w_count);
    let mut shift_skip = Vec::with_capacity(w_count);
    for w in ObservationWindow::all(k) {
        let x = crate::qlearn::prob_h_given_window(&w, params);
        haz.push(x * params.p_h + (1.0 - x) * params.p_l);
        shift_haz.push(w.shift(Observation::Hazard).index());
        shift_clear.push(w.shift(Observation::NoHazard).index());
        shift_skip.push(w.shift(Observation::NoInfo).index());
    }

    let total = pair_count(k);
    let scale = params.c.max(params.c_m) / (1.0 - params.beta);
    let stop = certified_stop(tol, params.beta, scale);
    let mut values = vec![[0.0f64; 3]; total];
    let mut next = vec![[0.0f64; 3]; total];
    let mut iterations = 0u32;
    loop {
        let mut diff = 0.0f64;
        for w1 in 0..w_count {
            for w2 in 0..w_count {
                let idx = w1 * w_count + w2;
                let m = |a: usize, b: usize| {
                    let v = &values[a * w_count + b];
                    v[0].min(v[1]).min(v[2])
                };
                let q1 = haz[w1] * (params.c + params.beta * m(shift_haz[w1], shift_skip[w2]))
                    + (1.0 - haz[w1]) * params.beta * m(shift_clear[w1], shift_skip[w2]);
                let q1_alt = haz[w2] * (params.c + params.beta * m(shift_skip[w1], shift_haz[w2]))
                    + (1.0 - haz[w2]) * params.beta * m(shift_skip[w1], shift_clear[w2]);
                let q2 = params.c_m + params.beta * m(shift_skip[w1], shift_skip[w2]);
                let qs = [q1, q1_alt, q2];
                for (slot, q) in qs.iter().enumerate() {
                    diff = diff.max((q - values[idx][slot]).abs());
                }
                next[idx] = qs;
            }
        }
        std::mem::swap(&mut values, &mut next);
        iterations += 1;
        if diff <= stop {
            return Ok((
                Q3Table { k, values },
                FixedPointStats {
                    iterations,
                    residual: diff,
                },
            ));
        }
    }
}

/// Greedy three-path action per window pair; ties prefer P1, then P1'.
#[derive(Debug, Clone)]
pub struct WindowPolicy3 {
    pub k: u32,
    pub actions: Vec<Action3>,
}

pub fn policy_from_q3(table: &Q3Table) -> WindowPolicy3 {
    WindowPolicy3 {
        k: table.k,
        actions: table
            .values
            .iter()
            .map(|&[q1, q1_alt, q2]| {
                if q1 <= q1_alt && q1 <= q2 {
                    Action3::P1
                } else if q1_alt <= q2 {
                    Action3::P1Alt
                } else {
                    Action3::P2
                }
            })
            .collect(),
    }
}

/// Exact stationary distribution over (hidden pair, window pair) under a
/// three-path window policy; returns the window-pair marginal.
pub fn stationary_window_pair_distribution(
    policy: &WindowPolicy3,
    params: &ModelParams,
) -> Vec<f64> {
    let k = policy.k;
    let w_count = window_count(k);
    let pairs = w_count * w_count;
    let total = 4 * pairs;

    let mut shift_haz = Vec::with_capacity(w_count);
    let mut shift_clear = Vec::with_capacity(w_count);
    let mut shift_skip = Vec::with_capacity(w_count);
    for w in ObservationWindow::all(k) {
        shift_haz.push(w.shift(Observation::Hazard).index());
        shift_clear.push(w.shift(Observation::NoHazard).index());
        shift_skip.push(w.shift(Observation::NoInfo).index());
    }

    // State layout: ((s1 * 2 + s2) * pairs) + w1 * w_count + w2, s = 0 high.
    let stay = |s: usize| if s == 0 { params.q_hh } else { params.q_ll };
    let p_state = |s: usize| if s == 0 { params.p_h } else { params.p_l };

    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::with_capacity(16); total];
    for s1 in 0..2usize {
        for s2 in 0..2usize {
            for w1 in 0..w_count {
                for w2 in 0..w_count {
                    let from = (s1 * 2 + s2) * pairs + w1 * w_count + w2;
                    let action = policy.actions[w1 * w_count + w2];
                    let obs_branches: Vec<(usize, usize, f64)> = match action {
                        Action3::P1 => vec![
                            (shift_haz[w1], shift_skip[w2], p_state(s1)),
                            (shift_clear[w1], shift_skip[w2], 1.0 - p_state(s1)),
                        ],
                        Action3::P1Alt => vec![
                            (shift_skip[w1], shift_haz[w2], p_state(s2)),
                            (shift_skip[w1], shift_clear[w2], 1.0 - p_state(s2)),
                        ],
                        Action3::P2 => vec![(shift_skip[w1], shift_skip[w2], 1.0)],
                    };
                    for (nw1, nw2, p_obs) in obs_branches {
                        if p_obs == 0.0 {
                            continue;
                        }
                        for ns1 in 0..2usize {
                            let p1 = if ns1 == s1 { stay(s1) } else { 1.0 - stay(s1) };
                            if p1 == 0.0 {
                                continue;
                            }
                            for ns2 in 0..2usize {
                                let p2 = if ns2 == s2 { stay(s2) } else { 1.0 - stay(s2) };
                                if p2 == 0.0 {
                                    continue;
                                }
                                let to = (ns1 * 2 + ns2) * pairs + nw1 * w_count + nw2;
                                rows[from].push((to, p_obs * p1 * p2));
                            }
                        }
                    }
                }
            }
        }
    }

    let x_bar = params.stationary_high();
    let start_pair = (w_count - 1) * w_count + (w_count - 1);
    let mut mu = vec![0.0f64; total];
    mu[start_pair] = x_bar * x_bar;
    mu[pairs + start_pair] = x_bar * (1.0 - x_bar);
    mu[2 * pairs + start_pair] = (1.0 - x_bar) * x_bar;
    mu[3 * pairs + start_pair] = (1.0 - x_bar) * (1.0 - x_bar);

    let mut pushed = vec![0.0f64; total];
    let mut iterations = 0u32;
    loop {
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
            let nv = 0.5 * (mu[i] + pushed[i]);
            moved += (nv - mu[i]).abs();
            mu[i] = nv;
        }
        iterations += 1;
        if moved <= 1e-13 || iterations >= 500_000 {
            break;
        }
    }

    let mut marginal = vec![0.0f64; pairs];
    for s in 0..4 {
        for p in 0..pairs {
            marginal[p] += mu[s * pairs + p];
        }
    }
    marginal
}

/// Three-way incentive conditions for the window policy: a traveler told to
/// take a stochastic path must expect it to cost no more than `c_m` and no
/// more than the other stochastic path; told to take the deterministic path,
/// both stochastic paths must conditionally cost at least `c_m`.
#[derive(Debug, Clone, Serialize)]
pub struct IC3Report {
    pub holds: bool,
    pub verdicts: [Verdict; 3],
    pub masses: [f64; 3],
    /// Conditional expected costs given each recommendation:
    /// `(recommended-or-first path, other path)`.
    pub conditional_costs: [[Option<f64>; 2]; 3],
    pub c_m: f64,
}

pub fn ic_check_3path(
    policy: &WindowPolicy3,
    pair_marginal: &[f64],
    params: &ModelParams,
) -> IC3Report {
    let w_count = window_count(policy.k);
    let c1: Vec<f64> = ObservationWindow::all(policy.k)
        .map(|w| expected_p1_cost_window(&w, params))
        .collect();

    let mut mass = [0.0f64; 3];
    let mut cost_first = [0.0f64; 3]; // cost of path P1 given each rec
    let mut cost_second = [0.0f64; 3]; // cost of path P1' given each rec
    for w1 in 0..w_count {
        for w2 in 0..w_count {
            let idx = w1 * w_count + w2;
            let m = pair_marginal[idx];
            if m == 0.0 {
                continue;
            }
            let slot = match policy.actions[idx] {
                Action3::P1 => 0,
                Action3::P1Alt => 1,
                Action3::P2 => 2,
            };
            mass[slot] += m;
            cost_first[slot] += m * c1[w1];
            cost_second[slot] += m * c1[w2];
        }
    }

    let cond = |slot: usize| -> [Option<f64>; 2] {
        if mass[slot] > 0.0 {
            [
                Some(cost_first[slot] / mass[slot]),
                Some(cost_second[slot] / mass[slot]),
            ]
        } else {
            [None, None]
        }
    };
    let conds = [cond(0), cond(1), cond(2)];

    let verdicts = [
        match conds[0] {
            [Some(own), Some(other)] => {
                if own <= params.c_m && own <= other {
                    Verdict::Holds
                } else {
                    Verdict::Violated
                }
            }
            _ => Verdict::Vacuous,
        },
        match conds[1] {
            [Some(other), Some(own)] => {
                if own <= params.c_m && own <= other {
                    Verdict::Holds
                } else {
                    Verdict::Violated
                }
            }
            _ => Verdict::Vacuous,
        },
        match conds[2] {
            [Some(first), Some(second)] => {
                if first >= params.c_m && second >= params.c_m {
                    Verdict::Holds
                } else {
                    Verdict::Violated
                }
            }
            _ => Verdict::Vacuous,
        },
    ];

    IC3Report {
        holds: verdicts.iter().all(|v| *v != Verdict::Violated),
        verdicts,
        masses: mass,
        conditional_costs: conds,
        c_m: params.c_m,
    }
}

/// Parameter rows of the three-path incentive scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ScanAxis3 {
    /// `c_m in {0, 0.01, ..., 1}` at `p = q = beta = 0.9`, `c = 1`.
    CM,
    /// `q in {0.5, 0.51, ..., 0.99}` at `p = beta = 0.9`, `c_m = 0.8`, `c = 1`.
    Q,
    /// `beta in {0.01, ..., 0.99}` at `p = q = 0.9`, `c_m = 0.8`, `c = 1`.
    Beta,
}

impl ScanAxis3 {
    pub fn values(&self) -> Vec<f64> {
        match self {
            ScanAxis3::CM => (0..=100).map(|i| i as f64 / 100.0).collect(),
            ScanAxis3::Q => (50..=99).map(|i| i as f64 / 100.0).collect(),
            ScanAxis3::Beta => (1..=99).map(|i| i as f64 / 100.0).collect(),
        }
    }

    pub fn params(&self, value: f64) -> ModelParams {
        match self {
            ScanAxis3::CM => ModelParams::symmetric(0.9, 0.9, 1.0, value, 0.9),
            ScanAxis3::Q => ModelParams::symmetric(0.9, value, 1.0, 0.8, 0.9),
            ScanAxis3::Beta => ModelParams::symmetric(0.9, 0.9, 1.0, 0.8, value),
        }
        .expect("scan instances are valid")
    }

    pub fn name(&self) -> &'static str {
        match self {
            ScanAxis3::CM => "c_m",
            ScanAxis3::Q => "q",
            ScanAxis3::Beta => "beta",
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Regime3Row {
    pub axis_value: f64,
    pub k: u32,
    pub ic_holds: bool,
}

/// Full three-path incentive scan: learned policy, exact stationary window
/// pairs, three-way conditions, for each axis value and window length.
pub fn ic_scan_3path(
    axis: ScanAxis3,
    ks: &[u32],
    tol: f64,
) -> Result<Vec<Regime3Row>, MultipathError> {
    for &k in ks {
        check_k(k)?;
    }
    let values = axis.values();
    let mut cells = Vec::with_capacity(values.len() * ks.len());
    for &k in ks {
        for &v in &values {
            cells.push((v, k));
        }
    }
    Ok(cells
        .par_iter()
        .map(|&(value, k)| {
            let params = axis.params(value);
            let (table, _) = asymptotic_q3(&params, k, tol).expect("k validated");
            let policy = policy_from_q3(&table);
            let marginal = stationary_window_pair_distribution(&policy, &params);
            let report = ic_check_3path(&policy, &marginal, &params);
            Regime3Row {
                axis_value: value,
                k,
                ic_holds: report.holds,
            }
        })
        .collect())
}

pub fn regime3_csv(rows: &[Regime3Row]) -> String {
    let mut out = String::from("axis_value,K,ic_holds\n");
    for r in rows {
        out.push_str(&format!("{},{},{}\n", r.axis_value, r.k, r.ic_holds));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::solve_value_function;

    fn fig4_params() -> ModelParams {
        ModelParams::symmetric(0.9, 0.9, 1.0, 0.7, 0.9).unwrap()
    }

    #[test]
    fn q_values_mirror_symmetry_is_exact() {
        let p = fig4_params();
        let (v, _) = solve_3path(&p, &BeliefGrid::new(41), 1e-8);
        for &(a, b) in &[(0.13, 0.77), (0.5, 0.25), (0.0, 1.0), (0.31, 0.31)] {
            let fwd = q_values_3(Belief2 { x1: a, x1_alt: b }, &v, &p);
            let rev = q_values_3(Belief2 { x1: b, x1_alt: a }, &v, &p);
            assert_eq!(fwd[0], rev[1]);
            assert_eq!(fwd[1], rev[0]);
            assert_eq!(fwd[2], rev[2]);
        }
        // On the diagonal both stochastic paths are interchangeable.
        let d = q_values_3(
            Belief2 {
                x1: 0.31,
                x1_alt: 0.31,
            },
            &v,
            &p,
        );
        assert_eq!(d[0], d[1]);
    }

    #[test]
    fn beta_zero_reduces_to_immediate_costs() {
        let p = ModelParams::symmetric(0.9, 0.9, 1.0, 0.7, 0.0).unwrap();
        let (v, stats) = solve_3path(&p, &BeliefGrid::new(21), 1e-9);
        assert_eq!(stats.iterations, 1);
        let q = q_values_3(
            Belief2 {
                x1: 0.3,
                x1_alt: 0.8,
            },
            &v,
            &p,
        );
        assert!((q[0] - expected_p1_cost(0.3, &p)).abs() < 1e-12);
        assert!((q[1] - expected_p1_cost(0.8, &p)).abs() < 1e-12);
        assert!((q[2] - p.c_m).abs() < 1e-12);
    }

    #[test]
    fn solved_table_is_exactly_symmetric() {
        let p = fig4_params();
        let (v, _) = solve_3path(&p, &BeliefGrid::new(60), 1e-9);
        assert_eq!(v.symmetry_residual(), 0.0);
    }

    #[test]
    fn extra_path_only_helps() {
        // Compare against the two-path solver at the same c_m.
        let p = fig4_params();
        let axis = BeliefGrid::new(101);
        let (v3, _) = solve_3path(&p, &axis, 1e-9);
        let (v2, _) = solve_value_function(&p, &BeliefGrid::new(1001), 1e-9);
        for i in 0..=10 {
            let x = i as f64 / 10.0;
            let three = v3.eval(Belief2 { x1: x, x1_alt: x });
            let two = v2.eval(x);
            assert!(
                three <= two + 5e-3,
                "x {x}: three-path {three} vs two-path {two}"
            );
        }
        // And it helps strictly somewhere off the diagonal.
        let mid = v3.eval(Belief2 {
            x1: 0.9,
            x1_alt: 0.1,
        });
        assert!(mid + 1e-3 < v2.eval(0.9));
    }

    #[test]
    fn value_is_monotone_in_each_coordinate() {
        let p = fig4_params();
        let (v, _) = solve_3path(&p, &BeliefGrid::new(80), 1e-9);
        let n = v.axis.len();
        for i in 0..n {
            for j in 0..n - 1 {
                assert!(v.at(i, j + 1) >= v.at(i, j) - 1e-9);
                assert!(v.at(j + 1, i) >= v.at(j, i) - 1e-9);
            }
        }
    }

    #[test]
    fn backup_contracts_at_rate_beta() {
        let p = fig4_params();
        let axis = BeliefGrid::new(30);
        let n = axis.len();
        let sa = AxisStencil::new(&axis, &p);
        let sb = AxisStencil::new(&axis, &p);
        let backup = Backup2D {
            a: &sa,
            b: &sb,
            n,
            beta: p.beta,
            c_m: p.c_m,
        };
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let apply = |vals: &[f64]| -> Vec<f64> {
            let mut out = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    let q1 = backup.explore_first(i, j, vals, false);
                    let q1b = backup.explore_first(j, i, vals, true);
                    let q2 = backup.take_safe(i, j, vals);
                    out[i * n + j] = q1.min(q1b).min(q2);
                }
            }
            out
        };
        for _ in 0..5 {
            let v: Vec<f64> = (0..n * n).map(|_| rng.random_range(0.0..7.0)).collect();
            let w: Vec<f64> = (0..n * n).map(|_| rng.random_range(0.0..7.0)).collect();
            let d_in = v
                .iter()
                .zip(&w)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            let tv = apply(&v);
            let tw = apply(&w);
            let d_out = tv
                .iter()
                .zip(&tw)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            assert!(d_out <= p.beta * d_in + 1e-12);
        }
    }

    #[test]
    fn policy_map_shows_three_regions_and_mirrors() {
        let p = fig4_params();
        let (v, _) = solve_3path(&p, &BeliefGrid::new(100), 1e-9);
        let map = policy_map_3(&v, &p);
        let n = map.axis.len();
        let at = |x: f64, y: f64| {
            map.action(
                (x * (n - 1) as f64).round() as usize,
                (y * (n - 1) as f64).round() as usize,
            )
        };
        assert_eq!(at(0.05, 0.95), Action3::P1);
        assert_eq!(at(0.95, 0.05), Action3::P1Alt);
        assert_eq!(at(0.95, 0.95), Action3::P2);
        assert!(map.is_mirror_symmetric());
        // Diagonal ties go to P1, never P1'.
        for i in 0..n {
            assert_ne!(map.action(i, i), Action3::P1Alt);
        }
    }

    #[test]
    fn collapsing_one_path_recovers_the_two_path_value() {
        // Make the second path uninformative and expensive enough to be
        // useless (its flat cost c/2 exceeds c_m); the slice of the 3-path
        // value at that path's resting belief must match the 2-path value.
        let shared = ModelParams::symmetric(0.9, 0.9, 1.0, 0.4, 0.9).unwrap();
        let useless = ModelParams::new(0.5, 0.5, 0.9, 0.9, 1.0, 0.4, 0.9).unwrap();
        let axis = BeliefGrid::new(101);
        let (v3, _) = solve_3path_with(&shared, &useless, &axis, 1e-9);
        let (v2, _) = solve_value_function(&shared, &BeliefGrid::new(1001), 1e-9);
        for i in 0..=20 {
            let x = i as f64 / 20.0;
            let sliced = v3.eval(Belief2 { x1: x, x1_alt: 0.5 });
            assert!(
                (sliced - v2.eval(x)).abs() < 0.02,
                "x {x}: sliced {sliced} vs two-path {}",
                v2.eval(x)
            );
        }
    }

    #[test]
    fn k_bounds_are_enforced_with_a_size_report() {
        let p = fig4_params();
        let err = asymptotic_q3(&p, 5, 1e-9).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("K = 5"), "{msg}");
        assert!(msg.contains("236196"), "{msg}"); // 4 * 243^2
    }

    #[test]
    fn three_path_ic_holds_at_reference_instance() {
        let p = fig4_params();
        let (table, stats) = asymptotic_q3(&p, 2, 1e-9).unwrap();
        assert!(stats.residual <= 1e-9);
        let policy = policy_from_q3(&table);
        let marginal = stationary_window_pair_distribution(&policy, &p);
        assert!((marginal.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        let report = ic_check_3path(&policy, &marginal, &p);
        assert!(report.holds, "{report:?}");
    }

    #[test]
    fn scan_rejects_oversized_k() {
        assert!(ic_scan_3path(ScanAxis3::CM, &[5], 1e-9).is_err());
    }
}
