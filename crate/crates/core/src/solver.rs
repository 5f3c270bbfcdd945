//! Value iteration for the optimal routing problem over a discretized belief
//! grid, plus policy extraction and numerical checks of the structural
//! properties the converged value function must satisfy (monotone, concave,
//! bounded by the always-P2 cost).
//!
//! The backup operator is a sup-norm contraction with modulus `beta`, so the
//! stopping rule `||V_k - V_{k-1}|| <= tol * (1 - beta) / beta` certifies a
//! true error below `tol`.

use crate::grid::{BeliefGrid, PolicyTable, ValueFunction};
use crate::model::{
    expected_p1_cost, hazard_probability, step_hazard, step_no_hazard, transition_prior, Action,
    ModelParams,
};

/// One-step action values at belief `x` given a continuation value function.
///
/// `q1` explores the stochastic path (belief branches on the observation);
/// `q2` takes the deterministic path (belief drifts by the chain transition).
/// Off-node continuation arguments are evaluated by linear interpolation.
pub fn q_values(x: f64, v: &ValueFunction, params: &ModelParams) -> (f64, f64) {
    let p_haz = hazard_probability(x, params);
    let q1 = expected_p1_cost(x, params)
        + params.beta
            * (p_haz * v.eval(step_hazard(x, params))
                + (1.0 - p_haz) * v.eval(step_no_hazard(x, params)));
    let q2 = params.c_m + params.beta * v.eval(transition_prior(x, params));
    (q1, q2)
}

/// One synchronous backup: node-wise `min(q1, q2)` against the input values.
pub fn bellman_backup(v: &ValueFunction, params: &ModelParams) -> ValueFunction {
    let values = v
        .grid
        .nodes()
        .map(|x| {
            let (q1, q2) = q_values(x, v, params);
            q1.min(q2)
        })
        .collect();
    ValueFunction {
        grid: v.grid,
        values,
    }
}

/// Interpolation stencil for a fixed belief map: left node index and fraction.
#[derive(Clone, Copy)]
pub(crate) struct Lerp {
    idx: usize,
    frac: f64,
}

impl Lerp {
    pub(crate) fn at(grid: &BeliefGrid, x: f64) -> Self {
        let (idx, frac) = grid.locate(x);
        Self { idx, frac }
    }

    /// Like [`Lerp::at`], but never mixes node values across a discontinuity
    /// at `jump`: in the cell straddling it, lookups pin to the node on the
    /// same side as the target (the low side owns the jump point itself).
    fn one_sided_at(grid: &BeliefGrid, x: f64, jump: f64) -> Self {
        let (idx, frac) = grid.locate(x);
        let left = grid.node(idx);
        let right = grid.node(idx + 1);
        if left <= jump && jump < right {
            if x <= jump {
                Self { idx, frac: 0.0 }
            } else {
                Self { idx, frac: 1.0 }
            }
        } else {
            Self { idx, frac }
        }
    }

    #[inline]
    pub(crate) fn eval(&self, values: &[f64]) -> f64 {
        values[self.idx] + self.frac * (values[self.idx + 1] - values[self.idx])
    }
}

/// Precomputed per-node quantities for fast repeated backups. The belief maps
/// never change across iterations, so each sweep is a handful of fused
/// multiply-adds per node.
pub(crate) struct BackupStencil {
    pub(crate) cost: Vec<f64>,
    pub(crate) p_haz: Vec<f64>,
    pub(crate) after_hazard: Vec<Lerp>,
    pub(crate) after_no_hazard: Vec<Lerp>,
    pub(crate) after_no_info: Vec<Lerp>,
    pub(crate) c_m: f64,
    pub(crate) beta: f64,
}

impl BackupStencil {
    pub(crate) fn new(grid: &BeliefGrid, params: &ModelParams) -> Self {
        Self::with_jump(grid, params, None)
    }

    /// `jump` marks a belief where the tabulated function is discontinuous
    /// (a policy switch under policy evaluation); continuation lookups then
    /// never interpolate across it.
    pub(crate) fn with_jump(grid: &BeliefGrid, params: &ModelParams, jump: Option<f64>) -> Self {
        let nodes: Vec<f64> = grid.nodes().collect();
        let lerp = |x: f64| match jump {
            Some(t) => Lerp::one_sided_at(grid, x, t),
            None => Lerp::at(grid, x),
        };
        Self {
            cost: nodes.iter().map(|&x| expected_p1_cost(x, params)).collect(),
            p_haz: nodes
                .iter()
                .map(|&x| hazard_probability(x, params))
                .collect(),
            after_hazard: nodes
                .iter()
                .map(|&x| lerp(step_hazard(x, params)))
                .collect(),
            after_no_hazard: nodes
                .iter()
                .map(|&x| lerp(step_no_hazard(x, params)))
                .collect(),
            after_no_info: nodes
                .iter()
                .map(|&x| lerp(transition_prior(x, params)))
                .collect(),
            c_m: params.c_m,
            beta: params.beta,
        }
    }

    #[inline]
    pub(crate) fn node_q(&self, i: usize, values: &[f64]) -> (f64, f64) {
        let q1 = self.cost[i]
            + self.beta
                * (self.p_haz[i] * self.after_hazard[i].eval(values)
                    + (1.0 - self.p_haz[i]) * self.after_no_hazard[i].eval(values));
        let q2 = self.c_m + self.beta * self.after_no_info[i].eval(values);
        (q1, q2)
    }

    /// Sweeps `values` into `out`, returning the sup-norm change.
    fn sweep_optimal(&self, values: &[f64], out: &mut [f64]) -> f64 {
        let mut diff = 0.0f64;
        for (i, slot) in out.iter_mut().enumerate() {
            let (q1, q2) = self.node_q(i, values);
            let next = q1.min(q2);
            diff = diff.max((next - *slot).abs());
            *slot = next;
        }
        diff
    }

    /// Policy-evaluation sweep for a fixed node-wise action table.
    fn sweep_policy(&self, actions: &[Action], values: &[f64], out: &mut [f64]) -> f64 {
        let mut diff = 0.0f64;
        for (i, slot) in out.iter_mut().enumerate() {
            let (q1, q2) = self.node_q(i, values);
            let next = match actions[i] {
                Action::P1 => q1,
                Action::P2 => q2,
            };
            diff = diff.max((next - *slot).abs());
            *slot = next;
        }
        diff
    }
}

/// Stopping threshold certifying a true sup-norm error below `tol`, with a
/// floor a little above double-precision roundoff so the loop terminates even
/// when the certified threshold is unreachable in floating point.
pub(crate) fn certified_stop(tol: f64, beta: f64, value_scale: f64) -> f64 {
    let certified = if beta > 0.0 {
        tol * (1.0 - beta) / beta
    } else {
        f64::INFINITY
    };
    certified.max(value_scale.abs() * 4e-14)
}

pub(crate) fn fixed_point(
    stencil: &BackupStencil,
    n: usize,
    tol: f64,
    actions: Option<&[Action]>,
    beta: f64,
    value_scale: f64,
) -> (Vec<f64>, u32) {
    let stop = certified_stop(tol, beta, value_scale);
    let mut current = vec![0.0f64; n];
    let mut next = vec![0.0f64; n];
    let mut iterations = 0u32;
    loop {
        let diff = match actions {
            None => stencil.sweep_optimal(&current, &mut next),
            Some(a) => stencil.sweep_policy(a, &current, &mut next),
        };
        std::mem::swap(&mut current, &mut next);
        iterations += 1;
        if diff <= stop {
            return (current, iterations);
        }
    }
}

/// Solves the optimality equation by value iteration to a certified sup-norm
/// error below `tol`. Returns the converged value function and the number of
/// backups performed.
pub fn solve_value_function(
    params: &ModelParams,
    grid: &BeliefGrid,
    tol: f64,
) -> (ValueFunction, u32) {
    assert!(tol > 0.0, "tolerance must be positive");
    let stencil = BackupStencil::new(grid, params);
    let scale = if params.beta < 1.0 {
        params.c_m / (1.0 - params.beta)
    } else {
        params.c_m
    };
    let (values, iterations) = fixed_point(&stencil, grid.len(), tol, None, params.beta, scale);
    (
        ValueFunction {
            grid: *grid,
            values,
        },
        iterations,
    )
}

/// Greedy policy of a converged value function; ties go to P1.
pub fn extract_policy(v: &ValueFunction, params: &ModelParams) -> PolicyTable {
    let actions = v
        .grid
        .nodes()
        .map(|x| {
            let (q1, q2) = q_values(x, v, params);
            if q1 <= q2 {
                Action::P1
            } else {
                Action::P2
            }
        })
        .collect();
    PolicyTable::new(v.grid, actions)
}

/// Returns the single switching belief if the policy is of threshold type:
/// P1 on a prefix of the grid and P2 on the complementary suffix. A policy
/// that always picks P1 reports threshold 1, always-P2 reports 0. Any other
/// action pattern yields `None`.
pub fn find_threshold(policy: &PolicyTable) -> Option<f64> {
    let first_p2 = policy.actions.iter().position(|a| *a == Action::P2);
    match first_p2 {
        None => Some(1.0),
        Some(k) => {
            if policy.actions[k..].iter().all(|a| *a == Action::P2) {
                Some(policy.grid.node(k))
            } else {
                None
            }
        }
    }
}

/// Worst violations of the structural properties a converged value function
/// must satisfy: nondecreasing in the belief and discretely concave.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeReport {
    /// Largest decrease `V(x_i) - V(x_{i+1})` over consecutive nodes (0 when
    /// monotone).
    pub max_monotonicity_violation: f64,
    /// Largest positive second difference `V(x_{i-1}) - 2 V(x_i) + V(x_{i+1})`
    /// (0 when concave).
    pub max_concavity_violation: f64,
}

impl ShapeReport {
    pub fn within(&self, tol: f64) -> bool {
        self.max_monotonicity_violation <= tol && self.max_concavity_violation <= tol
    }
}

/// Measures how far a value function is from being monotone and concave.
pub fn verify_shape(v: &ValueFunction) -> ShapeReport {
    let vals = &v.values;
    let mut mono = 0.0f64;
    for w in vals.windows(2) {
        mono = mono.max(w[0] - w[1]);
    }
    let mut conc = 0.0f64;
    for w in vals.windows(3) {
        conc = conc.max(w[0] - 2.0 * w[1] + w[2]);
    }
    ShapeReport {
        max_monotonicity_violation: mono,
        max_concavity_violation: conc,
    }
}

/// Renders a solution as CSV with columns `x,V,action,Q1,Q2`.
pub fn solution_csv(v: &ValueFunction, params: &ModelParams) -> String {
    let mut out = String::from("x,V,action,Q1,Q2\n");
    for x in v.grid.nodes() {
        let (q1, q2) = q_values(x, v, params);
        let action = if q1 <= q2 { 1 } else { 2 };
        out.push_str(&format!("{x},{},{action},{q1},{q2}\n", q1.min(q2)));
    }
    out
}
