//! Exact finite-horizon reference solutions, independent of the grid solvers.
//!
//! Two routes are provided and cross-checked against each other:
//!
//! - [`finite_horizon_optimal`] represents the k-stage optimal value function
//!   exactly as the lower envelope of finitely many lines (it is concave and
//!   piecewise linear), and applies the backup in closed form on that
//!   representation. This scales to horizons where cost truncation is
//!   negligible.
//! - [`optimal_tree_value`] enumerates the full action/observation tree
//!   literally. It is exponential in the horizon and only usable for short
//!   horizons, which is exactly what makes it a trustworthy check on the
//!   envelope arithmetic.
//!
//! [`myopic_tree_value`] evaluates the myopic threshold policy exactly over a
//! truncated horizon, collapsing the (absorbing) P2 region to its geometric
//! closed form.

use thiserror::Error;

use crate::model::{
    expected_p1_cost, hazard_probability, step_hazard, step_no_hazard, transition_prior,
    ModelParams,
};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("P2 region is not closed under the no-information transition; the truncated policy tree has no closed form")]
    NotAbsorbing,
    #[error("policy tree exceeded {0} nodes")]
    TreeTooLarge(u64),
    #[error("observations carry no cost information (c_h = c_l); myopic threshold undefined")]
    UninformativeObservations,
}

/// `slope * x + intercept` on the belief interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Line {
    pub slope: f64,
    pub intercept: f64,
}

impl Line {
    fn eval(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }
}

/// A concave piecewise-linear function on `[0, 1]` stored as the minimum of a
/// set of lines. `starts[i]` is the belief where `lines[i]` becomes active;
/// slopes strictly decrease along `lines`.
#[derive(Debug, Clone)]
pub struct Envelope {
    lines: Vec<Line>,
    starts: Vec<f64>,
}

impl Envelope {
    fn constant(value: f64) -> Self {
        Self {
            lines: vec![Line {
                slope: 0.0,
                intercept: value,
            }],
            starts: vec![f64::NEG_INFINITY],
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        // Envelopes stay small; a linear scan over segments is fine.
        let mut idx = 0;
        while idx + 1 < self.lines.len() && self.starts[idx + 1] <= x {
            idx += 1;
        }
        self.lines[idx].eval(x)
    }

    pub fn segments(&self) -> usize {
        self.lines.len()
    }
}

/// Lower envelope of an arbitrary line set, restricted to `[0, 1]`.
fn lower_envelope(mut lines: Vec<Line>) -> Envelope {
    assert!(!lines.is_empty());
    lines.sort_by(|a, b| {
        b.slope
            .partial_cmp(&a.slope)
            .unwrap()
            .then(a.intercept.partial_cmp(&b.intercept).unwrap())
    });

    let mut hull: Vec<Line> = Vec::new();
    let mut starts: Vec<f64> = Vec::new();
    for line in lines {
        let start = loop {
            match hull.last() {
                None => break f64::NEG_INFINITY,
                Some(top) => {
                    let denom = top.slope - line.slope;
                    if denom <= 1e-15 * top.slope.abs().max(1.0) {
                        // Effectively parallel; the earlier line has the lower
                        // intercept, so this one never wins.
                        break f64::INFINITY;
                    }
                    let cut = (line.intercept - top.intercept) / denom;
                    if cut <= *starts.last().unwrap() {
                        hull.pop();
                        starts.pop();
                        continue;
                    }
                    break cut;
                }
            }
        };
        if start < 1.0 {
            hull.push(line);
            starts.push(start);
        }
    }
    // Drop lines whose active interval ends before 0.
    let mut first = 0;
    while first + 1 < hull.len() && starts[first + 1] <= 0.0 {
        first += 1;
    }
    if first > 0 {
        hull.drain(..first);
        starts.drain(..first);
        starts[0] = f64::NEG_INFINITY;
    }
    Envelope {
        lines: hull,
        starts,
    }
}

/// Segment-wise sum of two envelopes (concavity is preserved under addition).
fn sum_envelopes(a: &Envelope, b: &Envelope) -> Vec<Line> {
    let mut out = Vec::with_capacity(a.lines.len() + b.lines.len());
    let mut ia = 0;
    let mut ib = 0;
    loop {
        out.push(Line {
            slope: a.lines[ia].slope + b.lines[ib].slope,
            intercept: a.lines[ia].intercept + b.lines[ib].intercept,
        });
        let next_a = a.starts.get(ia + 1).copied().unwrap_or(f64::INFINITY);
        let next_b = b.starts.get(ib + 1).copied().unwrap_or(f64::INFINITY);
        let next = next_a.min(next_b);
        if next >= 1.0 {
            return out;
        }
        if next_a <= next_b {
            ia += 1;
        }
        if next_b <= next_a {
            ib += 1;
        }
    }
}

/// Exact k-stage optimal value function as a line envelope.
///
/// The three belief maps are Moebius transforms whose denominators are exactly
/// the branch probabilities, so `P(y|x) * V(step_y(x))` is linear in `x` for
/// each line of `V`; the backup therefore maps line envelopes to line
/// envelopes with no discretization at all.
pub fn finite_horizon_optimal(params: &ModelParams, horizon: u32) -> Envelope {
    let p = params;
    let beta = p.beta;
    let lambda = p.q_hh + p.q_ll - 1.0;
    let mu = 1.0 - p.q_ll;

    let mut v = Envelope::constant(0.0);
    for _ in 0..horizon {
        // P(hazard | x) * V(after hazard): linear per line of V.
        let e1 = lower_envelope(
            v.lines
                .iter()
                .map(|l| Line {
                    slope: l.slope * (p.p_h * p.q_hh - p.p_l * (1.0 - p.q_ll))
                        + l.intercept * (p.p_h - p.p_l),
                    intercept: l.slope * p.p_l * (1.0 - p.q_ll) + l.intercept * p.p_l,
                })
                .collect(),
        );
        let e0 = lower_envelope(
            v.lines
                .iter()
                .map(|l| Line {
                    slope: l.slope * ((1.0 - p.p_h) * p.q_hh - (1.0 - p.p_l) * (1.0 - p.q_ll))
                        + l.intercept * ((1.0 - p.p_h) - (1.0 - p.p_l)),
                    intercept: l.slope * (1.0 - p.p_l) * (1.0 - p.q_ll)
                        + l.intercept * (1.0 - p.p_l),
                })
                .collect(),
        );
        let mut candidates: Vec<Line> = sum_envelopes(&e1, &e0)
            .into_iter()
            .map(|l| Line {
                slope: (p.c_h() - p.c_l()) + beta * l.slope,
                intercept: p.c_l() + beta * l.intercept,
            })
            .collect();
        candidates.extend(v.lines.iter().map(|l| Line {
            slope: beta * l.slope * lambda,
            intercept: beta * (l.slope * mu + l.intercept) + p.c_m,
        }));
        v = lower_envelope(candidates);
    }
    v
}

/// Horizon making the truncation bias `beta^T * c_m / (1 - beta)` fall below
/// `bias`.
pub fn horizon_for_truncation(params: &ModelParams, bias: f64) -> u32 {
    assert!(bias > 0.0);
    if params.beta == 0.0 || params.c_m == 0.0 {
        return 1;
    }
    let tail = params.c_m / (1.0 - params.beta);
    let mut t = 0u32;
    let mut factor = 1.0;
    while factor * tail >= bias {
        factor *= params.beta;
        t += 1;
    }
    t.max(1)
}

/// Literal k-stage enumeration of the action/observation tree. Exponential in
/// `horizon`; keep it below ~15.
pub fn optimal_tree_value(x: f64, horizon: u32, params: &ModelParams) -> f64 {
    if horizon == 0 {
        return 0.0;
    }
    let p_haz = hazard_probability(x, params);
    let mut q1 = expected_p1_cost(x, params);
    if p_haz > 0.0 {
        q1 += params.beta * p_haz * optimal_tree_value(step_hazard(x, params), horizon - 1, params);
    }
    if p_haz < 1.0 {
        q1 += params.beta
            * (1.0 - p_haz)
            * optimal_tree_value(step_no_hazard(x, params), horizon - 1, params);
    }
    let q2 = params.c_m
        + params.beta * optimal_tree_value(transition_prior(x, params), horizon - 1, params);
    q1.min(q2)
}

const TREE_NODE_CAP: u64 = 50_000_000;

/// Exact truncated-horizon cost of the myopic threshold policy from belief
/// `x`.
///
/// Requires the P2 region `(x_hat, 1]` to be closed under the no-information
/// transition, which collapses every P2 subtree to the geometric sum
/// `c_m (1 - beta^h) / (1 - beta)`; the remaining P1 nodes are enumerated
/// exactly.
pub fn myopic_tree_value(x: f64, horizon: u32, params: &ModelParams) -> Result<f64, OracleError> {
    let span = params.c_h() - params.c_l();
    if span <= 0.0 {
        return Err(OracleError::UninformativeObservations);
    }
    let x_hat = ((params.c_m - params.c_l()) / span).clamp(0.0, 1.0);
    let lambda = params.q_hh + params.q_ll - 1.0;
    if x_hat < 1.0 && (lambda <= 0.0 || transition_prior(x_hat, params) < x_hat) {
        return Err(OracleError::NotAbsorbing);
    }
    let mut nodes = 0u64;
    myopic_tree_rec(x, horizon, params, x_hat, &mut nodes)
}

fn geometric_cost(c_m: f64, beta: f64, horizon: u32) -> f64 {
    if beta == 0.0 {
        if horizon >= 1 {
            c_m
        } else {
            0.0
        }
    } else {
        c_m * (1.0 - beta.powi(horizon as i32)) / (1.0 - beta)
    }
}

fn myopic_tree_rec(
    x: f64,
    horizon: u32,
    params: &ModelParams,
    x_hat: f64,
    nodes: &mut u64,
) -> Result<f64, OracleError> {
    if horizon == 0 {
        return Ok(0.0);
    }
    *nodes += 1;
    if *nodes > TREE_NODE_CAP {
        return Err(OracleError::TreeTooLarge(TREE_NODE_CAP));
    }
    if x > x_hat {
        return Ok(geometric_cost(params.c_m, params.beta, horizon));
    }
    let p_haz = hazard_probability(x, params);
    let mut value = expected_p1_cost(x, params);
    if p_haz > 0.0 {
        value += params.beta
            * p_haz
            * myopic_tree_rec(step_hazard(x, params), horizon - 1, params, x_hat, nodes)?;
    }
    if p_haz < 1.0 {
        value += params.beta
            * (1.0 - p_haz)
            * myopic_tree_rec(step_no_hazard(x, params), horizon - 1, params, x_hat, nodes)?;
    }
    Ok(value)
}
