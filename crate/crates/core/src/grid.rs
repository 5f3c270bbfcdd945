//! Uniform discretization of the belief interval `[0, 1]` and the
//! piecewise-linear value functions and policy tables living on it.

use serde::{Deserialize, Serialize};

use crate::model::Action;

/// Uniform grid of `n >= 2` nodes `x_i = i / (n - 1)` spanning exactly `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BeliefGrid {
    n: usize,
}

impl BeliefGrid {
    /// Default node count; fine enough that linear interpolation error is
    /// negligible next to the solver tolerances used in this crate.
    pub const DEFAULT_N: usize = 1001;

    pub fn new(n: usize) -> Self {
        assert!(n >= 2, "belief grid needs at least two nodes");
        Self { n }
    }

    pub fn default_grid() -> Self {
        Self::new(Self::DEFAULT_N)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        1.0 / (self.n - 1) as f64
    }

    /// Coordinate of node `i`. Endpoints are exactly 0 and 1.
    pub fn node(&self, i: usize) -> f64 {
        debug_assert!(i < self.n);
        if i == self.n - 1 {
            1.0
        } else {
            i as f64 / (self.n - 1) as f64
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(move |i| self.node(i))
    }

    /// Locates `x` for linear interpolation: returns the left node index and
    /// the fractional offset into that cell. `x` is clamped to `[0, 1]`.
    pub fn locate(&self, x: f64) -> (usize, f64) {
        let x = x.clamp(0.0, 1.0);
        let scaled = x * (self.n - 1) as f64;
        let idx = (scaled.floor() as usize).min(self.n - 2);
        (idx, scaled - idx as f64)
    }

    /// Index of the node nearest to `x`.
    pub fn nearest(&self, x: f64) -> usize {
        let x = x.clamp(0.0, 1.0);
        (x * (self.n - 1) as f64).round() as usize
    }
}

/// A value function sampled at grid nodes, evaluated off-node by linear
/// interpolation.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction {
    pub grid: BeliefGrid,
    pub values: Vec<f64>,
}

impl ValueFunction {
    pub fn zero(grid: BeliefGrid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn from_fn(grid: BeliefGrid, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid,
            values: grid.nodes().map(f).collect(),
        }
    }

    /// Linear interpolation between the neighboring nodes of `x`.
    pub fn eval(&self, x: f64) -> f64 {
        let (i, frac) = self.grid.locate(x);
        self.values[i] + frac * (self.values[i + 1] - self.values[i])
    }

    /// Sup-norm distance to another value function on the same grid.
    pub fn sup_distance(&self, other: &Self) -> f64 {
        assert_eq!(self.grid, other.grid, "grids must match");
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_value(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Action chosen at every grid node, together with the derived partition into
/// the P1 set and the P2 set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyTable {
    pub grid: BeliefGrid,
    pub actions: Vec<Action>,
}

impl PolicyTable {
    pub fn new(grid: BeliefGrid, actions: Vec<Action>) -> Self {
        assert_eq!(actions.len(), grid.len());
        Self { grid, actions }
    }

    /// Action at the node nearest to `x`.
    pub fn action_at(&self, x: f64) -> Action {
        self.actions[self.grid.nearest(x)]
    }

    /// Node coordinates where the policy picks P1.
    pub fn p1_nodes(&self) -> impl Iterator<Item = f64> + '_ {
        self.actions
            .iter()
            .enumerate()
            .filter(|(_, a)| **a == Action::P1)
            .map(move |(i, _)| self.grid.node(i))
    }
}
