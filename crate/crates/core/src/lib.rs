//! Solvers, baselines, incentive audits, and learners for a platform routing
//! one traveler per epoch between a deterministic path and stochastic paths
//! whose hidden cost states follow two-state Markov chains.
//!
//! The crate is organized around the belief state — the probability that a
//! stochastic path is currently in its high-cost state:
//!
//! - [`model`]: world parameters, Bayesian belief updates, sampling.
//! - [`grid`]: discretization of the belief interval and tabulated functions.
//! - [`solver`]: value iteration for the optimal routing policy.
//! - [`baselines`]: myopic platforms and price-of-anarchy machinery.
//! - [`irm`]: stationary-belief audits of recommendation incentives when the
//!   observation history is hidden from travelers.
//! - [`qlearn`]: tabular Q-learning over windows of recent observations.
//! - [`multipath`]: the three-path extension on a two-dimensional belief grid.
//! - [`sim`]: seeded Monte Carlo simulation and cost estimation.
//! - [`oracle`]: exact finite-horizon references used for cross-checking.
//! - [`verify`]: the end-to-end verification suite behind `pathrec verify`.

pub mod baselines;
pub mod grid;
pub mod irm;
pub mod model;
pub mod multipath;
pub mod oracle;
pub mod qlearn;
pub mod sim;
pub mod solver;
pub mod verify;

pub use baselines::{myopic_threshold, policy_myopic, policy_no_info, value_myopic, value_no_info};
pub use grid::{BeliefGrid, PolicyTable, ValueFunction};
pub use irm::{ic_audit, stationary_belief_distribution, ICReport, SimConfig};
pub use model::{Action, Belief, ModelError, ModelParams, Observation, PathState};
pub use multipath::{policy_map_3, solve_3path, Action3, Belief2, ValueFunction2D};
pub use qlearn::{
    asymptotic_q, ic_check, qlearning_online, ObservationWindow, QTable, WindowPolicy,
};
pub use sim::{estimate_discounted_cost, run_episode, RecommendationPolicy, Trajectory};
pub use solver::{extract_policy, find_threshold, solve_value_function, verify_shape, ShapeReport};
