//! The two-path world: a deterministic path with known cost and a stochastic
//! path whose hidden cost state alternates between high and low according to a
//! two-state Markov chain.
//!
//! Travelers on the stochastic path observe whether a hazard occurred and
//! report it; the platform folds reports into a single belief `x`, the
//! probability that the stochastic path is currently in its high-cost state.
//! Everything downstream (solvers, baselines, audits, learners) is built on
//! the primitives here: Bayesian posterior updates, the chain transition
//! applied to a belief, and expected one-epoch costs.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Probability that the stochastic path is in its high-cost state just before
/// the current epoch.
pub type Belief = f64;

/// Errors from parameter validation and inconsistent inputs.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("probability `{name}` out of range [0, 1]: {value}")]
    ProbabilityOutOfRange { name: &'static str, value: f64 },

    #[error("hazard probabilities inverted: p_l = {p_l} > p_h = {p_h}")]
    InvertedHazardProbabilities { p_l: f64, p_h: f64 },

    #[error("cost `{name}` must be finite and nonnegative: {value}")]
    InvalidCost { name: &'static str, value: f64 },

    #[error("deterministic path cost c_m = {c_m} must lie in [0, c = {c}]")]
    DeterministicCostTooHigh { c_m: f64, c: f64 },

    #[error("discount factor beta = {0} must lie in [0, 1)")]
    InvalidDiscount(f64),

    #[error("both states absorbing (q_hh = q_ll = 1); stationary split undefined")]
    DegenerateChain,

    #[error("symmetric constructor requires {0}")]
    AsymmetricInput(&'static str),

    #[error("action {action:?} cannot produce observation {observation:?}")]
    InconsistentObservation {
        action: Action,
        observation: Observation,
    },

    #[error("missing key `{0}` in parameter file")]
    MissingKey(String),

    #[error("unknown key `{0}` in parameter file")]
    UnknownKey(String),

    #[error("malformed line `{0}` in parameter file (expected key=value)")]
    MalformedLine(String),
}

/// Hidden cost state of the stochastic path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PathState {
    /// High expected cost: hazards occur with probability `p_h`.
    High,
    /// Low expected cost: hazards occur with probability `p_l`.
    Low,
}

/// What a traveler reports after one epoch.
///
/// Traveling the deterministic path reveals nothing about the stochastic
/// path, which is recorded as [`Observation::NoInfo`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Observation {
    /// No hazard encountered on the stochastic path (cost 0).
    NoHazard,
    /// Hazard encountered on the stochastic path (cost `c`).
    Hazard,
    /// Traveler took the deterministic path; nothing learned.
    NoInfo,
}

/// Path choice for one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    /// The stochastic path.
    P1,
    /// The deterministic path with fixed cost `c_m`.
    P2,
}

/// Full parameterization of the two-path world.
///
/// Field names match the keys of the flat `key=value` parameter file format
/// (see [`ModelParams::to_key_value`]).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Hazard probability in the high-cost state.
    pub p_h: f64,
    /// Hazard probability in the low-cost state (`p_l <= p_h`).
    pub p_l: f64,
    /// Per-epoch probability of staying high, `P(High -> High)`.
    pub q_hh: f64,
    /// Per-epoch probability of staying low, `P(Low -> Low)`.
    pub q_ll: f64,
    /// Cost of a hazard on the stochastic path.
    pub c: f64,
    /// Deterministic path cost, `0 <= c_m <= c`.
    pub c_m: f64,
    /// Discount factor in `[0, 1)`.
    pub beta: f64,
}

fn check_probability(name: &'static str, value: f64) -> Result<(), ModelError> {
    if !(0.0..=1.0).contains(&value) || value.is_nan() {
        return Err(ModelError::ProbabilityOutOfRange { name, value });
    }
    Ok(())
}

impl ModelParams {
    /// Validates and builds a general (possibly asymmetric) parameter set.
    ///
    /// Construction is the single validation point: all other operations
    /// assume a `ModelParams` they receive is internally consistent.
    /// `p_l = p_h` is allowed (observations then carry no cost information);
    /// operations that require informative observations reject it themselves.
    pub fn new(
        p_h: f64,
        p_l: f64,
        q_hh: f64,
        q_ll: f64,
        c: f64,
        c_m: f64,
        beta: f64,
    ) -> Result<Self, ModelError> {
        check_probability("p_h", p_h)?;
        check_probability("p_l", p_l)?;
        check_probability("q_hh", q_hh)?;
        check_probability("q_ll", q_ll)?;
        if p_l > p_h {
            return Err(ModelError::InvertedHazardProbabilities { p_l, p_h });
        }
        if !c.is_finite() || c < 0.0 {
            return Err(ModelError::InvalidCost {
                name: "c",
                value: c,
            });
        }
        if !c_m.is_finite() || c_m < 0.0 {
            return Err(ModelError::InvalidCost {
                name: "c_m",
                value: c_m,
            });
        }
        if c_m > c {
            return Err(ModelError::DeterministicCostTooHigh { c_m, c });
        }
        if !(0.0..1.0).contains(&beta) || beta.is_nan() {
            return Err(ModelError::InvalidDiscount(beta));
        }
        if q_hh >= 1.0 && q_ll >= 1.0 {
            return Err(ModelError::DegenerateChain);
        }
        Ok(Self {
            p_h,
            p_l,
            q_hh,
            q_ll,
            c,
            c_m,
            beta,
        })
    }

    /// Symmetric convenience constructor: `q_hh = q_ll = q` with
    /// `q in [1/2, 1)`, and complementary hazard probabilities `p_h = p`,
    /// `p_l = 1 - p` with `p in [1/2, 1]`.
    pub fn symmetric(p: f64, q: f64, c: f64, c_m: f64, beta: f64) -> Result<Self, ModelError> {
        check_probability("p", p)?;
        check_probability("q", q)?;
        if p < 0.5 {
            return Err(ModelError::AsymmetricInput("p in [1/2, 1]"));
        }
        if !(0.5..1.0).contains(&q) {
            return Err(ModelError::AsymmetricInput("q in [1/2, 1)"));
        }
        Self::new(p, 1.0 - p, q, q, c, c_m, beta)
    }

    /// Expected per-epoch cost in the high state, `c_h = p_h * c`.
    pub fn c_h(&self) -> f64 {
        self.p_h * self.c
    }

    /// Expected per-epoch cost in the low state, `c_l = p_l * c`.
    pub fn c_l(&self) -> f64 {
        self.p_l * self.c
    }

    /// Stationary probability that the chain is in the high state.
    pub fn stationary_high(&self) -> f64 {
        let leave_h = 1.0 - self.q_hh;
        let leave_l = 1.0 - self.q_ll;
        // q_hh = q_ll = 1 is rejected at construction, so the split is defined.
        leave_l / (leave_h + leave_l)
    }

    /// True when the parameters satisfy the symmetric restriction.
    pub fn is_symmetric(&self) -> bool {
        self.q_hh == self.q_ll && (self.p_h + self.p_l - 1.0).abs() < 1e-12
    }

    /// Serializes as a flat `key=value` file body (one key per line).
    pub fn to_key_value(&self) -> String {
        format!(
            "p_h={}\np_l={}\nq_hh={}\nq_ll={}\nc={}\nc_m={}\nbeta={}\n",
            self.p_h, self.p_l, self.q_hh, self.q_ll, self.c, self.c_m, self.beta
        )
    }

    /// Parses the flat `key=value` format produced by [`Self::to_key_value`].
    ///
    /// Blank lines and `#` comments are ignored; unknown or missing keys are
    /// rejected. The parsed parameters go through full validation.
    pub fn from_key_value(text: &str) -> Result<Self, ModelError> {
        let mut fields: [Option<f64>; 7] = [None; 7];
        const KEYS: [&str; 7] = ["p_h", "p_l", "q_hh", "q_ll", "c", "c_m", "beta"];
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ModelError::MalformedLine(line.to_string()))?;
            let key = key.trim();
            let idx = KEYS
                .iter()
                .position(|k| *k == key)
                .ok_or_else(|| ModelError::UnknownKey(key.to_string()))?;
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|_| ModelError::MalformedLine(line.to_string()))?;
            fields[idx] = Some(value);
        }
        let get = |i: usize| fields[i].ok_or_else(|| ModelError::MissingKey(KEYS[i].to_string()));
        Self::new(
            get(0)?,
            get(1)?,
            get(2)?,
            get(3)?,
            get(4)?,
            get(5)?,
            get(6)?,
        )
    }
}

/// Bayesian posterior after one observation, before the chain transitions.
///
/// A zero denominator can only occur with degenerate hazard probabilities and
/// a boundary prior (an observation the prior deems impossible); the rule is
/// to return the boundary belief consistent with the observation, matching the
/// limit of the posterior as the prior approaches the boundary.
pub fn posterior_update(x: Belief, y: Observation, params: &ModelParams) -> Belief {
    match y {
        Observation::NoInfo => x,
        Observation::Hazard => {
            let num = x * params.p_h;
            let den = num + (1.0 - x) * params.p_l;
            if den == 0.0 {
                1.0
            } else {
                num / den
            }
        }
        Observation::NoHazard => {
            let num = x * (1.0 - params.p_h);
            let den = num + (1.0 - x) * (1.0 - params.p_l);
            if den == 0.0 {
                0.0
            } else {
                num / den
            }
        }
    }
}

/// Pushes a posterior through one chain transition: the probability that the
/// path is high at the start of the next epoch.
pub fn transition_prior(x_post: Belief, params: &ModelParams) -> Belief {
    x_post * params.q_hh + (1.0 - x_post) * (1.0 - params.q_ll)
}

/// One full belief step around an epoch: posterior update on the observation,
/// then the chain transition. Rejects action/observation pairs that cannot
/// co-occur (`P2` reveals nothing; `P1` always reveals hazard or no-hazard).
pub fn belief_step(
    x: Belief,
    a: Action,
    y: Observation,
    params: &ModelParams,
) -> Result<Belief, ModelError> {
    let consistent = match a {
        Action::P2 => y == Observation::NoInfo,
        Action::P1 => y != Observation::NoInfo,
    };
    if !consistent {
        return Err(ModelError::InconsistentObservation {
            action: a,
            observation: y,
        });
    }
    Ok(transition_prior(posterior_update(x, y, params), params))
}

/// Expected one-epoch cost of traveling the stochastic path at belief `x`:
/// `x*c_h + (1-x)*c_l`.
pub fn expected_p1_cost(x: Belief, params: &ModelParams) -> f64 {
    x * params.c_h() + (1.0 - x) * params.c_l()
}

/// Probability of observing a hazard at belief `x` when traveling P1.
pub fn hazard_probability(x: Belief, params: &ModelParams) -> f64 {
    x * params.p_h + (1.0 - x) * params.p_l
}

/// Samples the next hidden state of the chain.
pub fn sample_state_transition<R: Rng + ?Sized>(
    s: PathState,
    params: &ModelParams,
    rng: &mut R,
) -> PathState {
    let stay = match s {
        PathState::High => params.q_hh,
        PathState::Low => params.q_ll,
    };
    let u: f64 = rng.random();
    if u < stay {
        s
    } else {
        match s {
            PathState::High => PathState::Low,
            PathState::Low => PathState::High,
        }
    }
}

/// Samples the traveler's observation for the chosen action in hidden state
/// `s`. `P2` always yields [`Observation::NoInfo`].
pub fn sample_observation<R: Rng + ?Sized>(
    s: PathState,
    a: Action,
    params: &ModelParams,
    rng: &mut R,
) -> Observation {
    match a {
        Action::P2 => {
            // Consume a draw regardless of action so that two policies sharing
            // a seed stay aligned epoch by epoch while their actions agree.
            let _: f64 = rng.random();
            Observation::NoInfo
        }
        Action::P1 => {
            let p = match s {
                PathState::High => params.p_h,
                PathState::Low => params.p_l,
            };
            let u: f64 = rng.random();
            if u < p {
                Observation::Hazard
            } else {
                Observation::NoHazard
            }
        }
    }
}

// Belief propagation maps used throughout the solvers: the composed
// "posterior then transition" map for each observation, and the pure
// transition map for no-information epochs.
pub(crate) fn step_hazard(x: Belief, p: &ModelParams) -> Belief {
    transition_prior(posterior_update(x, Observation::Hazard, p), p)
}

pub(crate) fn step_no_hazard(x: Belief, p: &ModelParams) -> Belief {
    transition_prior(posterior_update(x, Observation::NoHazard, p), p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fig_params() -> ModelParams {
        ModelParams::symmetric(0.9, 0.9, 1.0, 0.5, 0.9).unwrap()
    }

    #[test]
    fn construction_rejects_bad_inputs() {
        assert!(matches!(
            ModelParams::new(1.2, 0.1, 0.9, 0.9, 1.0, 0.5, 0.9),
            Err(ModelError::ProbabilityOutOfRange { name: "p_h", .. })
        ));
        assert!(matches!(
            ModelParams::new(0.1, 0.9, 0.9, 0.9, 1.0, 0.5, 0.9),
            Err(ModelError::InvertedHazardProbabilities { .. })
        ));
        assert!(matches!(
            ModelParams::new(0.9, 0.1, 0.9, 0.9, 1.0, 1.5, 0.9),
            Err(ModelError::DeterministicCostTooHigh { .. })
        ));
        assert!(matches!(
            ModelParams::new(0.9, 0.1, 0.9, 0.9, 1.0, 0.5, 1.0),
            Err(ModelError::InvalidDiscount(_))
        ));
        assert!(matches!(
            ModelParams::new(0.9, 0.1, 1.0, 1.0, 1.0, 0.5, 0.9),
            Err(ModelError::DegenerateChain)
        ));
        // Uninformative observations are representable; only inverted ones are not.
        assert!(ModelParams::new(0.5, 0.5, 0.9, 0.9, 1.0, 0.5, 0.9).is_ok());
    }

    #[test]
    fn symmetric_constructor_enforces_restriction() {
        assert!(ModelParams::symmetric(0.4, 0.9, 1.0, 0.5, 0.9).is_err());
        assert!(ModelParams::symmetric(0.9, 0.4, 1.0, 0.5, 0.9).is_err());
        assert!(ModelParams::symmetric(0.9, 1.0, 1.0, 0.5, 0.9).is_err());
        let p = ModelParams::symmetric(0.9, 0.9, 1.0, 0.5, 0.9).unwrap();
        assert!(p.is_symmetric());
        assert_eq!(p.p_l, 1.0 - p.p_h);
        assert!((p.stationary_high() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn posterior_no_info_is_identity() {
        let p = fig_params();
        assert_eq!(posterior_update(0.7, Observation::NoInfo, &p), 0.7);
    }

    #[test]
    fn posterior_hazard_from_half() {
        let p = fig_params();
        // 0.45 / (0.45 + 0.05) = 0.9
        let post = posterior_update(0.5, Observation::Hazard, &p);
        assert!((post - 0.9).abs() < 1e-12);
    }

    #[test]
    fn posterior_boundary_prior_is_absorbing() {
        let p = fig_params();
        assert_eq!(posterior_update(1.0, Observation::NoHazard, &p), 1.0);
        assert_eq!(posterior_update(0.0, Observation::Hazard, &p), 0.0);
    }

    #[test]
    fn posterior_degenerate_denominator_uses_observation_boundary() {
        // p_h = 1 makes "no hazard" impossible from a sure-high prior.
        let p = ModelParams::new(1.0, 0.0, 0.9, 0.9, 1.0, 0.5, 0.9).unwrap();
        assert_eq!(posterior_update(1.0, Observation::NoHazard, &p), 0.0);
        assert_eq!(posterior_update(0.0, Observation::Hazard, &p), 1.0);
    }

    #[test]
    fn transition_prior_examples() {
        let half = ModelParams::symmetric(0.9, 0.5, 1.0, 0.5, 0.9).unwrap();
        assert!((transition_prior(0.3, &half) - 0.5).abs() < 1e-15);
        let p = fig_params();
        assert!((transition_prior(1.0, &p) - 0.9).abs() < 1e-15);
        assert!((transition_prior(0.5, &p) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn belief_step_examples() {
        let p = fig_params();
        let x = belief_step(0.5, Action::P2, Observation::NoInfo, &p).unwrap();
        assert!((x - 0.5).abs() < 1e-15);
        let x = belief_step(0.5, Action::P1, Observation::Hazard, &p).unwrap();
        assert!((x - 0.82).abs() < 1e-12);
        let x = belief_step(0.0, Action::P1, Observation::NoHazard, &p).unwrap();
        assert!((x - 0.1).abs() < 1e-12);
    }

    #[test]
    fn belief_step_rejects_inconsistent_pairs() {
        let p = fig_params();
        assert!(belief_step(0.5, Action::P2, Observation::Hazard, &p).is_err());
        assert!(belief_step(0.5, Action::P1, Observation::NoInfo, &p).is_err());
    }

    #[test]
    fn expected_p1_cost_examples() {
        let p = fig_params();
        assert!((expected_p1_cost(0.5, &p) - 0.5).abs() < 1e-15);
        assert!((expected_p1_cost(1.0, &p) - 0.9).abs() < 1e-15);
        assert!((expected_p1_cost(0.25, &p) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn state_transition_degenerate_probabilities() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let stay = ModelParams::new(0.9, 0.1, 1.0, 0.5, 1.0, 0.5, 0.9).unwrap();
        for _ in 0..100 {
            assert_eq!(
                sample_state_transition(PathState::High, &stay, &mut rng),
                PathState::High
            );
        }
        let flip = ModelParams::new(0.9, 0.1, 0.5, 0.0, 1.0, 0.5, 0.9).unwrap();
        for _ in 0..100 {
            assert_eq!(
                sample_state_transition(PathState::Low, &flip, &mut rng),
                PathState::High
            );
        }
    }

    #[test]
    fn state_transition_frequency_matches_q_hh() {
        let p = fig_params();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100_000u32;
        let mut stayed = 0u32;
        for _ in 0..n {
            if sample_state_transition(PathState::High, &p, &mut rng) == PathState::High {
                stayed += 1;
            }
        }
        let freq = f64::from(stayed) / f64::from(n);
        let sigma = (p.q_hh * (1.0 - p.q_hh) / f64::from(n)).sqrt();
        assert!(
            (freq - p.q_hh).abs() < 3.0 * sigma,
            "stay frequency {freq} vs q_hh {}",
            p.q_hh
        );
    }

    #[test]
    fn observation_sampling() {
        let p = fig_params();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        assert_eq!(
            sample_observation(PathState::High, Action::P2, &p, &mut rng),
            Observation::NoInfo
        );
        let sure = ModelParams::new(1.0, 0.0, 0.9, 0.9, 1.0, 0.5, 0.9).unwrap();
        assert_eq!(
            sample_observation(PathState::High, Action::P1, &sure, &mut rng),
            Observation::Hazard
        );

        let n = 100_000u32;
        let mut hazards = 0u32;
        for _ in 0..n {
            if sample_observation(PathState::Low, Action::P1, &p, &mut rng) == Observation::Hazard {
                hazards += 1;
            }
        }
        let freq = f64::from(hazards) / f64::from(n);
        let sigma = (p.p_l * (1.0 - p.p_l) / f64::from(n)).sqrt();
        assert!((freq - p.p_l).abs() < 3.0 * sigma);
    }

    #[test]
    fn key_value_round_trip() {
        let p = ModelParams::new(0.85, 0.2, 0.95, 0.8, 2.0, 0.7, 0.6).unwrap();
        let text = p.to_key_value();
        let back = ModelParams::from_key_value(&text).unwrap();
        assert_eq!(p, back);
    }

    #[test]
    fn key_value_rejects_unknown_and_missing_keys() {
        let p = fig_params();
        let mut text = p.to_key_value();
        text.push_str("extra=1\n");
        assert!(matches!(
            ModelParams::from_key_value(&text),
            Err(ModelError::UnknownKey(_))
        ));
        assert!(matches!(
            ModelParams::from_key_value("p_h=0.9\n"),
            Err(ModelError::MissingKey(_))
        ));
    }

    proptest! {
        #[test]
        fn posterior_is_monotone_in_prior(
            x1 in 0.0f64..=1.0,
            x2 in 0.0f64..=1.0,
            p in 0.5f64..=0.99,
            q in 0.5f64..0.999,
        ) {
            let params = ModelParams::symmetric(p, q, 1.0, 0.5, 0.9).unwrap();
            let (lo, hi) = if x1 <= x2 { (x1, x2) } else { (x2, x1) };
            for y in [Observation::NoHazard, Observation::Hazard, Observation::NoInfo] {
                prop_assert!(
                    posterior_update(lo, y, &params) <= posterior_update(hi, y, &params) + 1e-12
                );
            }
        }

        #[test]
        fn belief_step_lands_in_transition_range(
            x in 0.0f64..=1.0,
            p in 0.5f64..=1.0,
            q_hh in 0.6f64..0.999,
            q_ll in 0.6f64..0.999,
        ) {
            // With q_hh + q_ll > 1 one step lands in [1 - q_ll, q_hh].
            let params = ModelParams::new(p, 1.0 - p, q_hh, q_ll, 1.0, 0.5, 0.9).unwrap();
            for (a, y) in [
                (Action::P1, Observation::Hazard),
                (Action::P1, Observation::NoHazard),
                (Action::P2, Observation::NoInfo),
            ] {
                let next = belief_step(x, a, y, &params).unwrap();
                prop_assert!(next >= 1.0 - q_ll - 1e-12 && next <= q_hh + 1e-12);
            }
        }

        #[test]
        fn no_info_step_equals_transition_alone(x in 0.0f64..=1.0) {
            let params = ModelParams::symmetric(0.9, 0.9, 1.0, 0.5, 0.9).unwrap();
            let stepped = belief_step(x, Action::P2, Observation::NoInfo, &params).unwrap();
            prop_assert_eq!(stepped, transition_prior(x, &params));
        }
    }
}
