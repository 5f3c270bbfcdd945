//! Experiment configuration: a TOML file with optional blocks for the model,
//! the solver, the simulator, and scans. Unknown keys are rejected so typos
//! fail loudly, and every parameter is validated before any run starts.

use anyhow::{bail, Context, Result};
use pathrec_core::model::ModelParams;
use serde::Deserialize;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub model: ModelBlock,
    #[serde(default)]
    pub solver: SolverBlock,
    #[serde(default)]
    pub sim: SimBlock,
    #[serde(default)]
    pub scan: ScanBlock,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    pub p_h: f64,
    pub p_l: f64,
    pub q_hh: f64,
    pub q_ll: f64,
    pub c: f64,
    pub c_m: f64,
    pub beta: f64,
}

impl Default for ModelBlock {
    // Reference two-path instance used throughout the experiments.
    fn default() -> Self {
        Self {
            p_h: 0.9,
            p_l: 0.1,
            q_hh: 0.9,
            q_ll: 0.9,
            c: 1.0,
            c_m: 0.5,
            beta: 0.9,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverBlock {
    pub grid_n: usize,
    pub tol: f64,
}

impl Default for SolverBlock {
    fn default() -> Self {
        Self {
            grid_n: 1001,
            tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimBlock {
    pub seed: u64,
    pub runs: u32,
    /// Episode horizon; when absent it is derived from the discount factor so
    /// the truncated tail is below 1e-4 of the total.
    pub horizon: Option<u32>,
    pub burn_in: u32,
    pub samples: u64,
}

impl Default for SimBlock {
    fn default() -> Self {
        Self {
            seed: 42,
            runs: 4000,
            horizon: None,
            burn_in: 10_000,
            samples: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanBlock {
    pub k_min: u32,
    pub k_max: u32,
}

impl Default for ScanBlock {
    fn default() -> Self {
        Self { k_min: 1, k_max: 6 }
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config file {}", path.display()))?;
        let config: ExperimentConfig = toml::from_str(&text)
            .with_context(|| format!("parsing config file {}", path.display()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.params()?;
        if self.solver.grid_n < 2 {
            bail!(
                "solver.grid_n must be at least 2 (got {})",
                self.solver.grid_n
            );
        }
        if self.solver.tol.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
            bail!("solver.tol must be positive (got {})", self.solver.tol);
        }
        if self.sim.runs < 2 {
            bail!("sim.runs must be at least 2 (got {})", self.sim.runs);
        }
        if self.scan.k_min == 0 || self.scan.k_min > self.scan.k_max {
            bail!(
                "scan window lengths must satisfy 1 <= k_min <= k_max (got {}..{})",
                self.scan.k_min,
                self.scan.k_max
            );
        }
        Ok(())
    }

    pub fn params(&self) -> Result<ModelParams> {
        let m = &self.model;
        ModelParams::new(m.p_h, m.p_l, m.q_hh, m.q_ll, m.c, m.c_m, m.beta)
            .context("invalid [model] block")
    }

    /// Replaces the model block with parameters from a flat `key=value` file.
    pub fn load_model_kv(&mut self, path: &std::path::Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading model file {}", path.display()))?;
        let p = ModelParams::from_key_value(&text)
            .with_context(|| format!("parsing model file {}", path.display()))?;
        self.model = ModelBlock {
            p_h: p.p_h,
            p_l: p.p_l,
            q_hh: p.q_hh,
            q_ll: p.q_ll,
            c: p.c,
            c_m: p.c_m,
            beta: p.beta,
        };
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let config = ExperimentConfig::default();
        config.validate().unwrap();
        let p = config.params().unwrap();
        assert_eq!(p.beta, 0.9);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = toml::from_str::<ExperimentConfig>("[model]\np_h = 0.9\nwhatever = 1\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("whatever"), "{err}");
    }

    #[test]
    fn invalid_discount_names_the_field() {
        let text = "[model]\np_h = 0.9\np_l = 0.1\nq_hh = 0.9\nq_ll = 0.9\nc = 1.0\nc_m = 0.5\nbeta = 1.0\n";
        let config: ExperimentConfig = toml::from_str(text).unwrap();
        let err = config.validate().unwrap_err();
        assert!(format!("{err:#}").contains("beta"), "{err:#}");
    }
}
