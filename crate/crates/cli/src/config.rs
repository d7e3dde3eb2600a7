//! Experiment configuration documents (TOML). Unknown keys are rejected and
//! every config is validated before a run starts.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

fn validate_kls_taus(kls: &[String], taus: &[f64]) -> Result<()> {
    for kl in kls {
        if kl != "rkl" && kl != "fkl" {
            bail!("unknown kl direction {kl:?} (expected \"rkl\" or \"fkl\")");
        }
    }
    for &tau in taus {
        if tau < 0.0 || !tau.is_finite() {
            bail!("temperature {tau} invalid: soft variants need tau > 0, tau = 0 selects the hard variant");
        }
    }
    Ok(())
}

pub fn load<T: serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> Result<(T, String)> {
    match path {
        None => Ok((T::default(), String::from("# defaults\n"))),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading config {}", p.display()))?;
            let cfg = toml::from_str(&text)
                .with_context(|| format!("parsing config {}", p.display()))?;
            Ok((cfg, text))
        }
    }
}

/// Loss-surface sweep over the continuous bandit.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct BanditSurfaceConfig {
    pub mu_min: f64,
    pub mu_max: f64,
    pub n_mu: usize,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub n_sigma: usize,
    pub taus: Vec<f64>,
    pub kls: Vec<String>,
    pub quad_nodes: usize,
}

impl Default for BanditSurfaceConfig {
    fn default() -> Self {
        Self {
            mu_min: -2.0,
            mu_max: 2.0,
            n_mu: 101,
            sigma_min: 0.02,
            sigma_max: 2.0,
            n_sigma: 101,
            taus: vec![0.0, 0.01, 0.1, 0.4, 1.0],
            kls: vec!["rkl".into(), "fkl".into()],
            quad_nodes: 1024,
        }
    }
}

impl BanditSurfaceConfig {
    pub fn validate(&self) -> Result<()> {
        validate_kls_taus(&self.kls, &self.taus)?;
        if self.n_mu < 2 || self.n_sigma < 2 {
            bail!("grid needs at least 2 points per axis");
        }
        if self.sigma_min <= 0.0 {
            bail!("sigma_min must be positive");
        }
        if self.quad_nodes < 3 {
            bail!("quad_nodes must be at least 3");
        }
        Ok(())
    }
}

/// How a greedification gradient is estimated in the iterate experiments.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub enum EstimatorChoice {
    Quadrature,
    Sampled { n: usize },
}

/// Iterate study on continuous-action Switch-Stay.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct SwitchStayConfig {
    pub iterates: usize,
    pub steps: usize,
    pub lr: f64,
    pub taus: Vec<f64>,
    pub kls: Vec<String>,
    pub estimator: EstimatorChoice,
    pub quad_nodes: usize,
    pub seed: u64,
}

impl Default for SwitchStayConfig {
    fn default() -> Self {
        Self {
            iterates: 1000,
            steps: 500,
            lr: 0.01,
            taus: vec![0.0, 0.01, 0.1, 0.4, 1.0],
            kls: vec!["rkl".into(), "fkl".into()],
            estimator: EstimatorChoice::Quadrature,
            quad_nodes: 1024,
            seed: 0,
        }
    }
}

impl SwitchStayConfig {
    pub fn validate(&self) -> Result<()> {
        validate_kls_taus(&self.kls, &self.taus)?;
        if self.iterates == 0 || self.steps == 0 {
            bail!("iterates and steps must be positive");
        }
        if let EstimatorChoice::Sampled { n: 0 } = self.estimator {
            bail!("sampled estimator needs at least one action");
        }
        Ok(())
    }
}

/// The verification suite plus the relative-gap experiment.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct TheoryConfig {
    pub pairs: usize,
    pub random_mdps: usize,
    pub instances: usize,
    pub taus: Vec<f64>,
    pub counterexample_taus: Vec<f64>,
    pub counterexample_gamma: f64,
    pub gap_lambdas: Vec<f64>,
    pub gap_taus: Vec<f64>,
    pub gap_seeds: u64,
    pub gap_actions: usize,
    pub implication_samples: usize,
    pub seed: u64,
}

impl Default for TheoryConfig {
    fn default() -> Self {
        Self {
            pairs: 100,
            random_mdps: 20,
            instances: 1000,
            taus: vec![0.01, 0.1, 1.0],
            counterexample_taus: vec![0.0, 0.1, 1.0],
            counterexample_gamma: 0.9,
            gap_lambdas: vec![0.0, 1.0 / 3.0, 2.0 / 3.0, 0.99],
            gap_taus: vec![0.01, 0.0316, 0.1, 0.316, 1.0, 3.16, 10.0, 31.6, 100.0],
            gap_seeds: 30,
            gap_actions: 5,
            implication_samples: 10_000,
            seed: 0,
        }
    }
}

impl TheoryConfig {
    pub fn validate(&self) -> Result<()> {
        for &tau in self.taus.iter().chain(&self.gap_taus) {
            if tau <= 0.0 {
                bail!("theory temperatures must be positive, got {tau}");
            }
        }
        for &tau in &self.counterexample_taus {
            if tau < 0.0 {
                bail!("counterexample temperatures must be nonnegative, got {tau}");
            }
        }
        if !(0.0..1.0).contains(&self.counterexample_gamma) {
            bail!("counterexample gamma must be in (0, 1)");
        }
        Ok(())
    }
}

/// Maze exploration runs.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct MazeConfig {
    pub width: usize,
    pub height: usize,
    /// Seed for the layout generator; the 10x10 default layout ships with
    /// the library and is selected automatically at that size and seed.
    pub layout_seed: u64,
    pub gamma: f64,
    pub iterations: usize,
    pub buffer: usize,
    pub batch: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub taus: Vec<f64>,
    pub kls: Vec<String>,
    pub seeds: u64,
    pub n_checkpoints: usize,
    pub rollouts: usize,
    pub timeout: usize,
    /// Also run the exact-evaluation training study.
    pub true_values: bool,
    pub true_value_lr: f64,
    pub true_value_iters: usize,
}

impl Default for MazeConfig {
    fn default() -> Self {
        Self {
            width: 10,
            height: 10,
            layout_seed: klgreed::mdp::maze::MAZE_10X10_SEED,
            gamma: 0.99,
            iterations: 20_000,
            buffer: 10_000,
            batch: 32,
            actor_lr: 1e-3,
            critic_lr: 1e-3,
            taus: vec![0.0],
            kls: vec!["rkl".into(), "fkl".into()],
            seeds: 30,
            n_checkpoints: 5,
            rollouts: 100,
            timeout: 10_000,
            true_values: false,
            true_value_lr: 0.1,
            true_value_iters: 100,
        }
    }
}

impl MazeConfig {
    pub fn validate(&self) -> Result<()> {
        validate_kls_taus(&self.kls, &self.taus)?;
        if self.width < 2 || self.height < 2 {
            bail!("maze needs at least 2x2 cells");
        }
        if !(0.0..1.0).contains(&self.gamma) {
            bail!("gamma must be in [0, 1)");
        }
        if self.batch == 0 || self.buffer < self.batch {
            bail!("buffer must hold at least one batch");
        }
        if self.seeds == 0 {
            bail!("need at least one seed");
        }
        Ok(())
    }
}
