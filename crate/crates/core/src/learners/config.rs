use serde::{Deserialize, Serialize};

use super::critic::MaxProxy;
use crate::error::{Error, Result};
use crate::potential::{ResidualConfig, RewardFitConfig};

/// Where the dual-game reward comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardSource {
    /// Reward derivatives from the game when it provides them, else fitted models.
    Auto,
    Analytic,
    Models,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub batch: usize,
    pub buffer: usize,
    pub gamma: f64,
    /// Global gradient-norm clip for actor and critic updates.
    pub grad_clip: Option<f64>,
    /// Environment steps.
    pub steps: usize,
    /// Environment steps per update iteration.
    pub steps_per_update: usize,
    /// Updates begin once the buffer holds this many samples.
    pub warmup: usize,
    /// Refresh the estimated potential every `refresh_k` iterations.
    pub refresh_k: usize,
    /// Descent iterations per potential refresh (warm-started).
    pub refresh_iterations: usize,
    pub tau: f64,
    pub sigma_start: f64,
    pub sigma_end: f64,
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub max_proxy: MaxProxy,
    pub use_analytic_potential: bool,
    pub reward_source: RewardSource,
    /// Re-evaluate other agents' actions from current actors in the DPG step.
    pub reevaluate_others: bool,
    pub residual: ResidualConfig,
    pub reward_fit: RewardFitConfig,
    /// Steps between trace points.
    pub eval_interval: usize,
    pub eval_episodes: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr_actor: 1e-4,
            lr_critic: 1e-3,
            batch: 256,
            buffer: 4096,
            gamma: 0.99,
            grad_clip: Some(1.0),
            steps: 20_000,
            steps_per_update: 1,
            warmup: 256,
            refresh_k: 10,
            refresh_iterations: 20,
            tau: 0.01,
            sigma_start: 0.1,
            sigma_end: 0.01,
            actor_hidden: vec![64, 64, 64],
            critic_hidden: vec![64, 64, 64],
            max_proxy: MaxProxy::Actors,
            use_analytic_potential: false,
            reward_source: RewardSource::Auto,
            reevaluate_others: false,
            residual: ResidualConfig::default(),
            reward_fit: RewardFitConfig::default(),
            eval_interval: 1000,
            eval_episodes: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr_actor > 0.0 && self.lr_critic > 0.0) {
            return Err(Error::InvalidParam("learning rates must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::InvalidParam(format!("gamma {} outside [0, 1)", self.gamma)));
        }
        if self.batch == 0 || self.buffer == 0 || self.steps_per_update == 0 || self.refresh_k == 0 {
            return Err(Error::InvalidParam("batch, buffer, steps_per_update and refresh_k must be >= 1".into()));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::InvalidParam(format!("tau {} outside (0, 1]", self.tau)));
        }
        if self.sigma_start < 0.0 || self.sigma_end < 0.0 {
            return Err(Error::InvalidParam("exploration sigma must be >= 0".into()));
        }
        self.residual.validate()
    }
}
