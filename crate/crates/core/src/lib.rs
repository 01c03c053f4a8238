//! Stochastic potential games: environments, potential estimation, dual-MDP
//! solvers, learners and evaluation metrics.

pub mod approx;
pub mod envs;
pub mod error;
pub mod game;
pub mod harness;
pub mod learners;
pub mod metrics;
pub mod potential;
pub mod rng;
mod linalg;

pub use error::{Error, Result};

use serde::{Deserialize, Serialize};

/// One environment step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionSample {
    pub s: Vec<f64>,
    pub a: Vec<f64>,
    pub s2: Vec<f64>,
    #[serde(rename = "r")]
    pub rewards: Vec<f64>,
    pub done: bool,
}
