use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{DenseNet, Differentiable};
use crate::error::{Error, Result};

/// Map from raw (pre-squash) Gaussian coordinates to the action box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Squash {
    /// Raw coordinates are the action.
    Identity,
    /// `low + (high - low) * (tanh(u) + 1) / 2`, elementwise.
    Tanh { low: Vec<f64>, high: Vec<f64> },
}

impl Squash {
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        match self {
            Squash::Identity => u.to_vec(),
            Squash::Tanh { low, high } => u
                .iter()
                .zip(low.iter().zip(high))
                .map(|(u, (l, h))| l + (h - l) * 0.5 * (u.tanh() + 1.0))
                .collect(),
        }
    }

    /// Elementwise `da/du`.
    pub fn derivative(&self, u: &[f64]) -> Vec<f64> {
        match self {
            Squash::Identity => vec![1.0; u.len()],
            Squash::Tanh { low, high } => u
                .iter()
                .zip(low.iter().zip(high))
                .map(|(u, (l, h))| {
                    let t = u.tanh();
                    0.5 * (h - l) * (1.0 - t * t)
                })
                .collect(),
        }
    }

    /// Raw coordinates for an action strictly inside the box.
    pub fn invert(&self, a: &[f64]) -> Vec<f64> {
        match self {
            Squash::Identity => a.to_vec(),
            Squash::Tanh { low, high } => a
                .iter()
                .zip(low.iter().zip(high))
                .map(|(a, (l, h))| {
                    let y = (2.0 * (a - l) / (h - l) - 1.0).clamp(-1.0 + 1e-12, 1.0 - 1e-12);
                    y.atanh()
                })
                .collect(),
        }
    }
}

/// Gaussian policy with a state-conditioned mean and a fixed spread `sigma`.
///
/// Noise is added in raw coordinates and then squashed, so every sample lies
/// in the action box and the map from parameters to actions stays smooth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianPolicy {
    pub mean_model: DenseNet,
    pub sigma: f64,
    pub squash: Squash,
}

/// One draw: raw Gaussian coordinates and the squashed action.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicySample {
    pub raw: Vec<f64>,
    pub action: Vec<f64>,
}

impl GaussianPolicy {
    pub fn new(mean_model: DenseNet, sigma: f64, squash: Squash) -> Result<Self> {
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidParam(format!("sigma must be finite and >= 0, got {sigma}")));
        }
        if let Squash::Tanh { low, high } = &squash {
            let d = mean_model.output_dim();
            if low.len() != d || high.len() != d {
                return Err(Error::dim("action bounds", d, low.len().min(high.len())));
            }
            if low.iter().zip(high).any(|(l, h)| !(l < h)) {
                return Err(Error::InvalidParam("action box needs low < high".into()));
            }
        }
        Ok(Self {
            mean_model,
            sigma,
            squash,
        })
    }

    /// Policy whose raw mean is a free parameter vector, independent of state.
    pub fn constant(state_dim: usize, raw_mean: &[f64], sigma: f64, squash: Squash) -> Result<Self> {
        let mut net = DenseNet::zeros(vec![state_dim, raw_mean.len()], vec![super::Activation::Identity])?;
        net.set_output_bias(raw_mean)?;
        Self::new(net, sigma, squash)
    }

    pub fn action_dim(&self) -> usize {
        self.mean_model.output_dim()
    }

    pub fn raw_mean(&self, s: &[f64]) -> Result<Vec<f64>> {
        self.mean_model.forward(s)
    }

    /// Deterministic action: the squashed mean.
    pub fn mean_action(&self, s: &[f64]) -> Result<Vec<f64>> {
        Ok(self.squash.apply(&self.raw_mean(s)?))
    }

    pub fn sample_raw<R: Rng + ?Sized>(&self, s: &[f64], rng: &mut R) -> Result<PolicySample> {
        let mut raw = self.raw_mean(s)?;
        if self.sigma > 0.0 {
            for u in &mut raw {
                let z: f64 = rng.sample(StandardNormal);
                *u += self.sigma * z;
            }
        }
        let action = self.squash.apply(&raw);
        Ok(PolicySample { raw, action })
    }

    pub fn sample<R: Rng + ?Sized>(&self, s: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        Ok(self.sample_raw(s, rng)?.action)
    }

    /// Gradient of `ln pi(raw | s)` with respect to the mean-model parameters,
    /// evaluated at raw (pre-squash) coordinates `raw`.
    pub fn score(&self, s: &[f64], raw: &[f64]) -> Result<Vec<f64>> {
        if self.sigma <= 0.0 {
            return Err(Error::DegeneratePolicy("score function"));
        }
        let mean = self.raw_mean(s)?;
        if raw.len() != mean.len() {
            return Err(Error::dim("policy sample", mean.len(), raw.len()));
        }
        let var = self.sigma * self.sigma;
        let upstream: Vec<f64> = raw.iter().zip(&mean).map(|(u, m)| (u - m) / var).collect();
        Ok(self.mean_model.gradients(s, &upstream)?.0)
    }

    /// Log density of raw coordinates.
    pub fn log_density(&self, s: &[f64], raw: &[f64]) -> Result<f64> {
        if self.sigma <= 0.0 {
            return Err(Error::DegeneratePolicy("log density"));
        }
        let mean = self.raw_mean(s)?;
        let var = self.sigma * self.sigma;
        let norm = -0.5 * (2.0 * std::f64::consts::PI * var).ln();
        Ok(raw
            .iter()
            .zip(&mean)
            .map(|(u, m)| norm - (u - m) * (u - m) / (2.0 * var))
            .sum())
    }

    /// Chain rule through the squash: parameter gradient of
    /// `upstream . mean_action(s)`.
    pub fn mean_action_vjp(&self, s: &[f64], upstream: &[f64]) -> Result<Vec<f64>> {
        let raw = self.raw_mean(s)?;
        let d = self.squash.derivative(&raw);
        let up: Vec<f64> = upstream.iter().zip(&d).map(|(g, d)| g * d).collect();
        Ok(self.mean_model.gradients(s, &up)?.0)
    }
}
