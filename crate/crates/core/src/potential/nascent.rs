use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::approx::Squash;
use crate::error::{Error, Result};
use crate::game::Game;

/// A unilateral deviation `base -> deviated` to probe.
#[derive(Clone, Debug)]
pub struct NascentProbe {
    pub s: Vec<f64>,
    pub base: Vec<f64>,
    pub deviated: Vec<f64>,
    pub samples: usize,
    /// Add noise before a tanh squash onto the action box (as policies do);
    /// otherwise add it directly to the action.
    pub squash: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NascentRow {
    pub sigma: f64,
    pub gap: f64,
    pub std_err: f64,
}

/// For each `sigma`, the gap between the pure-strategy change in `f` and the
/// change in its expectation under Gaussian(sigma) play around the same
/// actions. Both expectations share noise draws.
pub fn nascent_bound_probe<F>(
    game: &dyn Game,
    f: F,
    probe: &NascentProbe,
    sigmas: &[f64],
    rng: &mut dyn RngCore,
) -> Result<Vec<NascentRow>>
where
    F: Fn(&[f64], &[f64]) -> f64,
{
    let dim = game.joint_action_dim();
    if probe.base.len() != dim || probe.deviated.len() != dim {
        return Err(Error::dim("nascent probe action", dim, probe.base.len().min(probe.deviated.len())));
    }
    if probe.samples < 2 {
        return Err(Error::InvalidParam("nascent probe needs at least two samples".into()));
    }
    let (lo, hi) = game.action_bounds();
    let squash = if probe.squash {
        Squash::Tanh {
            low: lo.to_vec(),
            high: hi.to_vec(),
        }
    } else {
        Squash::Identity
    };
    let raw_base = squash.invert(&probe.base);
    let raw_dev = squash.invert(&probe.deviated);
    let pure = f(&probe.s, &squash.apply(&raw_dev)) - f(&probe.s, &squash.apply(&raw_base));
    sigmas
        .iter()
        .map(|&sigma| {
            if !(sigma > 0.0) {
                return Err(Error::InvalidParam(format!("sigma must be positive, got {sigma}")));
            }
            let n = probe.samples as f64;
            let (mut sum, mut sum_sq) = (0.0, 0.0);
            for _ in 0..probe.samples {
                let z: Vec<f64> = (0..dim).map(|_| sigma * rng.sample::<f64, _>(StandardNormal)).collect();
                let shift = |raw: &[f64]| -> Vec<f64> { squash.apply(&raw.iter().zip(&z).map(|(r, z)| r + z).collect::<Vec<_>>()) };
                let d = f(&probe.s, &shift(&raw_dev)) - f(&probe.s, &shift(&raw_base));
                sum += d;
                sum_sq += d * d;
            }
            let mean = sum / n;
            let var = ((sum_sq / n - mean * mean) * n / (n - 1.0)).max(0.0);
            Ok(NascentRow {
                sigma,
                gap: (pure - mean).abs(),
                std_err: (var / n).sqrt(),
            })
        })
        .collect()
}
