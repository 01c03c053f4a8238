use rand::{Rng, RngCore};

use crate::approx::{polyak_update, DenseNet, Differentiable, OptimizerState};
use crate::error::{Error, Result};
use crate::TransitionSample;

/// Joint action-value network `F(s, a)` with a slowly tracking target copy.
#[derive(Clone, Debug)]
pub struct CriticModel {
    pub net: DenseNet,
    pub target: DenseNet,
    pub tau: f64,
    state_dim: usize,
}

impl CriticModel {
    pub fn new(net: DenseNet, state_dim: usize, tau: f64) -> Result<Self> {
        if net.output_dim() != 1 || net.input_dim() <= state_dim {
            return Err(Error::InvalidParam("critic maps [s; a] to a scalar".into()));
        }
        if !(tau > 0.0 && tau <= 1.0) {
            return Err(Error::InvalidParam(format!("tau must be in (0, 1], got {tau}")));
        }
        Ok(Self {
            target: net.clone(),
            net,
            tau,
            state_dim,
        })
    }

    pub fn mlp(state_dim: usize, action_dim: usize, hidden: &[usize], tau: f64, rng: &mut dyn RngCore) -> Result<Self> {
        let net = DenseNet::mlp(state_dim + action_dim, hidden, 1, rng)?;
        Self::new(net, state_dim, tau)
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    fn input(s: &[f64], a: &[f64]) -> Vec<f64> {
        let mut x = s.to_vec();
        x.extend_from_slice(a);
        x
    }

    pub fn value(&self, s: &[f64], a: &[f64]) -> Result<f64> {
        Ok(self.net.forward(&Self::input(s, a))?[0])
    }

    pub fn target_value(&self, s: &[f64], a: &[f64]) -> Result<f64> {
        Ok(self.target.forward(&Self::input(s, a))?[0])
    }

    /// `d F / d a` at `(s, a)`.
    pub fn action_grad(&self, s: &[f64], a: &[f64]) -> Result<Vec<f64>> {
        let g = self.net.input_gradient(&Self::input(s, a), &[1.0])?;
        Ok(g[self.state_dim..].to_vec())
    }

    pub fn sync_target(&mut self) {
        polyak_update(self.target.params_mut(), self.net.params(), self.tau);
    }
}

/// How the sup over next joint actions is approximated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum MaxProxy {
    /// Target actors' joint deterministic action.
    Actors,
    /// Best of `m` uniform joint actions.
    Sampling { m: usize },
}

/// `Y = phi(s, a) + gamma * max F_target(s', a')`, or `phi(s, a)` when done.
pub fn spotq_target(phi: f64, done: bool, gamma: f64, future: f64) -> f64 {
    if done || gamma == 0.0 {
        phi
    } else {
        phi + gamma * future
    }
}

/// Best target-critic value over `m` uniform joint actions in the box.
pub fn sampled_max(
    critic: &CriticModel,
    s: &[f64],
    low: &[f64],
    high: &[f64],
    m: usize,
    rng: &mut dyn RngCore,
) -> Result<(f64, Vec<f64>)> {
    let mut best = (f64::NEG_INFINITY, Vec::new());
    for _ in 0..m.max(1) {
        let a: Vec<f64> = low
            .iter()
            .zip(high)
            .map(|(&l, &h)| if h > l { rng.random_range(l..h) } else { l })
            .collect();
        let v = critic.target_value(s, &a)?;
        if v > best.0 {
            best = (v, a);
        }
    }
    Ok(best)
}

/// One optimizer step on the mean squared error `(Y - F(s, a))^2`, followed by
/// the Polyak target update. Returns the pre-step loss.
pub fn critic_fit(
    critic: &mut CriticModel,
    batch: &[&TransitionSample],
    targets: &[f64],
    opt: &mut OptimizerState,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Empty("critic batch"));
    }
    if batch.len() != targets.len() {
        return Err(Error::dim("critic targets", batch.len(), targets.len()));
    }
    let mut grad = vec![0.0; critic.net.params().len()];
    let mut loss = 0.0;
    let l = batch.len() as f64;
    for (sample, &y) in batch.iter().zip(targets) {
        let x = CriticModel::input(&sample.s, &sample.a);
        let trace = critic.net.forward_trace(&x)?;
        let e = trace.output()[0] - y;
        loss += e * e / l;
        critic.net.backward_into(&trace, &[2.0 * e / l], &mut grad)?;
    }
    if !loss.is_finite() {
        return Err(Error::NonFinite {
            context: "critic loss",
            layer: 0,
        });
    }
    opt.step(critic.net.params_mut(), &grad)?;
    critic.sync_target();
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn target_arithmetic() {
        assert!((spotq_target(1.0, false, 0.9, 2.0) - 2.8).abs() < 1e-15);
        assert_eq!(spotq_target(1.0, true, 0.9, 2.0), 1.0);
        assert_eq!(spotq_target(1.0, false, 0.0, 5.0), 1.0);
    }

    fn sample(a: f64) -> TransitionSample {
        TransitionSample {
            s: vec![0.0],
            a: vec![a],
            s2: vec![0.0],
            rewards: vec![0.0],
            done: true,
        }
    }

    #[test]
    fn exact_fit_is_a_fixed_point_under_sgd() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut critic = CriticModel::mlp(1, 1, &[4], 0.5, &mut rng).unwrap();
        let samples = [sample(0.1), sample(-0.3)];
        let batch: Vec<&TransitionSample> = samples.iter().collect();
        let targets: Vec<f64> = batch.iter().map(|s| critic.value(&s.s, &s.a).unwrap()).collect();
        let before = critic.net.clone();
        let loss = critic_fit(&mut critic, &batch, &targets, &mut OptimizerState::sgd(0.1)).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(critic.net, before);
    }

    #[test]
    fn tau_one_copies_main() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut critic = CriticModel::mlp(1, 1, &[4], 1.0, &mut rng).unwrap();
        let samples = [sample(0.5)];
        let batch: Vec<&TransitionSample> = samples.iter().collect();
        critic_fit(&mut critic, &batch, &[3.0], &mut OptimizerState::adam(1e-2)).unwrap();
        assert_eq!(critic.net.params(), critic.target.params());
    }

    #[test]
    fn constant_targets_are_learned() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut critic = CriticModel::mlp(1, 1, &[8], 0.01, &mut rng).unwrap();
        let samples: Vec<TransitionSample> = (0..16).map(|k| sample(k as f64 / 8.0 - 1.0)).collect();
        let batch: Vec<&TransitionSample> = samples.iter().collect();
        let targets = vec![0.7; batch.len()];
        let mut opt = OptimizerState::adam(1e-2);
        let mut loss = f64::INFINITY;
        for _ in 0..3000 {
            loss = critic_fit(&mut critic, &batch, &targets, &mut opt).unwrap();
        }
        assert!(loss < 1e-6, "{loss}");
    }
}
