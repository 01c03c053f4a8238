use rand::RngCore;

use super::critic::CriticModel;
use crate::approx::{DenseNet, Differentiable, GaussianPolicy, OptimizerState, Squash};
use crate::error::{Error, Result};
use crate::game::{ActionLayout, Game};
use crate::TransitionSample;

/// One Gaussian policy per agent.
#[derive(Clone, Debug, PartialEq)]
pub struct ActorSet {
    pub actors: Vec<GaussianPolicy>,
    pub layout: ActionLayout,
}

impl ActorSet {
    /// Tanh-squashed MLP actors whose initial mean sits near the box center.
    pub fn for_game(game: &dyn Game, hidden: &[usize], sigma: f64, rng: &mut dyn RngCore) -> Result<Self> {
        let (lo, hi) = game.action_bounds();
        let layout = game.layout().clone();
        let actors = (0..game.n_agents())
            .map(|i| {
                let r = layout.range(i);
                let mut net = DenseNet::mlp(game.state_dim(), hidden, r.len(), rng)?;
                net.scale_last_layer(0.1);
                GaussianPolicy::new(
                    net,
                    sigma,
                    Squash::Tanh {
                        low: lo[r.clone()].to_vec(),
                        high: hi[r].to_vec(),
                    },
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { actors, layout })
    }

    pub fn len(&self) -> usize {
        self.actors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actors.is_empty()
    }

    pub fn set_sigma(&mut self, sigma: f64) {
        for a in &mut self.actors {
            a.sigma = sigma;
        }
    }

    /// Joint squashed-mean action.
    pub fn deterministic(&self, s: &[f64]) -> Result<Vec<f64>> {
        let parts = self
            .actors
            .iter()
            .map(|a| a.mean_action(s))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.layout.concat(&parts))
    }

    pub fn sample(&self, s: &[f64], rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        let parts = self
            .actors
            .iter()
            .map(|a| a.sample(s, rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.layout.concat(&parts))
    }
}

/// Linear exploration schedule from `start` to `end` over `total` steps.
pub fn sigma_schedule(start: f64, end: f64, step: usize, total: usize) -> f64 {
    if total <= 1 {
        return end;
    }
    let t = (step as f64 / (total - 1) as f64).min(1.0);
    start + (end - start) * t
}

/// Deterministic policy gradient step for agent `i`: ascent along
/// `mean over batch of d mu_i / d eta * dF/da_i` evaluated at `a_i = mu_i(s)`.
/// Other agents' actions come from the batch unless `others` supplies them.
/// Returns the gradient norm.
pub fn actor_update(
    actor: &mut GaussianPolicy,
    i: usize,
    layout: &ActionLayout,
    critic: &CriticModel,
    batch: &[&TransitionSample],
    others: Option<&ActorSet>,
    opt: &mut OptimizerState,
) -> Result<f64> {
    let grad = actor_gradient(actor, i, layout, critic, batch, others)?;
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    let descent: Vec<f64> = grad.iter().map(|g| -g).collect();
    opt.step(actor.mean_model.params_mut(), &descent)?;
    Ok(norm)
}

/// Ascent direction used by [`actor_update`].
pub fn actor_gradient(
    actor: &GaussianPolicy,
    i: usize,
    layout: &ActionLayout,
    critic: &CriticModel,
    batch: &[&TransitionSample],
    others: Option<&ActorSet>,
) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(Error::Empty("actor batch"));
    }
    let r = layout.range(i);
    let mut grad = vec![0.0; actor.mean_model.params().len()];
    let l = batch.len() as f64;
    for sample in batch {
        let mut a = match others {
            Some(set) => set.deterministic(&sample.s)?,
            None => sample.a.clone(),
        };
        a[r.clone()].copy_from_slice(&actor.mean_action(&sample.s)?);
        let g = critic.action_grad(&sample.s, &a)?;
        let vjp = actor.mean_action_vjp(&sample.s, &g[r.clone()])?;
        for (t, v) in grad.iter_mut().zip(vjp) {
            *t += v / l;
        }
    }
    Ok(grad)
}
