use std::io::Write;

use rand::RngCore;

use super::Game;
use crate::approx::GaussianPolicy;
use crate::error::{Error, Result};
use crate::TransitionSample;

/// Samples of one episode in time order.
pub type Episode = Vec<TransitionSample>;

/// Runs `episodes` episodes, drawing each agent's action from its policy.
pub fn rollout(
    game: &dyn Game,
    policies: &[GaussianPolicy],
    episodes: usize,
    rng: &mut dyn RngCore,
) -> Result<Vec<Episode>> {
    if policies.len() != game.n_agents() {
        return Err(Error::dim("policies", game.n_agents(), policies.len()));
    }
    for (i, p) in policies.iter().enumerate() {
        if p.action_dim() != game.action_dims()[i] {
            return Err(Error::dim("policy action dimension", game.action_dims()[i], p.action_dim()));
        }
        if p.mean_model.layer_dims()[0] != game.state_dim() {
            return Err(Error::dim("policy state dimension", game.state_dim(), p.mean_model.layer_dims()[0]));
        }
    }
    let layout = game.layout().clone();
    rollout_with(game, episodes, rng, |s, rng| {
        let parts = policies
            .iter()
            .map(|p| p.sample(s, rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(layout.concat(&parts))
    })
}

/// Rollout driven by an arbitrary joint-action rule.
pub fn rollout_with<F>(game: &dyn Game, episodes: usize, rng: &mut dyn RngCore, mut act: F) -> Result<Vec<Episode>>
where
    F: FnMut(&[f64], &mut dyn RngCore) -> Result<Vec<f64>>,
{
    let horizon = game.horizon();
    let mut out = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let mut s = game.initial_state(rng);
        let mut episode = Vec::with_capacity(horizon.min(1024));
        for t in 0..horizon {
            let a = act(&s, rng)?;
            if a.len() != game.joint_action_dim() {
                return Err(Error::dim("joint action", game.joint_action_dim(), a.len()));
            }
            let rewards = game.rewards(&s, &a);
            let s2 = game.transition(&s, &a, rng);
            let done = t + 1 == horizon || game.is_terminal(&s2);
            episode.push(TransitionSample {
                s: std::mem::replace(&mut s, s2.clone()),
                a,
                s2,
                rewards,
                done,
            });
            if done {
                break;
            }
        }
        out.push(episode);
    }
    Ok(out)
}

/// One JSON object per transition.
pub fn write_jsonl<W: Write>(mut w: W, samples: &[TransitionSample]) -> Result<()> {
    for sample in samples {
        serde_json::to_writer(&mut w, sample)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
