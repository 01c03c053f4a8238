use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::critic::{critic_fit, sampled_max, spotq_target, CriticModel};
use super::train::{PotentialProvider, TracePoint};
use crate::error::{Error, Result};
use crate::game::{Game, TabularMdp};
use crate::metrics::social_welfare;
use crate::rng::substream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpotqConfig {
    /// Sampled next states per `(s, a)` cell and sweep; 0 uses exact expectations.
    pub samples_per_pair: usize,
    pub iterations: usize,
    pub tol: f64,
}

impl Default for SpotqConfig {
    fn default() -> Self {
        Self {
            samples_per_pair: 8,
            iterations: 1000,
            tol: 1e-10,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SpotqResult {
    /// `q[s * n_actions + a]`.
    pub q: Vec<f64>,
    pub policy: Vec<usize>,
    pub sweeps: usize,
}

/// Fitted Q iteration on a finite dual MDP. Each sweep regresses the
/// targets `phi(s, a) + gamma * max_a' Q(s', a')` onto a tabular Q, which for
/// squared error is the per-cell mean of the sampled targets.
pub fn train_spotq(mdp: &TabularMdp, cfg: &SpotqConfig, seed: u64) -> Result<SpotqResult> {
    let mut rng = substream(seed, "spotq");
    let na = mdp.n_actions();
    let ns = mdp.n_states();
    let mut q = vec![0.0; ns * na];
    let mut sweeps = 0;
    for _ in 0..cfg.iterations {
        let v: Vec<f64> = (0..ns)
            .map(|s| q[s * na..(s + 1) * na].iter().cloned().fold(f64::NEG_INFINITY, f64::max))
            .collect();
        let mut delta: f64 = 0.0;
        for k in 0..ns * na {
            let row = &mdp.transitions[k];
            let future = if cfg.samples_per_pair == 0 || row.len() == 1 {
                row.iter().map(|&(j, p)| p * v[j]).sum::<f64>()
            } else {
                let mut acc = 0.0;
                for _ in 0..cfg.samples_per_pair {
                    let u: f64 = rng.random();
                    let mut c = 0.0;
                    let mut next = row[row.len() - 1].0;
                    for &(j, p) in row {
                        c += p;
                        if u < c {
                            next = j;
                            break;
                        }
                    }
                    acc += v[next];
                }
                acc / cfg.samples_per_pair as f64
            };
            let y = mdp.reward[k] + mdp.discount * future;
            delta = delta.max((y - q[k]).abs());
            q[k] = y;
        }
        sweeps += 1;
        if delta < cfg.tol {
            break;
        }
    }
    if q.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite {
            context: "fitted Q table",
            layer: 0,
        });
    }
    let policy = (0..ns)
        .map(|s| {
            let row = &q[s * na..(s + 1) * na];
            // lowest index wins ties, matching value iteration
            let mut best = 0;
            for (a, &x) in row.iter().enumerate() {
                if x > row[best] {
                    best = a;
                }
            }
            best
        })
        .collect();
    Ok(SpotqResult { q, policy, sweeps })
}

/// Greedy joint policy of a learned critic under the sampling max proxy.
#[derive(Clone, Debug)]
pub struct SampledGreedy {
    pub critic: CriticModel,
    pub samples: usize,
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

impl SampledGreedy {
    pub fn act(&self, s: &[f64], rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        Ok(sampled_max(&self.critic, s, &self.low, &self.high, self.samples, rng)?.1)
    }
}

pub struct ContinuousSpotq {
    pub policy: SampledGreedy,
    pub trace: Vec<TracePoint>,
}

/// Fitted Q learning on a continuous game: no actors, the max over joint
/// actions is approximated by the best of `m` uniform samples. Behaviour is
/// the sampled greedy action plus Gaussian noise, clipped to the action box.
pub fn train_spotq_continuous(game: &dyn Game, cfg: &TrainConfig, samples: usize, seed: u64) -> Result<ContinuousSpotq> {
    cfg.validate()?;
    if samples == 0 {
        return Err(Error::InvalidParam("sampling max proxy needs at least one sample".into()));
    }
    let mut init = substream(seed, "init");
    let mut env_rng = substream(seed, "env");
    let mut pol_rng = substream(seed, "policy");
    let mut est_rng = substream(seed, "estimator");
    let mut eval_rng = substream(seed, "eval");
    let (lo, hi) = game.action_bounds();
    let (lo, hi) = (lo.to_vec(), hi.to_vec());
    let mut critic = CriticModel::mlp(game.state_dim(), game.joint_action_dim(), &cfg.critic_hidden, cfg.tau, &mut init)?;
    let mut provider = PotentialProvider::new(game, cfg, &mut init)?;
    let mut opt = crate::approx::OptimizerState::adam(cfg.lr_critic).with_clip(cfg.grad_clip);
    let mut driver = super::train::Driver::new(game, cfg.buffer, &mut env_rng);
    let mut trace = Vec::new();
    let mut iteration = 0;
    let mut loss = f64::NAN;
    for step in 0..cfg.steps {
        let sigma = super::actor::sigma_schedule(cfg.sigma_start, cfg.sigma_end, step, cfg.steps);
        driver.step(game, &mut env_rng, |s| {
            let (_, mut a) = sampled_max(&critic, s, &lo, &hi, samples, &mut pol_rng)?;
            for (k, x) in a.iter_mut().enumerate() {
                let z: f64 = pol_rng.sample(StandardNormal);
                *x = (*x + sigma * (hi[k] - lo[k]) * z).clamp(lo[k], hi[k]);
            }
            Ok(a)
        })?;
        if driver.buffer.len() >= cfg.warmup.max(1) && (step + 1) % cfg.steps_per_update == 0 {
            let r: Result<()> = (|| {
                if iteration % cfg.refresh_k == 0 {
                    provider.refresh(game, &driver.buffer, cfg, &mut est_rng)?;
                }
                let batch = driver.buffer.sample(cfg.batch, &mut pol_rng)?;
                let targets = batch
                    .iter()
                    .map(|smp| {
                        let phi = provider.value(game, &smp.s, &smp.a)?;
                        let future = if smp.done {
                            0.0
                        } else {
                            sampled_max(&critic, &smp.s2, &lo, &hi, samples, &mut pol_rng)?.0
                        };
                        Ok(spotq_target(phi, smp.done, cfg.gamma, future))
                    })
                    .collect::<Result<Vec<_>>>()?;
                loss = critic_fit(&mut critic, &batch, &targets, &mut opt)?;
                Ok(())
            })();
            r.map_err(|e| e.at_iteration(iteration))?;
            iteration += 1;
        }
        if (step + 1) % cfg.eval_interval.max(1) == 0 || step + 1 == cfg.steps {
            let greedy = SampledGreedy {
                critic: critic.clone(),
                samples,
                low: lo.clone(),
                high: hi.clone(),
            };
            let eps = super::train::evaluate(game, cfg.eval_episodes.max(1), &mut eval_rng, |s, r| greedy.act(s, r))?;
            trace.push(TracePoint {
                step: step + 1,
                episodes: driver.episodes,
                social_welfare: social_welfare(&eps)?,
                ne_gap: f64::NAN,
                potential_residual: provider.residual(),
                critic_loss: loss,
            });
        }
    }
    Ok(ContinuousSpotq {
        policy: SampledGreedy {
            critic,
            samples,
            low: lo,
            high: hi,
        },
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{value_iteration, JointActionGrid};

    fn two_state() -> TabularMdp {
        let grid = JointActionGrid::uniform_scalar(1, 0.0, 1.0, 2).unwrap();
        // state 0: action 0 stays (r=1), action 1 jumps to state 1 (r=0); state 1 pays 2 forever
        TabularMdp::new(
            vec![vec![0.0], vec![1.0]],
            grid,
            vec![1.0, 0.0, 2.0, 2.0],
            vec![vec![(0, 1.0)], vec![(1, 1.0)], vec![(1, 1.0)], vec![(1, 1.0)]],
            0.5,
        )
        .unwrap()
    }

    #[test]
    fn matches_value_iteration() {
        let mdp = two_state();
        let vi = value_iteration(&mdp, 1e-12);
        let q = train_spotq(&mdp, &SpotqConfig::default(), 1).unwrap();
        assert_eq!(q.policy, vi.policy);
        assert!((q.q[1] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn zero_discount_is_greedy_in_reward() {
        let mut mdp = two_state();
        mdp.discount = 0.0;
        let q = train_spotq(&mdp, &SpotqConfig::default(), 3).unwrap();
        assert_eq!(q.policy[0], 0);
    }
}
