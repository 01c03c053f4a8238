use rand::RngCore;
use serde::Serialize;

use super::actor::{actor_update, sigma_schedule, ActorSet};
use super::config::{RewardSource, TrainConfig};
use super::critic::{critic_fit, sampled_max, spotq_target, CriticModel, MaxProxy};
use crate::approx::{polyak_update, Differentiable, GaussianPolicy, OptimizerState};
use crate::error::{Error, Result};
use crate::game::{Game, ReplayBuffer};
use crate::metrics::{ne_gap, social_welfare};
use crate::potential::{
    fit_reward_models, objective, sample_probes, GradientSource, PotentialModel, RewardModel,
};
use crate::rng::substream;
use crate::TransitionSample;

/// One row of a training trace.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TracePoint {
    pub step: usize,
    pub episodes: usize,
    pub social_welfare: f64,
    pub ne_gap: f64,
    pub potential_residual: f64,
    pub critic_loss: f64,
}

pub struct TrainOutcome {
    pub actors: ActorSet,
    pub critic: CriticModel,
    /// Estimated potential; `None` when the analytic one was used.
    pub potential: Option<PotentialModel>,
    pub trace: Vec<TracePoint>,
}

/// Supplies `phi(s, a)` for critic targets, either from the game or from a
/// warm-started estimate that is refreshed from time to time.
pub(crate) struct PotentialProvider {
    estimate: Option<Estimated>,
}

struct Estimated {
    model: PotentialModel,
    opt: OptimizerState,
    models: Option<Vec<RewardModel>>,
    refreshes: usize,
    loss: f64,
}

impl PotentialProvider {
    pub(crate) fn new(game: &dyn Game, cfg: &TrainConfig, rng: &mut dyn RngCore) -> Result<Self> {
        if cfg.use_analytic_potential {
            let s = game.initial_state(rng);
            if game.potential(&s, &vec![0.0; game.joint_action_dim()]).is_none() {
                return Err(Error::InvalidParam(format!("{} has no analytic potential", game.name())));
            }
            return Ok(Self { estimate: None });
        }
        let body = cfg.residual.model.build(game.state_dim() + game.joint_action_dim(), rng)?;
        Ok(Self {
            estimate: Some(Estimated {
                model: PotentialModel::new(body, game.state_dim(), game.joint_action_dim())?,
                opt: OptimizerState::with_kind(cfg.residual.optimizer, cfg.residual.lr).with_clip(cfg.residual.clip_norm),
                models: None,
                refreshes: 0,
                loss: f64::NAN,
            }),
        })
    }

    pub(crate) fn value(&self, game: &dyn Game, s: &[f64], a: &[f64]) -> Result<f64> {
        match &self.estimate {
            None => game.potential(s, a).ok_or(Error::InvalidParam("potential unavailable".into())),
            Some(e) => e.model.value(s, a),
        }
    }

    pub(crate) fn residual(&self) -> f64 {
        self.estimate.as_ref().map_or(0.0, |e| e.loss)
    }

    pub(crate) fn model(&self) -> Option<&PotentialModel> {
        self.estimate.as_ref().map(|e| &e.model)
    }

    pub(crate) fn refresh(
        &mut self,
        game: &dyn Game,
        buffer: &ReplayBuffer,
        cfg: &TrainConfig,
        rng: &mut dyn RngCore,
    ) -> Result<()> {
        let Some(est) = self.estimate.as_mut() else {
            return Ok(());
        };
        let probe_s = game.initial_state(rng);
        let analytic = match cfg.reward_source {
            RewardSource::Analytic => true,
            RewardSource::Models => false,
            RewardSource::Auto => game.reward_grads(&probe_s, &vec![0.0; game.joint_action_dim()]).is_some(),
        };
        if !analytic {
            let data: Vec<TransitionSample> = buffer.iter().cloned().collect();
            est.models = Some(fit_reward_models(&data, &cfg.reward_fit, rng)?);
        }
        let source = match &est.models {
            Some(m) if !analytic => GradientSource::Models(m),
            _ => GradientSource::Analytic(game),
        };
        let iterations = if est.refreshes == 0 {
            cfg.residual.iterations
        } else {
            cfg.refresh_iterations
        };
        let agents: Vec<usize> = (0..game.n_agents()).collect();
        for _ in 0..iterations {
            let probes = sample_probes(game, &cfg.residual, cfg.residual.batch, rng);
            let (loss, grad) = objective(game, &agents, &probes, &est.model, &source, &cfg.residual)?;
            if !loss.is_finite() || loss > 1e6 {
                return Err(Error::Diverged {
                    iteration: est.refreshes,
                    loss,
                });
            }
            est.loss = loss;
            if grad.iter().map(|g| g * g).sum::<f64>().sqrt() < cfg.residual.grad_tol {
                break;
            }
            est.opt.step(est.model.body.params_mut(), &grad)?;
        }
        let (slo, shi) = game.state_bounds();
        let (alo, ahi) = game.action_bounds();
        let s0: Vec<f64> = slo.iter().zip(&shi).map(|(l, h)| 0.5 * (l + h)).collect();
        let a0: Vec<f64> = alo.iter().zip(ahi).map(|(l, h)| 0.5 * (l + h)).collect();
        est.model.canonicalize(&s0, &a0)?;
        est.refreshes += 1;
        Ok(())
    }
}

/// Rolls out `policy` (a joint-action rule) and returns episodes.
pub(crate) fn evaluate<F>(game: &dyn Game, episodes: usize, rng: &mut dyn RngCore, act: F) -> Result<Vec<Vec<TransitionSample>>>
where
    F: FnMut(&[f64], &mut dyn RngCore) -> Result<Vec<f64>>,
{
    crate::game::rollout_with(game, episodes, rng, act)
}

/// Environment driver shared by the trainers.
pub(crate) struct Driver {
    pub buffer: ReplayBuffer,
    state: Vec<f64>,
    t: usize,
    pub episodes: usize,
}

impl Driver {
    pub(crate) fn new(game: &dyn Game, capacity: usize, rng: &mut dyn RngCore) -> Self {
        Self {
            buffer: ReplayBuffer::new(capacity),
            state: game.initial_state(rng),
            t: 0,
            episodes: 0,
        }
    }

    pub(crate) fn step<F>(&mut self, game: &dyn Game, rng: &mut dyn RngCore, act: F) -> Result<()>
    where
        F: FnOnce(&[f64]) -> Result<Vec<f64>>,
    {
        let a = act(&self.state)?;
        let rewards = game.rewards(&self.state, &a);
        let s2 = game.transition(&self.state, &a, rng);
        let done = self.t + 1 >= game.horizon() || game.is_terminal(&s2);
        let next = if done { game.initial_state(rng) } else { s2.clone() };
        self.buffer.push(TransitionSample {
            s: std::mem::replace(&mut self.state, next),
            a,
            s2,
            rewards,
            done,
        });
        if done {
            self.t = 0;
            self.episodes += 1;
        } else {
            self.t += 1;
        }
        Ok(())
    }
}

pub(crate) fn deterministic_copy(actors: &ActorSet) -> ActorSet {
    let mut det = actors.clone();
    det.set_sigma(0.0);
    det
}

fn next_value(
    critic: &CriticModel,
    sample: &TransitionSample,
    proxy: MaxProxy,
    target_actors: &ActorSet,
    game: &dyn Game,
    rng: &mut dyn RngCore,
) -> Result<f64> {
    if sample.done {
        return Ok(0.0);
    }
    match proxy {
        MaxProxy::Actors => critic.target_value(&sample.s2, &target_actors.deterministic(&sample.s2)?),
        MaxProxy::Sampling { m } => {
            let (lo, hi) = game.action_bounds();
            Ok(sampled_max(critic, &sample.s2, lo, hi, m, rng)?.0)
        }
    }
}

fn sync_actors(target: &mut ActorSet, source: &ActorSet, tau: f64) {
    for (t, s) in target.actors.iter_mut().zip(&source.actors) {
        polyak_update(t.mean_model.params_mut(), s.mean_model.params(), tau);
    }
}

fn trace_point(
    game: &dyn Game,
    actors: &ActorSet,
    cfg: &TrainConfig,
    step: usize,
    episodes: usize,
    residual: f64,
    critic_loss: f64,
    rng: &mut dyn RngCore,
) -> Result<TracePoint> {
    let det = deterministic_copy(actors);
    let eps = evaluate(game, cfg.eval_episodes.max(1), rng, |s, _| det.deterministic(s))?;
    Ok(TracePoint {
        step,
        episodes,
        social_welfare: social_welfare(&eps)?,
        ne_gap: ne_gap(game, actors)?,
        potential_residual: residual,
        critic_loss,
    })
}

/// Actor-critic on the dual team game: a shared critic regresses the
/// (estimated or analytic) potential and every agent follows a deterministic
/// policy gradient of that critic.
pub fn train_spotac(game: &dyn Game, cfg: &TrainConfig, seed: u64) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut init = substream(seed, "init");
    let mut env_rng = substream(seed, "env");
    let mut pol_rng = substream(seed, "policy");
    let mut est_rng = substream(seed, "estimator");
    let mut eval_rng = substream(seed, "eval");

    let mut actors = ActorSet::for_game(game, &cfg.actor_hidden, cfg.sigma_start, &mut init)?;
    let mut target_actors = actors.clone();
    let mut critic = CriticModel::mlp(game.state_dim(), game.joint_action_dim(), &cfg.critic_hidden, cfg.tau, &mut init)?;
    let mut provider = PotentialProvider::new(game, cfg, &mut init)?;
    let mut opt_critic = OptimizerState::adam(cfg.lr_critic).with_clip(cfg.grad_clip);
    let mut opt_actors: Vec<OptimizerState> = (0..game.n_agents())
        .map(|_| OptimizerState::adam(cfg.lr_actor).with_clip(cfg.grad_clip))
        .collect();
    let mut driver = Driver::new(game, cfg.buffer, &mut env_rng);
    let mut trace = Vec::new();
    let mut iteration = 0usize;
    let mut critic_loss = f64::NAN;
    let layout = game.layout().clone();

    for step in 0..cfg.steps {
        actors.set_sigma(sigma_schedule(cfg.sigma_start, cfg.sigma_end, step, cfg.steps));
        driver
            .step(game, &mut env_rng, |s| actors.sample(s, &mut pol_rng))
            .map_err(|e| e.at_iteration(iteration))?;
        let ready = driver.buffer.len() >= cfg.warmup.max(1) && (step + 1) % cfg.steps_per_update == 0;
        if ready {
            let result: Result<()> = (|| {
                if iteration % cfg.refresh_k == 0 {
                    provider.refresh(game, &driver.buffer, cfg, &mut est_rng)?;
                }
                let batch = driver.buffer.sample(cfg.batch, &mut pol_rng)?;
                let targets = batch
                    .iter()
                    .map(|smp| {
                        let phi = provider.value(game, &smp.s, &smp.a)?;
                        let future = next_value(&critic, smp, cfg.max_proxy, &target_actors, game, &mut pol_rng)?;
                        Ok(spotq_target(phi, smp.done, cfg.gamma, future))
                    })
                    .collect::<Result<Vec<_>>>()?;
                critic_loss = critic_fit(&mut critic, &batch, &targets, &mut opt_critic)?;
                let others = if cfg.reevaluate_others { Some(actors.clone()) } else { None };
                for i in 0..actors.len() {
                    actor_update(
                        &mut actors.actors[i],
                        i,
                        &layout,
                        &critic,
                        &batch,
                        others.as_ref(),
                        &mut opt_actors[i],
                    )?;
                }
                sync_actors(&mut target_actors, &actors, cfg.tau);
                Ok(())
            })();
            result.map_err(|e| e.at_iteration(iteration))?;
            iteration += 1;
        }
        if (step + 1) % cfg.eval_interval.max(1) == 0 || step + 1 == cfg.steps {
            trace.push(trace_point(
                game,
                &actors,
                cfg,
                step + 1,
                driver.episodes,
                provider.residual(),
                critic_loss,
                &mut eval_rng,
            )?);
        }
    }
    actors.set_sigma(cfg.sigma_end);
    Ok(TrainOutcome {
        actors,
        critic,
        potential: provider.model().cloned(),
        trace,
    })
}

/// Selfish baseline: agent `i` trains its own critic on `R_i` and ascends it.
pub fn train_independent(game: &dyn Game, cfg: &TrainConfig, seed: u64) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut init = substream(seed, "init");
    let mut env_rng = substream(seed, "env");
    let mut pol_rng = substream(seed, "policy");
    let mut eval_rng = substream(seed, "eval");
    let n = game.n_agents();
    let mut actors = ActorSet::for_game(game, &cfg.actor_hidden, cfg.sigma_start, &mut init)?;
    let mut target_actors = actors.clone();
    let mut critics = (0..n)
        .map(|_| CriticModel::mlp(game.state_dim(), game.joint_action_dim(), &cfg.critic_hidden, cfg.tau, &mut init))
        .collect::<Result<Vec<_>>>()?;
    let mut opt_critics: Vec<OptimizerState> = (0..n)
        .map(|_| OptimizerState::adam(cfg.lr_critic).with_clip(cfg.grad_clip))
        .collect();
    let mut opt_actors: Vec<OptimizerState> = (0..n)
        .map(|_| OptimizerState::adam(cfg.lr_actor).with_clip(cfg.grad_clip))
        .collect();
    let mut driver = Driver::new(game, cfg.buffer, &mut env_rng);
    let mut trace = Vec::new();
    let mut iteration = 0usize;
    let mut critic_loss = f64::NAN;
    let layout = game.layout().clone();

    for step in 0..cfg.steps {
        actors.set_sigma(sigma_schedule(cfg.sigma_start, cfg.sigma_end, step, cfg.steps));
        driver
            .step(game, &mut env_rng, |s| actors.sample(s, &mut pol_rng))
            .map_err(|e| e.at_iteration(iteration))?;
        if driver.buffer.len() >= cfg.warmup.max(1) && (step + 1) % cfg.steps_per_update == 0 {
            let result: Result<()> = (|| {
                let mut total = 0.0;
                for i in 0..n {
                    let batch = driver.buffer.sample(cfg.batch, &mut pol_rng)?;
                    let targets = batch
                        .iter()
                        .map(|smp| {
                            let future = next_value(&critics[i], smp, cfg.max_proxy, &target_actors, game, &mut pol_rng)?;
                            Ok(spotq_target(smp.rewards[i], smp.done, cfg.gamma, future))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    total += critic_fit(&mut critics[i], &batch, &targets, &mut opt_critics[i])?;
                    actor_update(&mut actors.actors[i], i, &layout, &critics[i], &batch, None, &mut opt_actors[i])?;
                }
                critic_loss = total / n as f64;
                sync_actors(&mut target_actors, &actors, cfg.tau);
                Ok(())
            })();
            result.map_err(|e| e.at_iteration(iteration))?;
            iteration += 1;
        }
        if (step + 1) % cfg.eval_interval.max(1) == 0 || step + 1 == cfg.steps {
            trace.push(trace_point(game, &actors, cfg, step + 1, driver.episodes, f64::NAN, critic_loss, &mut eval_rng)?);
        }
    }
    actors.set_sigma(cfg.sigma_end);
    let critic = critics.swap_remove(0);
    Ok(TrainOutcome {
        actors,
        critic,
        potential: None,
        trace,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BestResponseConfig {
    pub steps: usize,
    pub eval_episodes: usize,
}

impl Default for BestResponseConfig {
    fn default() -> Self {
        Self {
            steps: 5000,
            eval_episodes: 100,
        }
    }
}

#[derive(Clone, Debug)]
pub struct BestResponseResult {
    pub agent: usize,
    pub policy: GaussianPolicy,
    /// Mean undiscounted return of agent `i` under `(BR, pi_{-i})`.
    pub br_value: f64,
    pub br_std_err: f64,
    /// Mean undiscounted return of agent `i` under `pi`.
    pub current_value: f64,
    pub current_std_err: f64,
}

impl BestResponseResult {
    pub fn gain(&self) -> f64 {
        self.br_value - self.current_value
    }
}

/// Agent `i`'s undiscounted returns per episode under a joint-action rule.
pub(crate) fn agent_returns<F>(game: &dyn Game, i: usize, episodes: usize, rng: &mut dyn RngCore, act: F) -> Result<Vec<f64>>
where
    F: FnMut(&[f64], &mut dyn RngCore) -> Result<Vec<f64>>,
{
    Ok(evaluate(game, episodes, rng, act)?
        .iter()
        .map(|ep| ep.iter().map(|t| t.rewards[i]).sum())
        .collect())
}

pub(crate) fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Single-agent actor-critic on agent `i`'s own reward against frozen
/// opponents, warm-started from agent `i`'s current policy.
pub fn train_best_response(
    game: &dyn Game,
    actors: &ActorSet,
    i: usize,
    cfg: &TrainConfig,
    br: &BestResponseConfig,
    seed: u64,
) -> Result<BestResponseResult> {
    cfg.validate()?;
    if i >= actors.len() {
        return Err(Error::dim("best-response agent", actors.len(), i));
    }
    let tag = format!("br{i}");
    let mut init = substream(seed, &format!("{tag}-init"));
    let mut env_rng = substream(seed, &format!("{tag}-env"));
    let mut pol_rng = substream(seed, &format!("{tag}-policy"));
    let mut eval_rng = substream(seed, &format!("{tag}-eval"));
    let layout = game.layout().clone();
    let mut joint = actors.clone();
    let mut target = joint.clone();
    let mut critic = CriticModel::mlp(game.state_dim(), game.joint_action_dim(), &cfg.critic_hidden, cfg.tau, &mut init)?;
    let mut opt_critic = OptimizerState::adam(cfg.lr_critic).with_clip(cfg.grad_clip);
    let mut opt_actor = OptimizerState::adam(cfg.lr_actor).with_clip(cfg.grad_clip);
    let mut driver = Driver::new(game, cfg.buffer, &mut env_rng);
    for step in 0..br.steps {
        joint.actors[i].sigma = sigma_schedule(cfg.sigma_start, cfg.sigma_end, step, br.steps);
        driver.step(game, &mut env_rng, |s| joint.sample(s, &mut pol_rng))?;
        if driver.buffer.len() < cfg.warmup.max(1) {
            continue;
        }
        let batch = driver.buffer.sample(cfg.batch, &mut pol_rng)?;
        let targets = batch
            .iter()
            .map(|smp| {
                let future = next_value(&critic, smp, cfg.max_proxy, &target, game, &mut pol_rng)?;
                Ok(spotq_target(smp.rewards[i], smp.done, cfg.gamma, future))
            })
            .collect::<Result<Vec<_>>>()?;
        critic_fit(&mut critic, &batch, &targets, &mut opt_critic)?;
        actor_update(&mut joint.actors[i], i, &layout, &critic, &batch, None, &mut opt_actor)?;
        polyak_update(
            target.actors[i].mean_model.params_mut(),
            joint.actors[i].mean_model.params(),
            cfg.tau,
        );
    }
    joint.actors[i].sigma = actors.actors[i].sigma;
    let current = agent_returns(game, i, br.eval_episodes, &mut eval_rng, |s, r| actors.sample(s, r))?;
    let deviated = agent_returns(game, i, br.eval_episodes, &mut eval_rng, |s, r| joint.sample(s, r))?;
    let (current_value, current_std_err) = mean_and_se(&current);
    let (br_value, br_std_err) = mean_and_se(&deviated);
    Ok(BestResponseResult {
        agent: i,
        policy: joint.actors.swap_remove(i),
        br_value,
        br_std_err,
        current_value,
        current_std_err,
    })
}
