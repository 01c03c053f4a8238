use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use rand::RngCore;
use serde::Serialize;
use serde_json::json;

use super::config::{AlgoName, EnvSpec, ExperimentConfig, ExploitMode, RoutingParams};
use crate::approx::checkpoint;
use crate::envs::flow::{best_response_dynamics, FlowEquilibrium, FlowModel, TimeModel};
use crate::envs::{braess_network, random_layered_network, Ablation, Cournot, CournotParams, Nav, RoutingGame, RoutingNet, TeamGame};
use crate::error::{Error, Result};
use crate::game::{
    check_potentiality, discretize, ne_certificate, rollout_with, sample_joint_action, value_iteration, CheckReport, Game, JointActionGrid,
};
use crate::learners::{
    train_independent, train_spotac, train_spotq_continuous, ActorSet, BestResponseConfig, MaxProxy, TracePoint,
};
use crate::metrics::{exploitability, exploitability_analytic, write_csv, ExploitabilityReport, MetricsRow};
use crate::potential::{
    estimate_potential, estimate_potential_consensus, fit_reward_models, Coefficient, GradientSource, RewardModel,
};
use crate::rng::substream;
use crate::TransitionSample;

fn routing_net(p: &RoutingParams) -> Result<RoutingNet> {
    match p.network.as_str() {
        "braess" => Ok(braess_network()),
        "layered" => random_layered_network(p.layers, p.width, p.net_seed),
        path => RoutingNet::load(Path::new(path)),
    }
}

/// Instantiates the environment described by `spec`.
pub fn build_env(spec: &EnvSpec) -> Result<Box<dyn Game>> {
    Ok(match spec {
        EnvSpec::Cournot(p) => Box::new(Cournot::new(p.clone())?),
        EnvSpec::Nav(p) => Box::new(Nav::new(p.clone())?),
        EnvSpec::Ablation(p) => {
            let base = Cournot::new(CournotParams::with_agents(p.agents))?;
            Box::new(Ablation::new(Box::new(base), p.mode, p.c)?)
        }
        EnvSpec::Routing(p) => {
            let net = routing_net(p)?;
            let horizon = p.horizon.unwrap_or_else(|| net.depth());
            let game = match &p.demands {
                Some(d) => RoutingGame::new(net, d.clone(), horizon, p.discount)?,
                None => RoutingGame::equal_split(net, p.agents, horizon, p.discount)?,
            };
            if p.team {
                Box::new(TeamGame::new(Box::new(game))?)
            } else {
                Box::new(game)
            }
        }
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct PotentialSummary {
    pub run_id: String,
    pub residual: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coefficients: Option<Vec<Coefficient>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_disagreement: Option<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct RunSummary {
    pub rows: Vec<MetricsRow>,
    pub exploitability: Vec<(String, ExploitabilityReport)>,
    pub potentials: Vec<PotentialSummary>,
}

fn has_analytic_br(game: &dyn Game) -> bool {
    let mut rng = substream(0, "probe");
    let s = game.initial_state(&mut rng);
    let a = vec![0.0; game.joint_action_dim()];
    game.analytic_best_response(0, &s, &a).is_some()
}

fn has_reward_grads(game: &dyn Game) -> bool {
    let mut rng = substream(0, "probe");
    let s = game.initial_state(&mut rng);
    game.reward_grads(&s, &vec![0.0; game.joint_action_dim()]).is_some()
}

/// Reward models fitted to uniformly random play; used when the game does
/// not expose reward derivatives.
fn fitted_models(game: &dyn Game, cfg: &ExperimentConfig, rng: &mut dyn RngCore) -> Result<Vec<RewardModel>> {
    let episodes = (cfg.algo.train.buffer / game.horizon().max(1)).max(1);
    let data: Vec<TransitionSample> = rollout_with(game, episodes, rng, |_, r| Ok(sample_joint_action(game, r)))?.into_iter().flatten().collect();
    fit_reward_models(&data, &cfg.algo.train.reward_fit, rng)
}

/// Standalone potential estimation, centralized or by consensus.
pub fn estimate(cfg: &ExperimentConfig, seed: u64) -> Result<serde_json::Value> {
    let game = build_env(&cfg.env)?;
    let mut rng = substream(seed, "estimator");
    let models = if has_reward_grads(game.as_ref()) {
        None
    } else {
        Some(fitted_models(game.as_ref(), cfg, &mut rng)?)
    };
    let source = match &models {
        Some(m) => GradientSource::Models(m),
        None => GradientSource::Analytic(game.as_ref()),
    };
    let residual = &cfg.algo.train.residual;
    if cfg.algo.consensus {
        let est = estimate_potential_consensus(game.as_ref(), &source, residual, &cfg.algo.consensus_cfg, &mut rng)?;
        Ok(json!({
            "mode": "consensus",
            "rounds": est.agreement.len(),
            "max_disagreement": est.agreement.last(),
            "tracking_error": est.tracking.iter().cloned().fold(0.0, f64::max),
            "final_loss": est.loss.last(),
            "coefficients": est.models[0].coefficients(),
        }))
    } else {
        let est = estimate_potential(game.as_ref(), &source, residual, &mut rng)?;
        Ok(serde_json::to_value(&est.report)?)
    }
}

/// Potentiality check of the game's own potential function.
pub fn check(cfg: &ExperimentConfig, seed: u64, probes: usize, tol: f64) -> Result<CheckReport> {
    let game = build_env(&cfg.env)?;
    let mut rng = substream(seed, "check");
    let s = game.initial_state(&mut rng);
    if game.potential(&s, &vec![0.0; game.joint_action_dim()]).is_none() {
        return Err(Error::InvalidParam(format!("{} has no closed-form potential", game.name())));
    }
    Ok(check_potentiality(
        game.as_ref(),
        |s, a| game.potential(s, a).unwrap_or(f64::NAN),
        probes.max(1),
        tol,
        &mut rng,
    ))
}

fn exploit(game: &dyn Game, actors: &ActorSet, cfg: &ExperimentConfig, seed: u64) -> Result<Option<ExploitabilityReport>> {
    let analytic = match cfg.eval.exploitability {
        ExploitMode::Off => return Ok(None),
        ExploitMode::Analytic => true,
        ExploitMode::Learned => false,
        ExploitMode::Auto => has_analytic_br(game),
    };
    if analytic {
        exploitability_analytic(game, actors, cfg.eval.eval_episodes, seed).map(Some)
    } else {
        let br = BestResponseConfig {
            steps: cfg.eval.br_steps,
            eval_episodes: cfg.eval.eval_episodes,
        };
        exploitability(game, actors, &cfg.algo.train, &br, seed).map(Some)
    }
}

fn run_dir(out: &Path, run_id: &str) -> PathBuf {
    out.join(run_id.replace([':', '/', '='], "_"))
}

/// Loads actor checkpoints written by [`run_experiment`].
pub fn load_actors(cfg: &ExperimentConfig, run_id: &str) -> Result<ActorSet> {
    let game = build_env(&cfg.env)?;
    let dir = run_dir(&cfg.run.out, run_id);
    let mut actors = ActorSet::for_game(game.as_ref(), &cfg.algo.train.actor_hidden, cfg.algo.train.sigma_end, &mut substream(0, "init"))?;
    for (i, actor) in actors.actors.iter_mut().enumerate() {
        actor.mean_model = checkpoint::load(&dir.join(format!("actor_{i}.json")))?;
    }
    Ok(actors)
}

/// Exploitability of saved actors.
pub fn exploitability_of_checkpoint(cfg: &ExperimentConfig, run_id: &str, seed: u64) -> Result<ExploitabilityReport> {
    let game = build_env(&cfg.env)?;
    let actors = load_actors(cfg, run_id)?;
    exploit(game.as_ref(), &actors, cfg, seed)?.ok_or(Error::InvalidParam("exploitability evaluation is off".into()))
}

struct Cell<'a> {
    cfg: &'a ExperimentConfig,
    run_id: String,
    seed: u64,
}

fn run_cell(cell: &Cell, events: &mut dyn Write, summary: &mut RunSummary) -> Result<()> {
    let cfg = cell.cfg;
    let game = build_env(&cfg.env)?;
    let start = Instant::now();
    info!("run {} (seed {})", cell.run_id, cell.seed);
    writeln!(events, "{}", json!({"event": "run_start", "run_id": cell.run_id, "seed": cell.seed, "env": game.name()}))?;
    let train = &cfg.algo.train;
    let (trace, actors, potential) = match cfg.algo.name {
        AlgoName::Spotac => {
            let out = train_spotac(game.as_ref(), train, cell.seed)?;
            if cfg.run.checkpoints {
                let dir = run_dir(&cfg.run.out, &cell.run_id);
                fs::create_dir_all(&dir)?;
                for (i, a) in out.actors.actors.iter().enumerate() {
                    checkpoint::save(&a.mean_model, &dir.join(format!("actor_{i}.json")))?;
                }
                checkpoint::save(&out.critic.net, &dir.join("critic.json"))?;
            }
            (out.trace, Some(out.actors), out.potential)
        }
        AlgoName::Independent => {
            let out = train_independent(game.as_ref(), train, cell.seed)?;
            if cfg.run.checkpoints {
                let dir = run_dir(&cfg.run.out, &cell.run_id);
                fs::create_dir_all(&dir)?;
                for (i, a) in out.actors.actors.iter().enumerate() {
                    checkpoint::save(&a.mean_model, &dir.join(format!("actor_{i}.json")))?;
                }
            }
            (out.trace, Some(out.actors), None)
        }
        AlgoName::Spotq => {
            let m = match train.max_proxy {
                MaxProxy::Sampling { m } => m,
                MaxProxy::Actors => 64,
            };
            let out = train_spotq_continuous(game.as_ref(), train, m, cell.seed)?;
            if cfg.run.checkpoints {
                let dir = run_dir(&cfg.run.out, &cell.run_id);
                fs::create_dir_all(&dir)?;
                checkpoint::save(&out.policy.critic.net, &dir.join("critic.json"))?;
            }
            (out.trace, None, None)
        }
    };
    let report = match &actors {
        Some(a) => exploit(game.as_ref(), a, cfg, cell.seed)?,
        None => None,
    };
    let wall = |_: &TracePoint| -> u64 {
        if cfg.run.wall_clock {
            start.elapsed().as_millis() as u64
        } else {
            0
        }
    };
    let last = trace.len().saturating_sub(1);
    for (k, p) in trace.iter().enumerate() {
        writeln!(events, "{}", json!({"event": "trace", "run_id": cell.run_id, "point": p}))?;
        let row = MetricsRow {
            run_id: cell.run_id.clone(),
            seed: cell.seed,
            env: cfg.env.name().to_string(),
            algo: cfg.algo.name.as_str().to_string(),
            iteration: p.step,
            episodes: p.episodes,
            social_welfare: p.social_welfare,
            exploitability: match (&report, k == last) {
                (Some(r), true) => r.delta,
                _ => f64::NAN,
            },
            ne_gap: p.ne_gap,
            potential_residual: p.potential_residual,
            wall_ms: wall(p),
        };
        row.validate()?;
        summary.rows.push(row);
    }
    if let Some(r) = &report {
        writeln!(events, "{}", json!({"event": "exploitability", "run_id": cell.run_id, "report": r}))?;
        summary.exploitability.push((cell.run_id.clone(), r.clone()));
    }
    if let Some(model) = &potential {
        summary.potentials.push(PotentialSummary {
            run_id: cell.run_id.clone(),
            residual: trace.last().map_or(f64::NAN, |p| p.potential_residual),
            coefficients: model.coefficients(),
            max_disagreement: None,
        });
    }
    if cfg.algo.consensus {
        let est = estimate(cfg, cell.seed)?;
        summary.potentials.push(PotentialSummary {
            run_id: format!("{}:consensus", cell.run_id),
            residual: est["final_loss"].as_f64().unwrap_or(f64::NAN),
            coefficients: serde_json::from_value(est["coefficients"].clone())?,
            max_disagreement: est["max_disagreement"].as_f64(),
        });
    }
    writeln!(events, "{}", json!({"event": "run_end", "run_id": cell.run_id}))?;
    Ok(())
}

/// Runs every `(sweep value, seed)` cell of `cfg` in order and writes
/// `metrics.csv`, `events.jsonl`, `potential_report.json` and checkpoints
/// under `cfg.run.out`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunSummary> {
    let out = &cfg.run.out;
    fs::create_dir_all(out)?;
    let mut events = BufWriter::new(File::create(out.join("events.jsonl"))?);
    let mut summary = RunSummary::default();
    for (label, sub) in cfg.expand_sweep()? {
        for run in sub.runs_labelled(&label) {
            let cell = Cell {
                cfg: &sub,
                run_id: run.run_id,
                seed: run.seed,
            };
            run_cell(&cell, &mut events, &mut summary)?;
        }
    }
    events.flush()?;
    write_csv(BufWriter::new(File::create(out.join("metrics.csv"))?), &summary.rows, true)?;
    let report = File::create(out.join("potential_report.json"))?;
    serde_json::to_writer_pretty(BufWriter::new(report), &summary.potentials)?;
    Ok(summary)
}

#[derive(Clone, Debug, Serialize)]
pub struct GridOracle {
    /// Greedy joint action at the initial state.
    pub greedy: Vec<f64>,
    pub value: f64,
    /// Largest unilateral gain per agent (non-positive at a certificate).
    pub gains: Vec<f64>,
}

/// Value iteration on the potential of a game discretized on a uniform
/// scalar action grid at its initial state.
pub fn oracle_value_iteration(cfg: &ExperimentConfig, points: usize, seed: u64) -> Result<GridOracle> {
    let game = build_env(&cfg.env)?;
    if game.action_dims().iter().any(|&d| d != 1) {
        return Err(Error::InvalidParam("grid oracle needs scalar actions".into()));
    }
    let mut rng = substream(seed, "oracle");
    let s0 = game.initial_state(&mut rng);
    let (lo, hi) = game.action_bounds();
    let axes: Vec<Vec<Vec<f64>>> = (0..game.n_agents())
        .map(|i| {
            (0..points)
                .map(|k| vec![lo[i] + (hi[i] - lo[i]) * k as f64 / (points.max(2) - 1) as f64])
                .collect()
        })
        .collect();
    let grid = JointActionGrid::new(axes)?;
    let mdp = discretize(
        game.as_ref(),
        std::slice::from_ref(&s0),
        &grid,
        1,
        |s, a| game.potential(s, a).unwrap_or(f64::NAN),
        &mut rng,
    )?;
    if mdp.reward.iter().any(|r| r.is_nan()) {
        return Err(Error::InvalidParam(format!("{} has no closed-form potential", game.name())));
    }
    let vi = value_iteration(&mdp, 1e-12);
    Ok(GridOracle {
        greedy: grid.joint(vi.policy[0]),
        value: vi.values[0],
        gains: ne_certificate(&mdp, &vi.policy, 1e-12)?,
    })
}

/// Best-response dynamics equilibria of a routing config's network under
/// every flow/time model.
pub fn oracle_flows(cfg: &ExperimentConfig) -> Result<Vec<(FlowModel, TimeModel, FlowEquilibrium)>> {
    let EnvSpec::Routing(p) = &cfg.env else {
        return Err(Error::InvalidParam("flow oracle needs a routing env".into()));
    };
    let net = routing_net(p)?;
    let demands = p
        .demands
        .clone()
        .unwrap_or_else(|| vec![1.0 / p.agents.max(1) as f64; p.agents.max(1)]);
    let mut out = Vec::new();
    for model in [FlowModel::Wardrop, FlowModel::Atomic] {
        for time in [TimeModel::Static, TimeModel::Dynamic] {
            out.push((model, time, best_response_dynamics(&net, &demands, model, time, 1e-10, 100_000)?));
        }
    }
    Ok(out)
}
