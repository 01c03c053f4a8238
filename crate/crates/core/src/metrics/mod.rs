//! Evaluation: social welfare, exploitability, distance to a known NE and the
//! CSV row written by the harness.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{Episode, Game};
use crate::learners::{agent_returns, mean_and_se, train_best_response, ActorSet, BestResponseConfig, TrainConfig};
use crate::rng::substream;

/// One line of `metrics.csv`. Field order is the column order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub run_id: String,
    pub seed: u64,
    pub env: String,
    pub algo: String,
    pub iteration: usize,
    pub episodes: usize,
    pub social_welfare: f64,
    pub exploitability: f64,
    pub ne_gap: f64,
    pub potential_residual: f64,
    pub wall_ms: u64,
}

impl MetricsRow {
    pub const HEADER: [&'static str; 11] = [
        "run_id",
        "seed",
        "env",
        "algo",
        "iteration",
        "episodes",
        "social_welfare",
        "exploitability",
        "ne_gap",
        "potential_residual",
        "wall_ms",
    ];

    /// Everything except `exploitability`, `ne_gap` and `potential_residual`
    /// must be finite.
    pub fn validate(&self) -> Result<()> {
        if !self.social_welfare.is_finite() {
            return Err(Error::NonFinite {
                context: "social welfare",
                layer: 0,
            });
        }
        Ok(())
    }
}

/// Mean over episodes of the undiscounted team return.
pub fn social_welfare(episodes: &[Episode]) -> Result<f64> {
    if episodes.is_empty() {
        return Err(Error::Empty("episodes"));
    }
    let total: f64 = episodes
        .iter()
        .map(|ep| ep.iter().map(|t| t.rewards.iter().sum::<f64>()).sum::<f64>())
        .sum();
    Ok(total / episodes.len() as f64)
}

/// Largest sup-norm distance between an agent's deterministic action at the
/// initial state and its analytic NE action; NaN when none is known.
pub fn ne_gap(game: &dyn Game, actors: &ActorSet) -> Result<f64> {
    let Some(ne) = game.analytic_ne() else {
        return Ok(f64::NAN);
    };
    let mut rng = substream(0, "ne-gap");
    let s = game.initial_state(&mut rng);
    let a = actors.deterministic(&s)?;
    if a.len() != ne.len() {
        return Err(Error::dim("analytic NE", a.len(), ne.len()));
    }
    Ok(a.iter().zip(&ne).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExploitabilityReport {
    pub delta: f64,
    pub gains: Vec<f64>,
    /// Standard error of each gain (deviation and baseline errors combined).
    pub std_errs: Vec<f64>,
}

fn report(gains: Vec<f64>, std_errs: Vec<f64>) -> ExploitabilityReport {
    ExploitabilityReport {
        delta: gains.iter().sum::<f64>() / gains.len().max(1) as f64,
        gains,
        std_errs,
    }
}

/// `delta = mean_i (u_i(BR_i, pi_-i) - u_i(pi))` with learned best responses.
pub fn exploitability(
    game: &dyn Game,
    actors: &ActorSet,
    cfg: &TrainConfig,
    br: &BestResponseConfig,
    seed: u64,
) -> Result<ExploitabilityReport> {
    if br.steps == 0 || br.eval_episodes == 0 {
        return Err(Error::InvalidParam("best-response budget must be positive".into()));
    }
    let mut gains = Vec::new();
    let mut errs = Vec::new();
    for i in 0..actors.len() {
        let r = train_best_response(game, actors, i, cfg, br, seed)?;
        gains.push(r.gain());
        errs.push(r.br_std_err.hypot(r.current_std_err));
    }
    Ok(report(gains, errs))
}

/// Exploitability with the game's closed-form best response: agent `i`
/// answers the other agents' deterministic actions at each visited state.
/// Both sides are evaluated on the same random stream.
pub fn exploitability_analytic(
    game: &dyn Game,
    actors: &ActorSet,
    episodes: usize,
    seed: u64,
) -> Result<ExploitabilityReport> {
    if episodes == 0 {
        return Err(Error::InvalidParam("evaluation needs at least one episode".into()));
    }
    let layout = game.layout().clone();
    let mut gains = Vec::new();
    let mut errs = Vec::new();
    for i in 0..actors.len() {
        let name = format!("analytic-br{i}");
        let current = agent_returns(game, i, episodes, &mut substream(seed, &name), |s, r| actors.sample(s, r))?;
        let deviated = agent_returns(game, i, episodes, &mut substream(seed, &name), |s, r: &mut dyn RngCore| {
            let mut a = actors.sample(s, r)?;
            let det = actors.deterministic(s)?;
            let br = game
                .analytic_best_response(i, s, &det)
                .ok_or_else(|| Error::InvalidParam(format!("{} has no analytic best response", game.name())))?;
            layout.agent_mut(i, &mut a).copy_from_slice(&br);
            Ok(a)
        })?;
        let diffs: Vec<f64> = deviated.iter().zip(&current).map(|(d, c)| d - c).collect();
        let (gain, se) = mean_and_se(&diffs);
        gains.push(gain);
        errs.push(se);
    }
    Ok(report(gains, errs))
}

/// Writes rows with the fixed header.
pub fn write_csv<W: std::io::Write>(w: W, rows: &[MetricsRow], header: bool) -> Result<()> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    if header {
        out.write_record(MetricsRow::HEADER)?;
    }
    for row in rows {
        out.serialize(row)?;
    }
    out.flush()?;
    Ok(())
}
