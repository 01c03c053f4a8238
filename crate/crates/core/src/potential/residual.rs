use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::model::{PotentialModel, RewardModel, SurrogateSpec};
use crate::approx::{OptimizerKind, OptimizerState, Squash};
use crate::error::{Error, Result};
use crate::game::{Game, RewardGrad};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualMode {
    /// Score-weighted derivative residual.
    Gradient,
    /// Squared mismatch of reward and potential differences under sampled
    /// unilateral deviations.
    Difference,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResidualConfig {
    pub mode: ResidualMode,
    pub model: SurrogateSpec,
    /// Probe raw means are drawn uniformly from `[-mean_box, mean_box]`.
    pub mean_box: f64,
    pub mc_actions: usize,
    /// Probes per iteration.
    pub batch: usize,
    pub iterations: usize,
    pub sigma_eps: f64,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    /// Draw fresh probes every iteration; otherwise one fixed probe set.
    pub resample: bool,
    pub grad_tol: f64,
    pub clip_norm: Option<f64>,
}

impl Default for ResidualConfig {
    fn default() -> Self {
        Self {
            mode: ResidualMode::Gradient,
            model: SurrogateSpec::Poly { degree: 2 },
            mean_box: 2.0,
            mc_actions: 1,
            batch: 64,
            iterations: 3000,
            sigma_eps: 0.1,
            lr: 1e-2,
            optimizer: OptimizerKind::Adam,
            resample: true,
            grad_tol: 1e-5,
            clip_norm: None,
        }
    }
}

impl ResidualConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mc_actions == 0 {
            return Err(Error::InvalidParam("mc_actions must be >= 1".into()));
        }
        if !(self.sigma_eps > 0.0) {
            return Err(Error::InvalidParam("sigma_eps must be positive".into()));
        }
        if self.batch == 0 {
            return Err(Error::InvalidParam("probe batch must be >= 1".into()));
        }
        if !(self.lr > 0.0) {
            return Err(Error::InvalidParam("learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// Where reward derivatives (and, in difference mode, reward values) come from.
pub enum GradientSource<'a> {
    /// The game's analytic oracles.
    Analytic(&'a dyn Game),
    /// Fitted reward models, one per agent.
    Models(&'a [RewardModel]),
}

impl GradientSource<'_> {
    pub fn reward_grad(&self, i: usize, s: &[f64], a: &[f64]) -> Result<RewardGrad> {
        match self {
            GradientSource::Analytic(g) => {
                let mut all = g.reward_grads(s, a).ok_or(Error::MissingGradients(i))?;
                if i >= all.len() {
                    return Err(Error::MissingGradients(i));
                }
                Ok(all.swap_remove(i))
            }
            GradientSource::Models(models) => {
                let m = models.get(i).ok_or(Error::MissingGradients(i))?;
                let (d_action, d_state) = m.gradients(s, a)?;
                Ok(RewardGrad { d_action, d_state })
            }
        }
    }

    pub fn reward(&self, i: usize, s: &[f64], a: &[f64]) -> Result<f64> {
        match self {
            GradientSource::Analytic(g) => Ok(g.rewards(s, a)[i]),
            GradientSource::Models(models) => models.get(i).ok_or(Error::MissingGradients(i))?.value(s, a),
        }
    }
}

/// One joint draw from the probe policies.
#[derive(Clone, Debug)]
pub struct ActionDraw {
    pub raw: Vec<f64>,
    pub action: Vec<f64>,
}

/// A probe point `(s, eta)` with its Monte-Carlo action draws.
#[derive(Clone, Debug)]
pub struct Probe {
    pub s: Vec<f64>,
    /// Joint raw (pre-squash) policy means.
    pub means: Vec<f64>,
    pub draws: Vec<ActionDraw>,
    /// Difference mode: deviating agent and its alternative draw.
    pub deviation: Option<(usize, ActionDraw)>,
}

pub(crate) fn action_squash(game: &dyn Game) -> Squash {
    let (lo, hi) = game.action_bounds();
    Squash::Tanh {
        low: lo.to_vec(),
        high: hi.to_vec(),
    }
}

fn draw(squash: &Squash, means: &[f64], sigma: f64, rng: &mut dyn RngCore) -> ActionDraw {
    let raw: Vec<f64> = means
        .iter()
        .map(|m| m + sigma * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let action = squash.apply(&raw);
    ActionDraw { raw, action }
}

/// Samples `count` probes from the uniform state box times the mean box.
pub fn sample_probes(game: &dyn Game, cfg: &ResidualConfig, count: usize, rng: &mut dyn RngCore) -> Vec<Probe> {
    let squash = action_squash(game);
    let dim = game.joint_action_dim();
    (0..count)
        .map(|_| {
            let s = game.sample_probe_state(rng);
            let means: Vec<f64> = (0..dim).map(|_| rng.random_range(-cfg.mean_box..=cfg.mean_box)).collect();
            let draws: Vec<ActionDraw> = (0..cfg.mc_actions)
                .map(|_| draw(&squash, &means, cfg.sigma_eps, rng))
                .collect();
            let deviation = match cfg.mode {
                ResidualMode::Gradient => None,
                ResidualMode::Difference => {
                    let i = rng.random_range(0..game.n_agents());
                    let r = game.layout().range(i);
                    let mut alt_means = means.clone();
                    for m in &mut alt_means[r.clone()] {
                        *m = rng.random_range(-cfg.mean_box..=cfg.mean_box);
                    }
                    let mut alt = draw(&squash, &alt_means, cfg.sigma_eps, rng);
                    let base = &draws[0];
                    // only agent i deviates
                    for k in 0..dim {
                        if !r.contains(&k) {
                            alt.raw[k] = base.raw[k];
                            alt.action[k] = base.action[k];
                        }
                    }
                    Some((i, alt))
                }
            };
            Probe {
                s,
                means,
                draws,
                deviation,
            }
        })
        .collect()
}

/// Residual `g^i` at a probe, flattened row-major as
/// `score (d_i) x [action block (d_i) ; state block (d_s)]`.
///
/// Returns the residual and, when `want_grad`, its contribution to the
/// parameter gradient of `|g^i|^2`.
fn residual_block(
    game: &dyn Game,
    i: usize,
    probe: &Probe,
    model: &PotentialModel,
    source: &GradientSource,
    sigma: f64,
    want_grad: bool,
) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
    let range = game.layout().range(i);
    let d_i = range.len();
    let d_s = game.state_dim();
    let width = d_i + d_s;
    let m = probe.draws.len() as f64;
    let var = sigma * sigma;
    let mut g = vec![0.0; d_i * width];
    let mut scores = Vec::with_capacity(probe.draws.len());
    for dr in &probe.draws {
        let score: Vec<f64> = range.clone().map(|k| (dr.raw[k] - probe.means[k]) / var).collect();
        let rg = source.reward_grad(i, &probe.s, &dr.action)?;
        let (pa, ps) = model.gradients(&probe.s, &dr.action)?;
        let block: Vec<f64> = range
            .clone()
            .map(|k| rg.d_action[k] - pa[k])
            .chain((0..d_s).map(|l| rg.d_state[l] - ps[l]))
            .collect();
        for (r, sc) in score.iter().enumerate() {
            for (c, b) in block.iter().enumerate() {
                g[r * width + c] += sc * b / m;
            }
        }
        scores.push(score);
    }
    if !want_grad {
        return Ok((g, None));
    }
    // d|g|^2/d rho = -(2/M) sum_m d/d rho [grad_x phi(x_m) . v_m]
    let mut grad = vec![0.0; model.body.params().len()];
    for (dr, score) in probe.draws.iter().zip(&scores) {
        let mut v = vec![0.0; d_s + game.joint_action_dim()];
        for (r, sc) in score.iter().enumerate() {
            for c in 0..d_i {
                v[d_s + range.start + c] += sc * g[r * width + c];
            }
            for l in 0..d_s {
                v[l] += sc * g[r * width + d_i + l];
            }
        }
        let x = model.input(&probe.s, &dr.action);
        for (t, p) in grad.iter_mut().zip(model.body.directional_param_grad(&x, &v)?) {
            *t -= 2.0 * p / m;
        }
    }
    Ok((g, Some(grad)))
}

/// Residual `g^i` for agent `i` at state `s` and joint raw policy means,
/// averaged over `cfg.mc_actions` joint action draws.
#[allow(clippy::too_many_arguments)]
pub fn residual_gi(
    game: &dyn Game,
    i: usize,
    s: &[f64],
    means: &[f64],
    model: &PotentialModel,
    source: &GradientSource,
    cfg: &ResidualConfig,
    rng: &mut dyn RngCore,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    if means.len() != game.joint_action_dim() {
        return Err(Error::dim("policy means", game.joint_action_dim(), means.len()));
    }
    let squash = action_squash(game);
    let probe = Probe {
        s: s.to_vec(),
        means: means.to_vec(),
        draws: (0..cfg.mc_actions).map(|_| draw(&squash, means, cfg.sigma_eps, rng)).collect(),
        deviation: None,
    };
    Ok(residual_block(game, i, &probe, model, source, cfg.sigma_eps, false)?.0)
}

/// Objective value and gradient restricted to the given agents, averaged over
/// probes and agents.
pub fn objective(
    game: &dyn Game,
    agents: &[usize],
    probes: &[Probe],
    model: &PotentialModel,
    source: &GradientSource,
    cfg: &ResidualConfig,
) -> Result<(f64, Vec<f64>)> {
    let mut loss = 0.0;
    let mut grad = vec![0.0; model.body.params().len()];
    let scale = 1.0 / (probes.len() * agents.len()).max(1) as f64;
    for probe in probes {
        match cfg.mode {
            ResidualMode::Gradient => {
                for &i in agents {
                    let (g, pg) = residual_block(game, i, probe, model, source, cfg.sigma_eps, true)?;
                    loss += scale * g.iter().map(|x| x * x).sum::<f64>();
                    for (t, p) in grad.iter_mut().zip(pg.expect("requested")) {
                        *t += scale * p;
                    }
                }
            }
            ResidualMode::Difference => {
                let (dev_agent, alt) = probe.deviation.as_ref().ok_or(Error::Empty("deviation probe"))?;
                if !agents.contains(dev_agent) {
                    continue;
                }
                let base = &probe.draws[0];
                let dr = source.reward(*dev_agent, &probe.s, &alt.action)? - source.reward(*dev_agent, &probe.s, &base.action)?;
                let x1 = model.input(&probe.s, &alt.action);
                let x0 = model.input(&probe.s, &base.action);
                let dphi = model.body.value(&x1)? - model.body.value(&x0)?;
                let d = dr - dphi;
                let per_agent = 1.0 / probes.len() as f64;
                loss += per_agent * d * d;
                let g1 = model.body.param_grad(&x1)?;
                let g0 = model.body.param_grad(&x0)?;
                for ((t, a), b) in grad.iter_mut().zip(g1).zip(g0) {
                    *t -= per_agent * 2.0 * d * (a - b);
                }
            }
        }
    }
    Ok((loss, grad))
}

/// Reference point for canonicalization: box midpoints.
pub(crate) fn reference_point(game: &dyn Game) -> (Vec<f64>, Vec<f64>) {
    let (slo, shi) = game.state_bounds();
    let (alo, ahi) = game.action_bounds();
    let mid = |lo: &[f64], hi: &[f64]| lo.iter().zip(hi).map(|(l, h)| 0.5 * (l + h)).collect::<Vec<_>>();
    (mid(&slo, &shi), mid(alo, ahi))
}

#[derive(Clone, Debug, Serialize)]
pub struct EstimationReport {
    pub mode: ResidualMode,
    pub iterations: usize,
    pub final_loss: f64,
    pub initial_loss: f64,
    pub converged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coefficients: Option<Vec<super::model::Coefficient>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub agreement: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub potentiality: Option<crate::game::CheckReport>,
}

#[derive(Clone, Debug)]
pub struct Estimate {
    pub model: PotentialModel,
    pub loss_trace: Vec<f64>,
    pub report: EstimationReport,
}

/// Stochastic descent on the averaged squared residual over all agents.
pub fn estimate_potential(
    game: &dyn Game,
    source: &GradientSource,
    cfg: &ResidualConfig,
    rng: &mut dyn RngCore,
) -> Result<Estimate> {
    cfg.validate()?;
    let body = cfg.model.build(game.state_dim() + game.joint_action_dim(), rng)?;
    let mut model = PotentialModel::new(body, game.state_dim(), game.joint_action_dim())?;
    let agents: Vec<usize> = (0..game.n_agents()).collect();
    let mut opt = OptimizerState::with_kind(cfg.optimizer, cfg.lr).with_clip(cfg.clip_norm);
    let mut probes = sample_probes(game, cfg, cfg.batch, rng);
    let mut trace = Vec::with_capacity(cfg.iterations);
    let mut converged = false;
    for it in 0..cfg.iterations {
        if cfg.resample && it > 0 {
            probes = sample_probes(game, cfg, cfg.batch, rng);
        }
        let (loss, grad) = objective(game, &agents, &probes, &model, source, cfg)?;
        if !loss.is_finite() || loss > 1e6 {
            return Err(Error::Diverged { iteration: it, loss });
        }
        trace.push(loss);
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm < cfg.grad_tol {
            converged = true;
            break;
        }
        opt.step(model.body.params_mut(), &grad)?;
    }
    let (s0, a0) = reference_point(game);
    model.canonicalize(&s0, &a0)?;
    let report = EstimationReport {
        mode: cfg.mode,
        iterations: trace.len(),
        final_loss: *trace.last().unwrap_or(&f64::NAN),
        initial_loss: *trace.first().unwrap_or(&f64::NAN),
        converged,
        coefficients: model.coefficients(),
        agreement: None,
        potentiality: None,
    };
    Ok(Estimate {
        model,
        loss_trace: trace,
        report,
    })
}
