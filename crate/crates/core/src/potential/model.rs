use rand::{seq::SliceRandom, RngCore};
use serde::{Deserialize, Serialize};

use crate::approx::{DenseNet, Differentiable, OptimizerState, PolyBasis, PolyModel};
use crate::error::{Error, Result};
use crate::TransitionSample;

/// Scalar function of the concatenated input `[s; a]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Surrogate {
    Poly(PolyModel),
    Net(DenseNet),
}

/// Which function class to build.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SurrogateSpec {
    Poly { degree: usize },
    Net { hidden: Vec<usize> },
}

impl Default for SurrogateSpec {
    fn default() -> Self {
        SurrogateSpec::Poly { degree: 2 }
    }
}

impl SurrogateSpec {
    pub fn build(&self, input_dim: usize, rng: &mut dyn RngCore) -> Result<Surrogate> {
        Ok(match self {
            SurrogateSpec::Poly { degree } => Surrogate::Poly(PolyModel::zeros(PolyBasis::new(input_dim, *degree)?)),
            SurrogateSpec::Net { hidden } => {
                let mut net = DenseNet::mlp(input_dim, hidden, 1, rng)?;
                net.scale_last_layer(0.1);
                Surrogate::Net(net)
            }
        })
    }
}

impl Surrogate {
    pub fn input_dim(&self) -> usize {
        match self {
            Surrogate::Poly(m) => m.input_dim(),
            Surrogate::Net(n) => n.input_dim(),
        }
    }

    pub fn params(&self) -> &[f64] {
        match self {
            Surrogate::Poly(m) => m.params(),
            Surrogate::Net(n) => n.params(),
        }
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        match self {
            Surrogate::Poly(m) => m.params_mut(),
            Surrogate::Net(n) => n.params_mut(),
        }
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        match self {
            Surrogate::Poly(m) => m.value(x),
            Surrogate::Net(n) => Ok(n.forward(x)?[0]),
        }
    }

    pub fn input_grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            Surrogate::Poly(m) => {
                if x.len() != m.input_dim() {
                    return Err(Error::dim("surrogate input", m.input_dim(), x.len()));
                }
                Ok(m.basis().weighted_gradient(m.weights(), x))
            }
            Surrogate::Net(n) => n.input_gradient(x, &[1.0]),
        }
    }

    pub fn param_grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            Surrogate::Poly(m) => m.basis().features(x),
            Surrogate::Net(n) => Ok(n.gradients(x, &[1.0])?.0),
        }
    }

    /// Parameter gradient of the directional derivative `grad_x f(x) . v`.
    pub fn directional_param_grad(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        match self {
            Surrogate::Poly(m) => Ok(m.basis().directional_features(x, v)),
            Surrogate::Net(n) => {
                let norm = v.iter().map(|t| t * t).sum::<f64>().sqrt();
                if norm == 0.0 {
                    return Ok(vec![0.0; n.params().len()]);
                }
                let h = 1e-5 / norm;
                let shift = |sign: f64| -> Vec<f64> { x.iter().zip(v).map(|(x, v)| x + sign * h * v).collect() };
                let plus = n.gradients(&shift(1.0), &[1.0])?.0;
                let minus = n.gradients(&shift(-1.0), &[1.0])?.0;
                Ok(plus.iter().zip(&minus).map(|(p, m)| (p - m) / (2.0 * h)).collect())
            }
        }
    }

    /// Adds `delta` to the output everywhere.
    pub fn shift(&mut self, delta: f64) {
        match self {
            Surrogate::Poly(m) => m.params_mut()[0] += delta,
            Surrogate::Net(n) => {
                let last = n.params().len() - 1;
                n.params_mut()[last] += delta;
            }
        }
    }
}

fn concat(s: &[f64], a: &[f64]) -> Vec<f64> {
    let mut x = Vec::with_capacity(s.len() + a.len());
    x.extend_from_slice(s);
    x.extend_from_slice(a);
    x
}

/// Estimated potential `phi(s, a)` over the input `[s; a]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialModel {
    pub body: Surrogate,
    state_dim: usize,
    action_dim: usize,
}

/// One named polynomial coefficient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub term: String,
    pub value: f64,
}

impl PotentialModel {
    pub fn new(body: Surrogate, state_dim: usize, action_dim: usize) -> Result<Self> {
        if body.input_dim() != state_dim + action_dim {
            return Err(Error::dim("potential model input", state_dim + action_dim, body.input_dim()));
        }
        Ok(Self {
            body,
            state_dim,
            action_dim,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn input(&self, s: &[f64], a: &[f64]) -> Vec<f64> {
        concat(s, a)
    }

    pub fn value(&self, s: &[f64], a: &[f64]) -> Result<f64> {
        self.body.value(&concat(s, a))
    }

    /// `(d phi / d a, d phi / d s)`.
    pub fn gradients(&self, s: &[f64], a: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let g = self.body.input_grad(&concat(s, a))?;
        let (gs, ga) = g.split_at(self.state_dim);
        Ok((ga.to_vec(), gs.to_vec()))
    }

    /// Shifts the model so that `phi(s0, a0) = 0`.
    pub fn canonicalize(&mut self, s0: &[f64], a0: &[f64]) -> Result<()> {
        let v = self.value(s0, a0)?;
        self.body.shift(-v);
        Ok(())
    }

    fn coord_name(&self, k: usize) -> String {
        if k < self.state_dim {
            format!("s{k}")
        } else {
            format!("a{}", k - self.state_dim)
        }
    }

    /// Named monomial coefficients for polynomial bodies.
    pub fn coefficients(&self) -> Option<Vec<Coefficient>> {
        let Surrogate::Poly(m) = &self.body else {
            return None;
        };
        let basis = m.basis();
        let w = m.weights();
        let d = basis.input_dim();
        let mut out = vec![Coefficient {
            term: "1".into(),
            value: w[0],
        }];
        if basis.degree() >= 1 {
            for i in 0..d {
                out.push(Coefficient {
                    term: self.coord_name(i),
                    value: w[basis.linear_index(i)],
                });
            }
        }
        if basis.degree() >= 2 {
            for i in 0..d {
                for j in i..d {
                    out.push(Coefficient {
                        term: format!("{}*{}", self.coord_name(i), self.coord_name(j)),
                        value: w[basis.quadratic_index(i, j)],
                    });
                }
            }
        }
        Some(out)
    }

    /// Coefficient of `a_i` (joint action index).
    pub fn action_linear(&self, i: usize) -> Option<f64> {
        let Surrogate::Poly(m) = &self.body else { return None };
        Some(m.weights()[m.basis().linear_index(self.state_dim + i)])
    }

    /// Coefficient of `a_i a_j`.
    pub fn action_quadratic(&self, i: usize, j: usize) -> Option<f64> {
        let Surrogate::Poly(m) = &self.body else { return None };
        if m.basis().degree() < 2 {
            return None;
        }
        Some(m.weights()[m.basis().quadratic_index(self.state_dim + i, self.state_dim + j)])
    }
}

/// How reward models are fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardFitConfig {
    pub spec: SurrogateSpec,
    /// Fraction of samples held out for the reported MSE.
    pub holdout: f64,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
}

impl Default for RewardFitConfig {
    fn default() -> Self {
        Self {
            spec: SurrogateSpec::Poly { degree: 2 },
            holdout: 0.2,
            epochs: 200,
            batch: 64,
            lr: 1e-2,
        }
    }
}

/// Fitted model of one agent's reward.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardModel {
    pub body: Surrogate,
    pub state_dim: usize,
    pub loss_history: Vec<f64>,
    pub heldout_mse: f64,
}

impl RewardModel {
    pub fn value(&self, s: &[f64], a: &[f64]) -> Result<f64> {
        self.body.value(&concat(s, a))
    }

    /// `(d R / d a, d R / d s)`.
    pub fn gradients(&self, s: &[f64], a: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let g = self.body.input_grad(&concat(s, a))?;
        let (gs, ga) = g.split_at(self.state_dim);
        Ok((ga.to_vec(), gs.to_vec()))
    }
}

fn mse(body: &Surrogate, xs: &[Vec<f64>], ys: &[f64]) -> Result<f64> {
    if xs.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        let e = body.value(x)? - y;
        total += e * e;
    }
    Ok(total / xs.len() as f64)
}

/// Fits one reward model per agent on `(s, a) -> r_i`.
pub fn fit_reward_models(
    samples: &[TransitionSample],
    cfg: &RewardFitConfig,
    rng: &mut dyn RngCore,
) -> Result<Vec<RewardModel>> {
    let first = samples.first().ok_or(Error::Empty("reward-model training data"))?;
    let state_dim = first.s.len();
    let n_agents = first.rewards.len();
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(rng);
    let n_hold = ((samples.len() as f64) * cfg.holdout.clamp(0.0, 0.9)).floor() as usize;
    let (hold, train) = order.split_at(n_hold);
    if train.is_empty() {
        return Err(Error::Empty("reward-model training split"));
    }
    let xs = |idx: &[usize]| idx.iter().map(|&k| concat(&samples[k].s, &samples[k].a)).collect::<Vec<_>>();
    let (train_x, hold_x) = (xs(train), xs(hold));
    let input_dim = train_x[0].len();
    (0..n_agents)
        .map(|i| {
            let ys = |idx: &[usize]| idx.iter().map(|&k| samples[k].rewards[i]).collect::<Vec<_>>();
            let (train_y, hold_y) = (ys(train), ys(hold));
            let mut body = cfg.spec.build(input_dim, rng)?;
            let mut history = Vec::new();
            match &mut body {
                Surrogate::Poly(m) => {
                    *m = PolyModel::fit_least_squares(*m.basis(), &train_x, &train_y)?;
                }
                Surrogate::Net(_) => {
                    let mut opt = OptimizerState::adam(cfg.lr);
                    let mut idx: Vec<usize> = (0..train_x.len()).collect();
                    for _ in 0..cfg.epochs {
                        idx.shuffle(rng);
                        for chunk in idx.chunks(cfg.batch.max(1)) {
                            let mut grad = vec![0.0; body.params().len()];
                            for &k in chunk {
                                let e = body.value(&train_x[k])? - train_y[k];
                                for (g, p) in grad.iter_mut().zip(body.param_grad(&train_x[k])?) {
                                    *g += 2.0 * e * p / chunk.len() as f64;
                                }
                            }
                            opt.step(body.params_mut(), &grad)?;
                        }
                        history.push(mse(&body, &train_x, &train_y)?);
                    }
                }
            }
            if history.is_empty() {
                history.push(mse(&body, &train_x, &train_y)?);
            }
            let heldout_mse = mse(&body, &hold_x, &hold_y)?;
            Ok(RewardModel {
                body,
                state_dim,
                loss_history: history,
                heldout_mse,
            })
        })
        .collect()
}
