use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{ActionLayout, Game, RewardGrad};

/// Planar coordination-navigation parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NavParams {
    pub n_agents: usize,
    pub target: [f64; 2],
    pub alpha: f64,
    pub beta: f64,
    pub epsilon: f64,
    /// Per-agent constant bonus; a single value is broadcast.
    pub k: Vec<f64>,
    pub rho: [f64; 2],
    /// Symmetric PSD action-penalty matrix, row-major.
    pub m: [[f64; 2]; 2],
    pub dt: f64,
    pub horizon: usize,
    pub discount: f64,
}

impl Default for NavParams {
    fn default() -> Self {
        Self {
            n_agents: 2,
            target: [0.0, 0.0],
            alpha: 1.0,
            beta: 0.1,
            epsilon: 0.01,
            k: vec![1.0],
            rho: [0.0, 0.0],
            m: [[1.0, 0.0], [0.0, 1.0]],
            dt: 0.1,
            horizon: 25,
            discount: 0.99,
        }
    }
}

/// Point agents `x' = x + dt * a` that are drawn to a shared target, repel
/// each other and pay a quadratic action penalty.
#[derive(Clone, Debug)]
pub struct Nav {
    p: NavParams,
    layout: ActionLayout,
    low: Vec<f64>,
    high: Vec<f64>,
}

impl Nav {
    pub fn new(mut p: NavParams) -> Result<Self> {
        if p.n_agents == 0 {
            return Err(Error::InvalidParam("navigation needs at least one agent".into()));
        }
        if !(p.epsilon > 0.0) {
            return Err(Error::InvalidParam("epsilon must be positive".into()));
        }
        let m = p.m;
        if (m[0][1] - m[1][0]).abs() > 1e-12 || m[0][0] < 0.0 || m[1][1] < 0.0 || m[0][0] * m[1][1] - m[0][1] * m[1][0] < -1e-12 {
            return Err(Error::InvalidParam("action-penalty matrix must be symmetric PSD".into()));
        }
        if p.k.len() == 1 {
            p.k = vec![p.k[0]; p.n_agents];
        }
        if p.k.len() != p.n_agents {
            return Err(Error::dim("navigation constants K", p.n_agents, p.k.len()));
        }
        if p.horizon == 0 || !(0.0..1.0).contains(&p.discount) {
            return Err(Error::InvalidParam("navigation needs horizon >= 1 and discount in [0, 1)".into()));
        }
        let total = 2 * p.n_agents;
        Ok(Self {
            layout: ActionLayout::uniform(p.n_agents, 2),
            p,
            low: vec![-1.0; total],
            high: vec![1.0; total],
        })
    }

    fn pos<'a>(&self, s: &'a [f64], i: usize) -> &'a [f64] {
        &s[2 * i..2 * i + 2]
    }

    fn action_penalty(&self, ai: &[f64]) -> f64 {
        let d = [ai[0] - self.p.rho[0], ai[1] - self.p.rho[1]];
        let m = self.p.m;
        d[0] * (m[0][0] * d[0] + m[0][1] * d[1]) + d[1] * (m[1][0] * d[0] + m[1][1] * d[1])
    }

    fn action_penalty_grad(&self, ai: &[f64]) -> [f64; 2] {
        let d = [ai[0] - self.p.rho[0], ai[1] - self.p.rho[1]];
        let m = self.p.m;
        [
            (m[0][0] + m[0][0]) * d[0] + (m[0][1] + m[1][0]) * d[1],
            (m[1][0] + m[0][1]) * d[0] + (m[1][1] + m[1][1]) * d[1],
        ]
    }

    fn target_dist2(&self, x: &[f64]) -> f64 {
        (x[0] - self.p.target[0]).powi(2) + (x[1] - self.p.target[1]).powi(2)
    }

    /// `(|x_i - x_j|^2 + eps)^(-1/2)`.
    fn repulsion(&self, xi: &[f64], xj: &[f64]) -> f64 {
        let d2 = (xi[0] - xj[0]).powi(2) + (xi[1] - xj[1]).powi(2);
        (d2 + self.p.epsilon).powf(-0.5)
    }

    /// d/dxi of the repulsion term.
    fn repulsion_grad(&self, xi: &[f64], xj: &[f64]) -> [f64; 2] {
        let dx = [xi[0] - xj[0], xi[1] - xj[1]];
        let base = dx[0] * dx[0] + dx[1] * dx[1] + self.p.epsilon;
        let c = -base.powf(-1.5);
        [c * dx[0], c * dx[1]]
    }
}

impl Game for Nav {
    fn name(&self) -> String {
        format!("nav-{}", self.p.n_agents)
    }

    fn n_agents(&self) -> usize {
        self.p.n_agents
    }

    fn state_dim(&self) -> usize {
        2 * self.p.n_agents
    }

    fn layout(&self) -> &ActionLayout {
        &self.layout
    }

    fn action_bounds(&self) -> (&[f64], &[f64]) {
        (&self.low, &self.high)
    }

    fn state_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (vec![-2.0; self.state_dim()], vec![2.0; self.state_dim()])
    }

    fn horizon(&self) -> usize {
        self.p.horizon
    }

    fn discount(&self) -> f64 {
        self.p.discount
    }

    fn initial_state(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        (0..self.state_dim()).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn rewards(&self, s: &[f64], a: &[f64]) -> Vec<f64> {
        let n = self.p.n_agents;
        (0..n)
            .map(|i| {
                let xi = self.pos(s, i);
                let rep: f64 = (0..n).filter(|&j| j != i).map(|j| self.repulsion(xi, self.pos(s, j))).sum();
                self.p.k[i]
                    - self.p.alpha * self.target_dist2(xi)
                    - self.p.beta * rep
                    - self.action_penalty(self.layout.agent(i, a))
            })
            .collect()
    }

    fn transition(&self, s: &[f64], a: &[f64], _rng: &mut dyn RngCore) -> Vec<f64> {
        s.iter().zip(a).map(|(x, u)| x + self.p.dt * u).collect()
    }

    fn reward_grads(&self, s: &[f64], a: &[f64]) -> Option<Vec<RewardGrad>> {
        let n = self.p.n_agents;
        Some(
            (0..n)
                .map(|i| {
                    let mut d_action = vec![0.0; 2 * n];
                    d_action[2 * i..2 * i + 2]
                        .iter_mut()
                        .zip(self.action_penalty_grad(self.layout.agent(i, a)))
                        .for_each(|(d, g)| *d = -g);
                    let mut d_state = vec![0.0; 2 * n];
                    let xi = self.pos(s, i);
                    for c in 0..2 {
                        d_state[2 * i + c] -= 2.0 * self.p.alpha * (xi[c] - self.p.target[c]);
                    }
                    for j in (0..n).filter(|&j| j != i) {
                        let g = self.repulsion_grad(xi, self.pos(s, j));
                        for c in 0..2 {
                            d_state[2 * i + c] -= self.p.beta * g[c];
                            d_state[2 * j + c] += self.p.beta * g[c];
                        }
                    }
                    RewardGrad { d_action, d_state }
                })
                .collect(),
        )
    }

    fn potential(&self, s: &[f64], a: &[f64]) -> Option<f64> {
        let n = self.p.n_agents;
        let mut phi = 0.0;
        for i in 0..n {
            phi -= self.p.alpha * self.target_dist2(self.pos(s, i));
            phi -= self.action_penalty(self.layout.agent(i, a));
            for j in i + 1..n {
                phi -= self.p.beta * self.repulsion(self.pos(s, i), self.pos(s, j));
            }
        }
        Some(phi)
    }

    fn potential_grad(&self, s: &[f64], a: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
        let n = self.p.n_agents;
        let mut d_action = vec![0.0; 2 * n];
        let mut d_state = vec![0.0; 2 * n];
        for i in 0..n {
            let g = self.action_penalty_grad(self.layout.agent(i, a));
            d_action[2 * i] = -g[0];
            d_action[2 * i + 1] = -g[1];
            let xi = self.pos(s, i);
            for c in 0..2 {
                d_state[2 * i + c] -= 2.0 * self.p.alpha * (xi[c] - self.p.target[c]);
            }
            for j in i + 1..n {
                let g = self.repulsion_grad(xi, self.pos(s, j));
                for c in 0..2 {
                    d_state[2 * i + c] -= self.p.beta * g[c];
                    d_state[2 * j + c] += self.p.beta * g[c];
                }
            }
        }
        Some((d_action, d_state))
    }
}
