use std::cell::RefCell;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::model::PotentialModel;
use super::residual::{objective, reference_point, sample_probes, GradientSource, ResidualConfig};
use crate::error::{Error, Result};
use crate::game::Game;

/// Communication graph between agents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    Ring,
    Complete,
    Line,
    Custom(Vec<Vec<bool>>),
}

impl Topology {
    pub fn adjacency(&self, n: usize) -> Result<Vec<Vec<bool>>> {
        let mut adj = vec![vec![false; n]; n];
        let mut link = |i: usize, j: usize| {
            if i != j {
                adj[i][j] = true;
                adj[j][i] = true;
            }
        };
        match self {
            Topology::Ring => (0..n).for_each(|i| link(i, (i + 1) % n)),
            Topology::Line => (1..n).for_each(|i| link(i - 1, i)),
            Topology::Complete => (0..n).for_each(|i| (0..n).for_each(|j| link(i, j))),
            Topology::Custom(m) => {
                if m.len() != n || m.iter().any(|r| r.len() != n) {
                    return Err(Error::dim("adjacency matrix", n, m.len()));
                }
                for i in 0..n {
                    for j in 0..n {
                        if m[i][j] || m[j][i] {
                            link(i, j);
                        }
                    }
                }
            }
        }
        Ok(adj)
    }
}

fn connected(adj: &[Vec<bool>]) -> bool {
    let n = adj.len();
    if n == 0 {
        return false;
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(v) = stack.pop() {
        for u in 0..n {
            if adj[v][u] && !seen[u] {
                seen[u] = true;
                stack.push(u);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// Metropolis-Hastings weights `1 / (1 + max(deg_i, deg_j))` on the graph.
pub fn metropolis_weights(adj: &[Vec<bool>]) -> Result<Vec<Vec<f64>>> {
    if !connected(adj) {
        return Err(Error::Graph("communication graph is disconnected".into()));
    }
    let n = adj.len();
    let deg: Vec<usize> = adj.iter().map(|r| r.iter().filter(|&&b| b).count()).collect();
    let mut c = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i != j && adj[i][j] {
                c[i][j] = 1.0 / (1.0 + deg[i].max(deg[j]) as f64);
            }
        }
        c[i][i] = 1.0 - c[i].iter().sum::<f64>();
    }
    check_doubly_stochastic(&c)?;
    Ok(c)
}

pub fn check_doubly_stochastic(c: &[Vec<f64>]) -> Result<()> {
    let n = c.len();
    if n == 0 || c.iter().any(|r| r.len() != n) {
        return Err(Error::ConsensusMatrix("matrix must be square and non-empty".into()));
    }
    for i in 0..n {
        if c[i].iter().any(|&x| x < 0.0 || !x.is_finite()) {
            return Err(Error::ConsensusMatrix(format!("row {i} has a negative or non-finite entry")));
        }
        let row: f64 = c[i].iter().sum();
        let col: f64 = (0..n).map(|k| c[k][i]).sum();
        if (row - 1.0).abs() > 1e-9 || (col - 1.0).abs() > 1e-9 {
            return Err(Error::ConsensusMatrix(format!("row/column {i} sums to {row}/{col}")));
        }
    }
    Ok(())
}

/// Per-agent parameters and gradient trackers.
#[derive(Clone, Debug)]
pub struct ConsensusState {
    pub rho: Vec<Vec<f64>>,
    pub kappa: Vec<Vec<f64>>,
    pub alpha: f64,
    c: Vec<Vec<f64>>,
    grads: Vec<Vec<f64>>,
}

/// Local gradient oracle: `(agent, parameters) -> gradient`.
pub type GradOracle<'a> = dyn FnMut(usize, &[f64]) -> Result<Vec<f64>> + 'a;

impl ConsensusState {
    /// Starts the trackers at the local gradients, `kappa^i = grad g^i(rho^i)`.
    pub fn new(rho: Vec<Vec<f64>>, c: Vec<Vec<f64>>, alpha: f64, oracle: &mut GradOracle) -> Result<Self> {
        check_doubly_stochastic(&c)?;
        if rho.len() != c.len() {
            return Err(Error::dim("consensus agents", c.len(), rho.len()));
        }
        let grads = rho
            .iter()
            .enumerate()
            .map(|(i, r)| oracle(i, r))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            kappa: grads.clone(),
            rho,
            alpha,
            c,
            grads,
        })
    }

    pub fn matrix(&self) -> &[Vec<f64>] {
        &self.c
    }

    /// Local gradients at the current parameters.
    pub fn local_grads(&self) -> &[Vec<f64>] {
        &self.grads
    }

    pub fn max_disagreement(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.rho.len() {
            for j in i + 1..self.rho.len() {
                let d = self.rho[i]
                    .iter()
                    .zip(&self.rho[j])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                worst = worst.max(d);
            }
        }
        worst
    }

    /// `max_k |sum_i kappa^i_k - sum_i grad g^i(rho^i)_k|`.
    pub fn tracking_error(&self) -> f64 {
        let dim = self.kappa[0].len();
        (0..dim)
            .map(|k| {
                let a: f64 = self.kappa.iter().map(|v| v[k]).sum();
                let b: f64 = self.grads.iter().map(|v| v[k]).sum();
                (a - b).abs()
            })
            .fold(0.0, f64::max)
    }

    fn mix(&self, x: &[Vec<f64>], i: usize) -> Vec<f64> {
        let mut out = vec![0.0; x[0].len()];
        for (j, xj) in x.iter().enumerate() {
            let w = self.c[i][j];
            if w != 0.0 {
                for (o, v) in out.iter_mut().zip(xj) {
                    *o += w * v;
                }
            }
        }
        out
    }
}

/// One synchronous round:
/// `rho^i <- sum_j C_ij rho^j - alpha kappa^i`,
/// `kappa^i <- sum_j C_ij kappa^j + grad g^i(rho^i_new) - grad g^i(rho^i_old)`.
pub fn consensus_round(state: &ConsensusState, oracle: &mut GradOracle) -> Result<ConsensusState> {
    let n = state.rho.len();
    let rho: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut r = state.mix(&state.rho, i);
            for (r, k) in r.iter_mut().zip(&state.kappa[i]) {
                *r -= state.alpha * k;
            }
            r
        })
        .collect();
    let grads = rho
        .iter()
        .enumerate()
        .map(|(i, r)| oracle(i, r))
        .collect::<Result<Vec<_>>>()?;
    let kappa = (0..n)
        .map(|i| {
            let mut k = state.mix(&state.kappa, i);
            for ((k, new), old) in k.iter_mut().zip(&grads[i]).zip(&state.grads[i]) {
                *k += new - old;
            }
            k
        })
        .collect();
    Ok(ConsensusState {
        rho,
        kappa,
        alpha: state.alpha,
        c: state.c.clone(),
        grads,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConsensusConfig {
    pub topology: Topology,
    pub step: f64,
    pub rounds: usize,
    pub agreement_tol: f64,
    /// Fixed probes per agent.
    pub probes: usize,
    /// Half-width of the uniform perturbation applied to each agent's
    /// initial parameters.
    pub init_spread: f64,
}

impl Default for ConsensusConfig {
    fn default() -> Self {
        Self {
            topology: Topology::Ring,
            step: 1e-3,
            rounds: 5000,
            agreement_tol: 1e-3,
            probes: 64,
            init_spread: 0.5,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ConsensusEstimate {
    pub models: Vec<PotentialModel>,
    /// Max pairwise parameter distance per round.
    pub agreement: Vec<f64>,
    /// Tracking identity error per round.
    pub tracking: Vec<f64>,
    /// Mean local objective per round.
    pub loss: Vec<f64>,
}

/// Distributed estimation: agent `i` only evaluates its own residual on its own
/// probe set and exchanges parameters with graph neighbours.
pub fn estimate_potential_consensus(
    game: &dyn Game,
    source: &GradientSource,
    residual: &ResidualConfig,
    cfg: &ConsensusConfig,
    rng: &mut dyn RngCore,
) -> Result<ConsensusEstimate> {
    residual.validate()?;
    let n = game.n_agents();
    let c = metropolis_weights(&cfg.topology.adjacency(n)?)?;
    let input_dim = game.state_dim() + game.joint_action_dim();
    let template = PotentialModel::new(residual.model.build(input_dim, rng)?, game.state_dim(), game.joint_action_dim())?;
    let probes: Vec<_> = (0..n).map(|_| sample_probes(game, residual, cfg.probes, rng)).collect();
    let rho0: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            template
                .body
                .params()
                .iter()
                .map(|p| {
                    if cfg.init_spread > 0.0 {
                        p + rng.random_range(-cfg.init_spread..=cfg.init_spread)
                    } else {
                        *p
                    }
                })
                .collect()
        })
        .collect();
    let last_loss = RefCell::new(vec![0.0; n]);
    let mut oracle = |i: usize, rho: &[f64]| -> Result<Vec<f64>> {
        let mut m = template.clone();
        m.body.params_mut().copy_from_slice(rho);
        let (loss, grad) = objective(game, &[i], &probes[i], &m, source, residual)?;
        last_loss.borrow_mut()[i] = loss;
        Ok(grad)
    };
    let mut state = ConsensusState::new(rho0, c, cfg.step, &mut oracle)?;
    let mut agreement = vec![state.max_disagreement()];
    let mut tracking = vec![state.tracking_error()];
    let mut loss = Vec::new();
    for round in 0..cfg.rounds {
        state = consensus_round(&state, &mut oracle)?;
        let mean_loss = last_loss.borrow().iter().sum::<f64>() / n as f64;
        if !mean_loss.is_finite() || mean_loss > 1e6 {
            return Err(Error::Diverged {
                iteration: round,
                loss: mean_loss,
            });
        }
        loss.push(mean_loss);
        agreement.push(state.max_disagreement());
        tracking.push(state.tracking_error());
        let avg_grad = (0..state.grads[0].len())
            .map(|k| state.grads.iter().map(|g| g[k]).sum::<f64>() / n as f64)
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt();
        if avg_grad < residual.grad_tol && *agreement.last().unwrap() < cfg.agreement_tol * 1e-3 {
            break;
        }
    }
    let (s0, a0) = reference_point(game);
    let models = state
        .rho
        .iter()
        .map(|r| {
            let mut m = template.clone();
            m.body.params_mut().copy_from_slice(r);
            m.canonicalize(&s0, &a0)?;
            Ok(m)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConsensusEstimate {
        models,
        agreement,
        tracking,
        loss,
    })
}
