use rand::RngCore;

use super::{ActionLayout, Game};
use crate::error::{Error, Result};

/// Cartesian product of per-agent action lists. Joint indices are mixed-radix
/// with agent 0 most significant.
#[derive(Clone, Debug, PartialEq)]
pub struct JointActionGrid {
    per_agent: Vec<Vec<Vec<f64>>>,
    layout: ActionLayout,
}

impl JointActionGrid {
    pub fn new(per_agent: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        if per_agent.is_empty() || per_agent.iter().any(|a| a.is_empty()) {
            return Err(Error::Empty("action grid"));
        }
        let dims: Vec<usize> = per_agent.iter().map(|a| a[0].len()).collect();
        for (i, acts) in per_agent.iter().enumerate() {
            if let Some(bad) = acts.iter().find(|a| a.len() != dims[i]) {
                return Err(Error::dim("grid action", dims[i], bad.len()));
            }
        }
        Ok(Self {
            per_agent,
            layout: ActionLayout::new(dims),
        })
    }

    /// Evenly spaced scalar actions for every agent.
    pub fn uniform_scalar(n_agents: usize, low: f64, high: f64, points: usize) -> Result<Self> {
        if points == 0 {
            return Err(Error::Empty("action grid"));
        }
        let axis: Vec<Vec<f64>> = (0..points)
            .map(|k| {
                let t = if points == 1 { 0.5 } else { k as f64 / (points - 1) as f64 };
                vec![low + (high - low) * t]
            })
            .collect();
        Self::new(vec![axis; n_agents])
    }

    pub fn n_agents(&self) -> usize {
        self.per_agent.len()
    }

    pub fn agent_len(&self, i: usize) -> usize {
        self.per_agent[i].len()
    }

    pub fn agent_action(&self, i: usize, k: usize) -> &[f64] {
        &self.per_agent[i][k]
    }

    pub fn len(&self) -> usize {
        self.per_agent.iter().map(Vec::len).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn decompose(&self, mut idx: usize) -> Vec<usize> {
        let mut parts = vec![0; self.per_agent.len()];
        for i in (0..self.per_agent.len()).rev() {
            let n = self.per_agent[i].len();
            parts[i] = idx % n;
            idx /= n;
        }
        parts
    }

    pub fn compose(&self, parts: &[usize]) -> usize {
        parts
            .iter()
            .zip(&self.per_agent)
            .fold(0, |acc, (&k, acts)| acc * acts.len() + k)
    }

    pub fn joint(&self, idx: usize) -> Vec<f64> {
        let parts = self.decompose(idx);
        let pieces: Vec<Vec<f64>> = parts
            .iter()
            .enumerate()
            .map(|(i, &k)| self.per_agent[i][k].clone())
            .collect();
        self.layout.concat(&pieces)
    }

    /// Joint index with agent `i`'s component replaced by `k`.
    pub fn with_agent(&self, idx: usize, i: usize, k: usize) -> usize {
        let mut parts = self.decompose(idx);
        parts[i] = k;
        self.compose(&parts)
    }
}

/// Finite dual MDP: potential reward table, sparse transition rows, discount.
#[derive(Clone, Debug)]
pub struct TabularMdp {
    pub states: Vec<Vec<f64>>,
    pub actions: JointActionGrid,
    /// `reward[s * n_actions + a]`.
    pub reward: Vec<f64>,
    /// Optional per-agent reward tables with the same layout as `reward`.
    pub agent_rewards: Option<Vec<Vec<f64>>>,
    /// Sparse rows `(next_state, probability)` indexed like `reward`.
    pub transitions: Vec<Vec<(usize, f64)>>,
    pub discount: f64,
    /// Index of the zero-reward absorbing state, if one was added.
    pub terminal: Option<usize>,
}

impl TabularMdp {
    pub fn new(
        states: Vec<Vec<f64>>,
        actions: JointActionGrid,
        reward: Vec<f64>,
        transitions: Vec<Vec<(usize, f64)>>,
        discount: f64,
    ) -> Result<Self> {
        let n = states.len() * actions.len();
        if states.is_empty() {
            return Err(Error::Empty("state grid"));
        }
        if reward.len() != n {
            return Err(Error::dim("reward table", n, reward.len()));
        }
        if transitions.len() != n {
            return Err(Error::dim("transition table", n, transitions.len()));
        }
        for row in &transitions {
            let total: f64 = row.iter().map(|(_, p)| p).sum();
            if (total - 1.0).abs() > 1e-9 || row.iter().any(|&(j, p)| j >= states.len() || p < 0.0) {
                return Err(Error::InvalidParam(format!("transition row sums to {total}")));
            }
        }
        if !(0.0..1.0).contains(&discount) {
            return Err(Error::InvalidParam(format!("discount {discount} outside [0, 1)")));
        }
        Ok(Self {
            states,
            actions,
            reward,
            agent_rewards: None,
            transitions,
            discount,
            terminal: None,
        })
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn n_actions(&self) -> usize {
        self.actions.len()
    }

    #[inline]
    fn q(&self, rewards: &[f64], values: &[f64], s: usize, a: usize) -> f64 {
        let k = s * self.n_actions() + a;
        rewards[k]
            + self.discount * self.transitions[k].iter().map(|&(j, p)| p * values[j]).sum::<f64>()
    }

    /// Same MDP with a different potential table.
    pub fn with_reward(&self, reward: Vec<f64>) -> Result<Self> {
        if reward.len() != self.reward.len() {
            return Err(Error::dim("reward table", self.reward.len(), reward.len()));
        }
        let mut out = self.clone();
        out.reward = reward;
        Ok(out)
    }
}

fn nearest(grid: &[Vec<f64>], x: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (k, g) in grid.iter().enumerate() {
        let d: f64 = g.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
        if d < best_d {
            best_d = d;
            best = k;
        }
    }
    best
}

/// Monte-Carlo discretization onto a state grid and joint-action grid.
///
/// Next states snap to the nearest grid point; transitions into terminal
/// states (or out of horizon-1 games) go to an appended absorbing state with
/// zero reward. The reward table holds `reward(s, a)`, typically the potential.
pub fn discretize<F>(
    game: &dyn Game,
    state_grid: &[Vec<f64>],
    actions: &JointActionGrid,
    mc_samples: usize,
    reward: F,
    rng: &mut dyn RngCore,
) -> Result<TabularMdp>
where
    F: Fn(&[f64], &[f64]) -> f64,
{
    if state_grid.is_empty() {
        return Err(Error::Empty("state grid"));
    }
    if actions.is_empty() {
        return Err(Error::Empty("action grid"));
    }
    let mc = mc_samples.max(1);
    let n_grid = state_grid.len();
    let n_act = actions.len();
    let terminal = n_grid;
    let mut reward_table = Vec::with_capacity((n_grid + 1) * n_act);
    let mut agent_tables = vec![Vec::with_capacity((n_grid + 1) * n_act); game.n_agents()];
    let mut rows = Vec::with_capacity((n_grid + 1) * n_act);
    let mut uses_terminal = false;
    for s in state_grid {
        for a_idx in 0..n_act {
            let a = actions.joint(a_idx);
            reward_table.push(reward(s, &a));
            for (i, r) in game.rewards(s, &a).into_iter().enumerate() {
                agent_tables[i].push(r);
            }
            let mut counts = vec![0usize; n_grid + 1];
            for _ in 0..mc {
                let s2 = game.transition(s, &a, rng);
                let j = if game.horizon() <= 1 || game.is_terminal(&s2) {
                    uses_terminal = true;
                    terminal
                } else {
                    nearest(state_grid, &s2)
                };
                counts[j] += 1;
            }
            rows.push(
                counts
                    .into_iter()
                    .enumerate()
                    .filter(|&(_, c)| c > 0)
                    .map(|(j, c)| (j, c as f64 / mc as f64))
                    .collect::<Vec<_>>(),
            );
        }
    }
    let mut states = state_grid.to_vec();
    if uses_terminal {
        states.push(state_grid[0].iter().map(|_| f64::NAN).collect());
        for _ in 0..n_act {
            reward_table.push(0.0);
            for t in agent_tables.iter_mut() {
                t.push(0.0);
            }
            rows.push(vec![(terminal, 1.0)]);
        }
    }
    let mut mdp = TabularMdp::new(states, actions.clone(), reward_table, rows, game.discount())?;
    mdp.agent_rewards = Some(agent_tables);
    mdp.terminal = uses_terminal.then_some(terminal);
    Ok(mdp)
}

#[derive(Clone, Debug)]
pub struct ValueIterationResult {
    pub values: Vec<f64>,
    /// Greedy joint-action index per state (ties resolved to the lowest index).
    pub policy: Vec<usize>,
    /// Sup-norm change per sweep.
    pub deltas: Vec<f64>,
}

pub fn value_iteration(mdp: &TabularMdp, tol: f64) -> ValueIterationResult {
    value_iteration_from(mdp, tol, &vec![0.0; mdp.n_states()])
}

/// Iterates the Bellman optimality operator on the potential table until the
/// sup-norm change drops below `tol`.
pub fn value_iteration_from(mdp: &TabularMdp, tol: f64, init: &[f64]) -> ValueIterationResult {
    assert_eq!(init.len(), mdp.n_states());
    let mut values = init.to_vec();
    let mut deltas = Vec::new();
    loop {
        let next: Vec<f64> = (0..mdp.n_states())
            .map(|s| {
                (0..mdp.n_actions())
                    .map(|a| mdp.q(&mdp.reward, &values, s, a))
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        let delta = next
            .iter()
            .zip(&values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        values = next;
        deltas.push(delta);
        if delta < tol || deltas.len() >= 1_000_000 {
            break;
        }
    }
    let policy = greedy(mdp, &mdp.reward, &values);
    ValueIterationResult { values, policy, deltas }
}

fn greedy(mdp: &TabularMdp, rewards: &[f64], values: &[f64]) -> Vec<usize> {
    (0..mdp.n_states())
        .map(|s| {
            let mut best = 0;
            let mut best_q = f64::NEG_INFINITY;
            for a in 0..mdp.n_actions() {
                let q = mdp.q(rewards, values, s, a);
                if q > best_q {
                    best_q = q;
                    best = a;
                }
            }
            best
        })
        .collect()
}

/// Value of a deterministic joint policy under an arbitrary reward table.
pub fn policy_evaluation(mdp: &TabularMdp, rewards: &[f64], policy: &[usize], tol: f64) -> Vec<f64> {
    let mut values = vec![0.0; mdp.n_states()];
    loop {
        let next: Vec<f64> = (0..mdp.n_states()).map(|s| mdp.q(rewards, &values, s, policy[s])).collect();
        let delta = next
            .iter()
            .zip(&values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        values = next;
        if delta < tol {
            return values;
        }
    }
}

/// Largest gain, per agent, from unilaterally switching to its optimal tabular
/// policy while the others keep `policy`. Non-positive gains certify an MPE.
pub fn ne_certificate(mdp: &TabularMdp, policy: &[usize], tol: f64) -> Result<Vec<f64>> {
    let tables = mdp
        .agent_rewards
        .as_ref()
        .ok_or_else(|| Error::InvalidParam("MDP carries no per-agent rewards".into()))?;
    let mut gains = Vec::with_capacity(tables.len());
    for (i, table) in tables.iter().enumerate() {
        let current = policy_evaluation(mdp, table, policy, tol);
        let n_i = mdp.actions.agent_len(i);
        let mut best = vec![0.0; mdp.n_states()];
        loop {
            let next: Vec<f64> = (0..mdp.n_states())
                .map(|s| {
                    (0..n_i)
                        .map(|k| mdp.q(table, &best, s, mdp.actions.with_agent(policy[s], i, k)))
                        .fold(f64::NEG_INFINITY, f64::max)
                })
                .collect();
            let delta = next.iter().zip(&best).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            best = next;
            if delta < tol {
                break;
            }
        }
        gains.push(
            best.iter()
                .zip(&current)
                .map(|(b, c)| b - c)
                .fold(f64::NEG_INFINITY, f64::max),
        );
    }
    Ok(gains)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_state_two_actions(gamma: f64) -> TabularMdp {
        let grid = JointActionGrid::new(vec![vec![vec![0.0], vec![1.0]]]).unwrap();
        TabularMdp::new(vec![vec![0.0]], grid, vec![1.0, 2.0], vec![vec![(0, 1.0)]; 2], gamma).unwrap()
    }

    #[test]
    fn geometric_series_fixed_point() {
        let r = value_iteration(&one_state_two_actions(0.5), 1e-12);
        assert!((r.values[0] - 4.0).abs() < 1e-10);
        assert_eq!(r.policy, vec![1]);
    }

    #[test]
    fn myopic_case() {
        let r = value_iteration(&one_state_two_actions(0.0), 1e-12);
        assert_eq!(r.values[0], 2.0);
    }

    #[test]
    fn ties_pick_lowest_index() {
        let grid = JointActionGrid::new(vec![vec![vec![0.0], vec![1.0], vec![2.0]]]).unwrap();
        let mdp = TabularMdp::new(vec![vec![0.0]], grid, vec![1.0, 3.0, 3.0], vec![vec![(0, 1.0)]; 3], 0.9).unwrap();
        assert_eq!(value_iteration(&mdp, 1e-10).policy, vec![1]);
    }

    #[test]
    fn rows_must_be_stochastic() {
        let grid = JointActionGrid::new(vec![vec![vec![0.0]]]).unwrap();
        assert!(TabularMdp::new(vec![vec![0.0]], grid, vec![0.0], vec![vec![(0, 0.7)]], 0.5).is_err());
    }

    #[test]
    fn grid_index_round_trip() {
        let g = JointActionGrid::uniform_scalar(3, 0.0, 1.0, 4).unwrap();
        assert_eq!(g.len(), 64);
        for idx in 0..g.len() {
            assert_eq!(g.compose(&g.decompose(idx)), idx);
        }
        let idx = g.compose(&[1, 2, 3]);
        assert_eq!(g.joint(idx), vec![1.0 / 3.0, 2.0 / 3.0, 1.0]);
        assert_eq!(g.decompose(g.with_agent(idx, 1, 0)), vec![1, 0, 3]);
    }
}
