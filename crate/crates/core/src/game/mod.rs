//! Continuous stochastic games, rollouts, replay storage, structural checks
//! and the tabular dual-MDP oracle.

mod buffer;
mod checks;
mod rollout;
mod tabular;

pub use buffer::ReplayBuffer;
pub use checks::{check_potentiality, check_state_transitivity, CheckReport};
pub use rollout::{rollout, rollout_with, write_jsonl, Episode};
pub use tabular::{
    discretize, ne_certificate, policy_evaluation, value_iteration, value_iteration_from, JointActionGrid,
    TabularMdp, ValueIterationResult,
};

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

/// Gradients of one agent's reward: with respect to the joint action and the state.
#[derive(Clone, Debug, PartialEq)]
pub struct RewardGrad {
    pub d_action: Vec<f64>,
    pub d_state: Vec<f64>,
}

/// A continuous stochastic game `<N, S, (A_i), P, (R_i), gamma>`.
///
/// Joint actions are flat vectors: agent `i` owns the slice given by
/// [`ActionLayout`]. Oracles are pure functions of their inputs and the
/// supplied random stream.
pub trait Game: Send + Sync {
    fn name(&self) -> String;
    fn n_agents(&self) -> usize;
    fn state_dim(&self) -> usize;
    fn layout(&self) -> &ActionLayout;
    /// Per-coordinate bounds of the joint action.
    fn action_bounds(&self) -> (&[f64], &[f64]);
    /// Box that state probes are drawn from.
    fn state_bounds(&self) -> (Vec<f64>, Vec<f64>);
    fn horizon(&self) -> usize;
    fn discount(&self) -> f64;

    fn initial_state(&self, rng: &mut dyn RngCore) -> Vec<f64>;
    fn rewards(&self, s: &[f64], a: &[f64]) -> Vec<f64>;
    fn transition(&self, s: &[f64], a: &[f64], rng: &mut dyn RngCore) -> Vec<f64>;

    /// Environment-side termination (besides the horizon).
    fn is_terminal(&self, _s: &[f64]) -> bool {
        false
    }

    fn reward_grads(&self, _s: &[f64], _a: &[f64]) -> Option<Vec<RewardGrad>> {
        None
    }

    fn potential(&self, _s: &[f64], _a: &[f64]) -> Option<f64> {
        None
    }

    /// `(d phi / d a, d phi / d s)`.
    fn potential_grad(&self, _s: &[f64], _a: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
        None
    }

    /// Closed-form equilibrium joint action, when one is known.
    fn analytic_ne(&self) -> Option<Vec<f64>> {
        None
    }

    /// Closed-form best response of agent `i` to the rest of `a`.
    fn analytic_best_response(&self, _i: usize, _s: &[f64], _a: &[f64]) -> Option<Vec<f64>> {
        None
    }

    fn sample_probe_state(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let (lo, hi) = self.state_bounds();
        uniform_in_box(&lo, &hi, rng)
    }

    fn action_dims(&self) -> &[usize] {
        &self.layout().dims
    }

    fn joint_action_dim(&self) -> usize {
        self.layout().total()
    }
}

pub(crate) fn uniform_in_box(lo: &[f64], hi: &[f64], rng: &mut dyn RngCore) -> Vec<f64> {
    lo.iter()
        .zip(hi)
        .map(|(&l, &h)| if h > l { rng.random_range(l..h) } else { l })
        .collect()
}

pub(crate) fn sample_joint_action(game: &dyn Game, rng: &mut dyn RngCore) -> Vec<f64> {
    let (lo, hi) = game.action_bounds();
    uniform_in_box(lo, hi, rng)
}

/// Per-agent offsets into a concatenated joint action.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionLayout {
    dims: Vec<usize>,
    offsets: Vec<usize>,
}

impl ActionLayout {
    pub fn new(dims: Vec<usize>) -> Self {
        assert!(dims.iter().all(|&d| d >= 1), "every agent needs at least one action dimension");
        let mut offsets = Vec::with_capacity(dims.len());
        let mut acc = 0;
        for &d in &dims {
            offsets.push(acc);
            acc += d;
        }
        Self { dims, offsets }
    }

    pub fn uniform(n_agents: usize, dim: usize) -> Self {
        Self::new(vec![dim; n_agents])
    }

    pub fn n_agents(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn total(&self) -> usize {
        self.dims.iter().sum()
    }

    pub fn range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i] + self.dims[i]
    }

    pub fn agent<'a>(&self, i: usize, joint: &'a [f64]) -> &'a [f64] {
        &joint[self.range(i)]
    }

    pub fn agent_mut<'a>(&self, i: usize, joint: &'a mut [f64]) -> &'a mut [f64] {
        &mut joint[self.range(i)]
    }

    pub fn concat(&self, parts: &[Vec<f64>]) -> Vec<f64> {
        debug_assert_eq!(parts.len(), self.dims.len());
        parts.iter().flatten().copied().collect()
    }
}
