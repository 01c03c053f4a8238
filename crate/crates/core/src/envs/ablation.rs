use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{ActionLayout, Game, RewardGrad};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationMode {
    /// `R_i + c * L_i(a_{-i})` with `L_i = sum_{j != i} sin(a_j[0])`. Stays potential.
    NoncoopPotential,
    /// `R_i + c * J_i(a)` with `J_i = a_i[0] * sin(a_{i+1}[0])` (cyclic). Not potential.
    NonPotential,
}

/// Base game with an extra reward term scaled by `c`.
///
/// `potential` keeps returning the base game's potential; in
/// [`AblationMode::NonPotential`] that function is no longer exact.
pub struct Ablation {
    base: Box<dyn Game>,
    mode: AblationMode,
    c: f64,
}

impl Ablation {
    pub fn new(base: Box<dyn Game>, mode: AblationMode, c: f64) -> Result<Self> {
        if !(c >= 0.0) || !c.is_finite() {
            return Err(Error::InvalidParam(format!("ablation coefficient must be >= 0, got {c}")));
        }
        Ok(Self { base, mode, c })
    }

    pub fn mode(&self) -> AblationMode {
        self.mode
    }

    pub fn coefficient(&self) -> f64 {
        self.c
    }

    pub fn base(&self) -> &dyn Game {
        self.base.as_ref()
    }

    fn lead(&self, a: &[f64], i: usize) -> f64 {
        a[self.base.layout().range(i).start]
    }

    /// Extra term per agent, unscaled.
    pub fn extra(&self, a: &[f64]) -> Vec<f64> {
        let n = self.base.n_agents();
        match self.mode {
            AblationMode::NoncoopPotential => {
                let all: f64 = (0..n).map(|j| self.lead(a, j).sin()).sum();
                (0..n).map(|i| all - self.lead(a, i).sin()).collect()
            }
            AblationMode::NonPotential => (0..n)
                .map(|i| self.lead(a, i) * self.lead(a, (i + 1) % n).sin())
                .collect(),
        }
    }

    fn keeps_equilibria(&self) -> bool {
        self.c == 0.0 || self.mode == AblationMode::NoncoopPotential
    }
}

impl Game for Ablation {
    fn name(&self) -> String {
        let tag = match self.mode {
            AblationMode::NoncoopPotential => "noncoop",
            AblationMode::NonPotential => "nonpot",
        };
        format!("{}+{tag}{}", self.base.name(), self.c)
    }

    fn n_agents(&self) -> usize {
        self.base.n_agents()
    }

    fn state_dim(&self) -> usize {
        self.base.state_dim()
    }

    fn layout(&self) -> &ActionLayout {
        self.base.layout()
    }

    fn action_bounds(&self) -> (&[f64], &[f64]) {
        self.base.action_bounds()
    }

    fn state_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        self.base.state_bounds()
    }

    fn horizon(&self) -> usize {
        self.base.horizon()
    }

    fn discount(&self) -> f64 {
        self.base.discount()
    }

    fn initial_state(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        self.base.initial_state(rng)
    }

    fn rewards(&self, s: &[f64], a: &[f64]) -> Vec<f64> {
        let mut r = self.base.rewards(s, a);
        if self.c != 0.0 {
            for (r, x) in r.iter_mut().zip(self.extra(a)) {
                *r += self.c * x;
            }
        }
        r
    }

    fn transition(&self, s: &[f64], a: &[f64], rng: &mut dyn RngCore) -> Vec<f64> {
        self.base.transition(s, a, rng)
    }

    fn is_terminal(&self, s: &[f64]) -> bool {
        self.base.is_terminal(s)
    }

    fn reward_grads(&self, s: &[f64], a: &[f64]) -> Option<Vec<RewardGrad>> {
        let mut grads = self.base.reward_grads(s, a)?;
        let n = self.base.n_agents();
        let idx = |j: usize| self.base.layout().range(j).start;
        for (i, g) in grads.iter_mut().enumerate() {
            match self.mode {
                AblationMode::NoncoopPotential => {
                    for j in (0..n).filter(|&j| j != i) {
                        g.d_action[idx(j)] += self.c * self.lead(a, j).cos();
                    }
                }
                AblationMode::NonPotential => {
                    let k = (i + 1) % n;
                    g.d_action[idx(i)] += self.c * self.lead(a, k).sin();
                    g.d_action[idx(k)] += self.c * self.lead(a, i) * self.lead(a, k).cos();
                }
            }
        }
        Some(grads)
    }

    fn potential(&self, s: &[f64], a: &[f64]) -> Option<f64> {
        self.base.potential(s, a)
    }

    fn potential_grad(&self, s: &[f64], a: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
        self.base.potential_grad(s, a)
    }

    fn analytic_ne(&self) -> Option<Vec<f64>> {
        if self.keeps_equilibria() {
            self.base.analytic_ne()
        } else {
            None
        }
    }

    fn analytic_best_response(&self, i: usize, s: &[f64], a: &[f64]) -> Option<Vec<f64>> {
        if self.keeps_equilibria() {
            self.base.analytic_best_response(i, s, a)
        } else {
            None
        }
    }

    fn sample_probe_state(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        self.base.sample_probe_state(rng)
    }
}

/// Identical-interest version of a potential game: every agent receives `phi`.
pub struct TeamGame {
    base: Box<dyn Game>,
}

impl TeamGame {
    pub fn new(base: Box<dyn Game>) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = base.initial_state(&mut rng);
        let a = vec![0.0; base.joint_action_dim()];
        if base.potential(&s, &a).is_none() {
            return Err(Error::InvalidParam(format!("{} has no analytic potential", base.name())));
        }
        Ok(Self { base })
    }

    fn phi(&self, s: &[f64], a: &[f64]) -> f64 {
        self.base.potential(s, a).expect("checked at construction")
    }
}

impl Game for TeamGame {
    fn name(&self) -> String {
        format!("team-{}", self.base.name())
    }

    fn n_agents(&self) -> usize {
        self.base.n_agents()
    }

    fn state_dim(&self) -> usize {
        self.base.state_dim()
    }

    fn layout(&self) -> &ActionLayout {
        self.base.layout()
    }

    fn action_bounds(&self) -> (&[f64], &[f64]) {
        self.base.action_bounds()
    }

    fn state_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        self.base.state_bounds()
    }

    fn horizon(&self) -> usize {
        self.base.horizon()
    }

    fn discount(&self) -> f64 {
        self.base.discount()
    }

    fn initial_state(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        self.base.initial_state(rng)
    }

    fn rewards(&self, s: &[f64], a: &[f64]) -> Vec<f64> {
        vec![self.phi(s, a); self.base.n_agents()]
    }

    fn transition(&self, s: &[f64], a: &[f64], rng: &mut dyn RngCore) -> Vec<f64> {
        self.base.transition(s, a, rng)
    }

    fn is_terminal(&self, s: &[f64]) -> bool {
        self.base.is_terminal(s)
    }

    fn reward_grads(&self, s: &[f64], a: &[f64]) -> Option<Vec<RewardGrad>> {
        let (d_action, d_state) = self.base.potential_grad(s, a)?;
        Some(vec![RewardGrad { d_action, d_state }; self.base.n_agents()])
    }

    fn potential(&self, s: &[f64], a: &[f64]) -> Option<f64> {
        self.base.potential(s, a)
    }

    fn potential_grad(&self, s: &[f64], a: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
        self.base.potential_grad(s, a)
    }

    fn sample_probe_state(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        self.base.sample_probe_state(rng)
    }
}
