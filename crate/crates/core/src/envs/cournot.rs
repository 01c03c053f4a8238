use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{ActionLayout, Game, RewardGrad};

/// Linear-demand Cournot oligopoly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CournotParams {
    pub n_agents: usize,
    pub alpha: f64,
    pub beta: f64,
    pub gamma_cost: f64,
    /// Per-agent action caps; quantities live in `[-cap, cap]`. A single value
    /// is broadcast to every agent.
    pub caps: Vec<f64>,
    pub discount: f64,
}

impl Default for CournotParams {
    fn default() -> Self {
        Self {
            n_agents: 2,
            alpha: 2.0,
            beta: 1.0,
            gamma_cost: 1.0,
            caps: vec![1.0],
            discount: 0.99,
        }
    }
}

impl CournotParams {
    pub fn with_agents(n_agents: usize) -> Self {
        Self {
            n_agents,
            ..Self::default()
        }
    }
}

/// Horizon-1 game with a single dummy state `[0]`.
#[derive(Clone, Debug)]
pub struct Cournot {
    params: CournotParams,
    layout: ActionLayout,
    low: Vec<f64>,
    high: Vec<f64>,
}

impl Cournot {
    pub fn new(mut params: CournotParams) -> Result<Self> {
        if params.n_agents == 0 {
            return Err(Error::InvalidParam("cournot needs at least one agent".into()));
        }
        if params.beta == 0.0 || !params.beta.is_finite() {
            return Err(Error::InvalidParam("cournot beta must be finite and nonzero".into()));
        }
        if params.caps.len() == 1 {
            params.caps = vec![params.caps[0]; params.n_agents];
        }
        if params.caps.len() != params.n_agents {
            return Err(Error::dim("cournot caps", params.n_agents, params.caps.len()));
        }
        if params.caps.iter().any(|&c| !(c > 0.0)) {
            return Err(Error::InvalidParam("cournot caps must be positive".into()));
        }
        if !(0.0..1.0).contains(&params.discount) {
            return Err(Error::InvalidParam(format!("discount {} outside [0, 1)", params.discount)));
        }
        let high = params.caps.clone();
        let low = high.iter().map(|c| -c).collect();
        Ok(Self {
            layout: ActionLayout::uniform(params.n_agents, 1),
            params,
            low,
            high,
        })
    }

    pub fn params(&self) -> &CournotParams {
        &self.params
    }

    /// Symmetric interior equilibrium quantity `(alpha - gamma) / (beta (N + 1))`.
    pub fn ne_quantity(&self) -> f64 {
        let p = &self.params;
        (p.alpha - p.gamma_cost) / (p.beta * (p.n_agents as f64 + 1.0))
    }

    /// `(alpha - gamma - beta * others) / (2 beta)`, clipped to the cap.
    pub fn best_response_quantity(&self, i: usize, others: f64) -> f64 {
        let p = &self.params;
        ((p.alpha - p.gamma_cost - p.beta * others) / (2.0 * p.beta)).clamp(self.low[i], self.high[i])
    }
}

impl Game for Cournot {
    fn name(&self) -> String {
        format!("cournot-{}", self.params.n_agents)
    }

    fn n_agents(&self) -> usize {
        self.params.n_agents
    }

    fn state_dim(&self) -> usize {
        1
    }

    fn layout(&self) -> &ActionLayout {
        &self.layout
    }

    fn action_bounds(&self) -> (&[f64], &[f64]) {
        (&self.low, &self.high)
    }

    fn state_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (vec![0.0], vec![0.0])
    }

    fn horizon(&self) -> usize {
        1
    }

    fn discount(&self) -> f64 {
        self.params.discount
    }

    fn initial_state(&self, _rng: &mut dyn RngCore) -> Vec<f64> {
        vec![0.0]
    }

    fn rewards(&self, _s: &[f64], a: &[f64]) -> Vec<f64> {
        let p = &self.params;
        let total: f64 = a.iter().sum();
        a.iter()
            .map(|&ai| ai * (p.alpha - p.beta * total) - p.gamma_cost * ai)
            .collect()
    }

    fn transition(&self, s: &[f64], _a: &[f64], _rng: &mut dyn RngCore) -> Vec<f64> {
        s.to_vec()
    }

    fn reward_grads(&self, _s: &[f64], a: &[f64]) -> Option<Vec<RewardGrad>> {
        let p = &self.params;
        let total: f64 = a.iter().sum();
        Some(
            (0..a.len())
                .map(|i| {
                    let d_action = (0..a.len())
                        .map(|j| {
                            if j == i {
                                p.alpha - p.beta * total - p.beta * a[i] - p.gamma_cost
                            } else {
                                -p.beta * a[i]
                            }
                        })
                        .collect();
                    RewardGrad {
                        d_action,
                        d_state: vec![0.0],
                    }
                })
                .collect(),
        )
    }

    fn potential(&self, _s: &[f64], a: &[f64]) -> Option<f64> {
        let p = &self.params;
        let sum: f64 = a.iter().sum();
        let sq: f64 = a.iter().map(|x| x * x).sum();
        // sum_{i<j} a_i a_j = (sum^2 - sum of squares) / 2
        let cross = 0.5 * (sum * sum - sq);
        Some((p.alpha - p.gamma_cost) * sum - p.beta * sq - p.beta * cross)
    }

    fn potential_grad(&self, _s: &[f64], a: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
        let p = &self.params;
        let sum: f64 = a.iter().sum();
        let d = a
            .iter()
            .map(|&ai| p.alpha - p.gamma_cost - p.beta * ai - p.beta * sum)
            .collect();
        Some((d, vec![0.0]))
    }

    fn analytic_ne(&self) -> Option<Vec<f64>> {
        let q = self.ne_quantity();
        Some((0..self.params.n_agents).map(|i| q.clamp(self.low[i], self.high[i])).collect())
    }

    fn analytic_best_response(&self, i: usize, _s: &[f64], a: &[f64]) -> Option<Vec<f64>> {
        let others: f64 = a.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, x)| x).sum();
        Some(vec![self.best_response_quantity(i, others)])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn duopoly() -> Cournot {
        Cournot::new(CournotParams::default()).unwrap()
    }

    #[test]
    fn zero_quantities_earn_nothing() {
        assert_eq!(duopoly().rewards(&[0.0], &[0.0, 0.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn hand_evaluated_point() {
        let g = duopoly();
        let t = 1.0 / 3.0;
        assert!((g.rewards(&[0.0], &[t, t])[0] - 1.0 / 9.0).abs() < 1e-15);
        assert!((g.potential(&[0.0], &[t, t]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn equilibrium_quantities() {
        assert!((duopoly().ne_quantity() - 1.0 / 3.0).abs() < 1e-15);
        let g4 = Cournot::new(CournotParams::with_agents(4)).unwrap();
        assert!((g4.ne_quantity() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn best_response_fixed_point_is_ne() {
        let g = Cournot::new(CournotParams::with_agents(3)).unwrap();
        let mut a = vec![0.0; 3];
        for _ in 0..200 {
            for i in 0..3 {
                a[i] = g.analytic_best_response(i, &[0.0], &a).unwrap()[0];
            }
        }
        for q in a {
            assert!((q - 0.25).abs() < 1e-10);
        }
    }

    #[test]
    fn monopoly_response() {
        assert_eq!(duopoly().best_response_quantity(0, 0.0), 0.5);
    }

    #[test]
    fn invalid_params_rejected() {
        let p = CournotParams {
            beta: 0.0,
            ..CournotParams::default()
        };
        assert!(Cournot::new(p).is_err());
        let p = CournotParams {
            caps: vec![1.0, 2.0, 3.0],
            ..CournotParams::default()
        };
        assert!(Cournot::new(p).is_err());
    }
}
