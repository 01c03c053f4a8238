use rand::{Rng, RngCore};
use serde::Serialize;

use super::{sample_joint_action, uniform_in_box, Game};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckReport {
    pub probes: usize,
    pub max_violation: f64,
    pub mean_violation: f64,
    pub tol: f64,
    pub pass: bool,
}

impl CheckReport {
    fn from_violations(v: &[f64], tol: f64) -> Self {
        let max_violation = v.iter().copied().fold(0.0, f64::max);
        let mean_violation = v.iter().sum::<f64>() / v.len().max(1) as f64;
        Self {
            probes: v.len(),
            max_violation,
            mean_violation,
            tol,
            pass: max_violation <= tol && v.iter().all(|x| x.is_finite()),
        }
    }
}

/// Unilateral-deviation test: for random `(s, a, i, a'_i)` compares the change
/// in agent `i`'s reward with the change in `phi`.
pub fn check_potentiality<F>(game: &dyn Game, phi: F, probes: usize, tol: f64, rng: &mut dyn RngCore) -> CheckReport
where
    F: Fn(&[f64], &[f64]) -> f64,
{
    assert!(probes >= 1, "need at least one probe");
    let layout = game.layout();
    let (lo, hi) = game.action_bounds();
    let violations: Vec<f64> = (0..probes)
        .map(|_| {
            let s = game.sample_probe_state(rng);
            let a = sample_joint_action(game, rng);
            let i = rng.random_range(0..game.n_agents());
            let r = layout.range(i);
            let mut dev = a.clone();
            dev[r.clone()].copy_from_slice(&uniform_in_box(&lo[r.clone()], &hi[r], rng));
            let dr = game.rewards(&s, &dev)[i] - game.rewards(&s, &a)[i];
            let dphi = phi(&s, &dev) - phi(&s, &a);
            (dr - dphi).abs()
        })
        .collect();
    CheckReport::from_violations(&violations, tol)
}

/// State-deviation test at a fixed joint action.
pub fn check_state_transitivity<F>(
    game: &dyn Game,
    phi: F,
    probes: usize,
    tol: f64,
    rng: &mut dyn RngCore,
) -> CheckReport
where
    F: Fn(&[f64], &[f64]) -> f64,
{
    assert!(probes >= 1, "need at least one probe");
    let violations: Vec<f64> = (0..probes)
        .map(|_| {
            let s = game.sample_probe_state(rng);
            let s2 = game.sample_probe_state(rng);
            let a = sample_joint_action(game, rng);
            let i = rng.random_range(0..game.n_agents());
            let dr = game.rewards(&s, &a)[i] - game.rewards(&s2, &a)[i];
            let dphi = phi(&s, &a) - phi(&s2, &a);
            (dr - dphi).abs()
        })
        .collect();
    CheckReport::from_violations(&violations, tol)
}
