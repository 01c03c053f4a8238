//! JSON-in, JSON-out bindings for the static demo page in `www/`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use spg_core::envs::flow::{best_response_dynamics, FlowModel, TimeModel};
use spg_core::envs::{braess_network, Cournot, CournotParams};
use spg_core::game::{discretize, ne_certificate, value_iteration, Game, JointActionGrid};
use spg_core::potential::{nascent_bound_probe, NascentProbe};
use wasm_bindgen::prelude::*;

fn js_err(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&e.to_string())
}

fn to_json<T: Serialize>(v: &T) -> Result<String, JsValue> {
    serde_json::to_string(v).map_err(js_err)
}

#[derive(Serialize)]
struct CournotGrid {
    axis: Vec<f64>,
    /// Row-major potential values, `phi[i * points + j]` at `(axis[i], axis[j])`.
    phi: Vec<f64>,
    greedy: [f64; 2],
    gains: Vec<f64>,
    ne: f64,
}

/// Two-firm Cournot on a `points x points` action grid: potential surface,
/// value-iteration greedy joint action and its unilateral-deviation gains.
#[wasm_bindgen]
pub fn cournot_grid(points: usize, alpha: f64, beta: f64, cost: f64) -> Result<String, JsValue> {
    Ok(to_json(&cournot_grid_inner(points, alpha, beta, cost).map_err(js_err)?)?)
}

fn cournot_grid_inner(points: usize, alpha: f64, beta: f64, cost: f64) -> spg_core::Result<CournotGrid> {
    let game = Cournot::new(CournotParams {
        alpha,
        beta,
        gamma_cost: cost,
        ..CournotParams::default()
    })?;
    let points = points.clamp(2, 61);
    let grid = JointActionGrid::uniform_scalar(2, -1.0, 1.0, points)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let s0 = game.initial_state(&mut rng);
    let phi = |s: &[f64], a: &[f64]| game.potential(s, a).unwrap_or(f64::NAN);
    let mdp = discretize(&game, std::slice::from_ref(&s0), &grid, 1, phi, &mut rng)?;
    let vi = value_iteration(&mdp, 1e-12);
    let g = grid.joint(vi.policy[0]);
    Ok(CournotGrid {
        axis: (0..points).map(|k| grid.agent_action(0, k)[0]).collect(),
        phi: (0..grid.len()).map(|k| phi(&s0, &grid.joint(k))).collect(),
        greedy: [g[0], g[1]],
        gains: ne_certificate(&mdp, &vi.policy, 1e-12)?,
        ne: game.ne_quantity(),
    })
}

#[derive(Serialize)]
struct BraessRow {
    path: String,
    share: f64,
}

#[derive(Serialize)]
struct BraessResult {
    rows: Vec<BraessRow>,
    mean_latency: f64,
    rounds: usize,
}

/// Best-response dynamics on the Braess network. `model` is `wardrop` or
/// `atomic`; `time` is `static` or `dynamic`.
#[wasm_bindgen]
pub fn braess(agents: usize, model: &str, time: &str, shortcut: bool) -> Result<String, JsValue> {
    let model = match model {
        "wardrop" => FlowModel::Wardrop,
        "atomic" => FlowModel::Atomic,
        other => return Err(js_err(format!("unknown flow model {other}"))),
    };
    let time = match time {
        "static" => TimeModel::Static,
        "dynamic" => TimeModel::Dynamic,
        other => return Err(js_err(format!("unknown time model {other}"))),
    };
    let mut net = braess_network();
    if !shortcut {
        let e = net.edge_index("A", "B").ok_or_else(|| js_err("Braess network lacks A → B"))?;
        net = net.without_edge(e).map_err(js_err)?;
    }
    let n = agents.clamp(1, 8);
    let eq = best_response_dynamics(&net, &vec![1.0 / n as f64; n], model, time, 1e-10, 100_000).map_err(js_err)?;
    let rows = eq
        .paths
        .iter()
        .map(|p| BraessRow {
            path: std::iter::once(net.nodes()[net.source()].as_str())
                .chain(p.iter().map(|&e| net.nodes()[net.edges()[e].to].as_str()))
                .collect::<Vec<_>>()
                .join(" → "),
            share: eq.path_share(p),
        })
        .collect();
    to_json(&BraessResult {
        rows,
        mean_latency: eq.mean_latency,
        rounds: eq.rounds,
    })
}

/// Gap between a pure unilateral change in the Cournot potential and the same
/// change under Gaussian play, for each `sigma` in the comma-separated list.
#[wasm_bindgen]
pub fn nascent_gaps(sigmas: &str, samples: usize, seed: u32) -> Result<String, JsValue> {
    let sigmas: Vec<f64> = sigmas
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(js_err)?;
    let game = Cournot::new(CournotParams::default()).map_err(js_err)?;
    let ne = game.ne_quantity();
    let probe = NascentProbe {
        s: vec![0.0],
        base: vec![ne, ne],
        deviated: vec![0.6, ne],
        samples: samples.clamp(2, 200_000),
        squash: true,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed as u64);
    let rows = nascent_bound_probe(&game, |s, a| game.potential(s, a).unwrap_or(f64::NAN), &probe, &sigmas, &mut rng)
        .map_err(js_err)?;
    to_json(&rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_greedy_is_nearest_ne_point() {
        let g = cournot_grid_inner(11, 2.0, 1.0, 1.0).unwrap();
        assert!((g.greedy[0] - 0.4).abs() < 1e-9 && (g.greedy[1] - 0.4).abs() < 1e-9);
        assert!(g.gains.iter().all(|&x| x <= 1e-12));
        assert_eq!(g.phi.len(), 121);
    }

    #[test]
    fn braess_wardrop_uses_shortcut() {
        let out: serde_json::Value = serde_json::from_str(&braess(2, "wardrop", "static", true).unwrap()).unwrap();
        assert!((out["mean_latency"].as_f64().unwrap() - 2.0).abs() < 1e-6);
    }

    #[test]
    fn nascent_rows_per_sigma() {
        let out: serde_json::Value = serde_json::from_str(&nascent_gaps("0.5, 0.1", 500, 1).unwrap()).unwrap();
        assert_eq!(out.as_array().unwrap().len(), 2);
    }
}
