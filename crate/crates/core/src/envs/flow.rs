//! Best-response dynamics on path flows of a routing network.

use serde::{Deserialize, Serialize};

use super::routing::RoutingNet;
use crate::error::{Error, Result};

/// Cost each agent minimizes when it best-responds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowModel {
    /// Every agent's commodity is made of infinitesimal users that each pick a
    /// cheapest path; the limit point is a Wardrop equilibrium.
    Wardrop,
    /// Each agent controls its whole commodity and pays `sum_e l_e(f_e) f_e^i`.
    Atomic,
}

/// Whether edges used at different steps congest each other.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeModel {
    /// Classic one-shot flow game.
    Static,
    /// Time-expanded: commodity advances one edge per step, so an edge is
    /// only shared by flows that reach it at the same step.
    Dynamic,
}

#[derive(Clone, Debug, Serialize)]
pub struct FlowEquilibrium {
    /// Source-to-sink paths as edge lists.
    pub paths: Vec<Vec<usize>>,
    /// `path_flows[i][p]`: agent `i`'s flow on path `p`.
    pub path_flows: Vec<Vec<f64>>,
    /// Total flow per edge, summed over steps in the dynamic model.
    pub edge_flows: Vec<f64>,
    /// Each agent's total latency cost.
    pub agent_costs: Vec<f64>,
    /// Sum of agent costs divided by total demand.
    pub mean_latency: f64,
    pub rounds: usize,
}

impl FlowEquilibrium {
    /// Share of the total demand routed along `path`.
    pub fn path_share(&self, path: &[usize]) -> f64 {
        let total: f64 = self.path_flows.iter().flatten().sum();
        let p = self.paths.iter().position(|q| q == path);
        p.map_or(0.0, |p| self.path_flows.iter().map(|f| f[p]).sum::<f64>() / total)
    }
}

struct Resources {
    /// Resource ids per path.
    members: Vec<Vec<usize>>,
    /// `(a, b)` per resource.
    coeffs: Vec<(f64, f64)>,
}

fn resources(net: &RoutingNet, paths: &[Vec<usize>], time: TimeModel) -> Resources {
    let n_edges = net.edges().len();
    let depth = paths.iter().map(Vec::len).max().unwrap_or(1);
    let slots = match time {
        TimeModel::Static => 1,
        TimeModel::Dynamic => depth,
    };
    let coeffs = (0..n_edges * slots)
        .map(|r| {
            let e = &net.edges()[r % n_edges];
            (e.a, e.b)
        })
        .collect();
    let members = paths
        .iter()
        .map(|p| {
            p.iter()
                .enumerate()
                .map(|(t, &e)| match time {
                    TimeModel::Static => e,
                    TimeModel::Dynamic => t * n_edges + e,
                })
                .collect()
        })
        .collect();
    Resources { members, coeffs }
}

/// Euclidean projection onto `{x >= 0, sum x = total}`.
fn project_simplex(v: &mut [f64], total: f64) {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut acc = 0.0;
    let mut theta = 0.0;
    for (k, &x) in u.iter().enumerate() {
        acc += x;
        let t = (acc - total) / (k + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    for x in v.iter_mut() {
        *x = (*x - theta).max(0.0);
    }
}

fn resource_load(res: &Resources, flows: &[f64]) -> Vec<f64> {
    let mut load = vec![0.0; res.coeffs.len()];
    for (p, &f) in flows.iter().enumerate() {
        for &r in &res.members[p] {
            load[r] += f;
        }
    }
    load
}

/// Exact best response of one agent to fixed background load `other`,
/// solved by projected gradient on its convex quadratic cost.
fn best_response(res: &Resources, model: FlowModel, other: &[f64], start: &[f64], demand: f64) -> Vec<f64> {
    let weight = match model {
        FlowModel::Atomic => 2.0,
        FlowModel::Wardrop => 1.0,
    };
    let a_max = res.coeffs.iter().map(|c| c.0).fold(0.0, f64::max);
    let n_paths = res.members.len();
    let max_len = res.members.iter().map(Vec::len).max().unwrap_or(1);
    let lipschitz = (weight * a_max * (n_paths * max_len) as f64).max(1e-9);
    let step = 1.0 / lipschitz;
    let mut x = start.to_vec();
    for _ in 0..100_000 {
        let own = resource_load(res, &x);
        let grad: Vec<f64> = res
            .members
            .iter()
            .map(|m| {
                m.iter()
                    .map(|&r| {
                        let (a, b) = res.coeffs[r];
                        match model {
                            FlowModel::Atomic => a * (other[r] + 2.0 * own[r]) + b,
                            FlowModel::Wardrop => a * (other[r] + own[r]) + b,
                        }
                    })
                    .sum()
            })
            .collect();
        let mut next: Vec<f64> = x.iter().zip(&grad).map(|(x, g)| x - step * g).collect();
        project_simplex(&mut next, demand);
        let change = next.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        x = next;
        if change < 1e-14 {
            break;
        }
    }
    x
}

/// Round-robin best-response dynamics from an even split over paths.
pub fn best_response_dynamics(
    net: &RoutingNet,
    demands: &[f64],
    model: FlowModel,
    time: TimeModel,
    tol: f64,
    max_rounds: usize,
) -> Result<FlowEquilibrium> {
    if demands.is_empty() || demands.iter().any(|&d| !(d > 0.0)) {
        return Err(Error::InvalidParam("demands must be positive".into()));
    }
    let paths = net.paths();
    let res = resources(net, &paths, time);
    let n_paths = paths.len();
    let mut flows: Vec<Vec<f64>> = demands.iter().map(|&d| vec![d / n_paths as f64; n_paths]).collect();
    let mut rounds = 0;
    while rounds < max_rounds {
        rounds += 1;
        let mut change: f64 = 0.0;
        for i in 0..demands.len() {
            let mut other = vec![0.0; res.coeffs.len()];
            for (j, f) in flows.iter().enumerate() {
                if j != i {
                    for (o, l) in other.iter_mut().zip(resource_load(&res, f)) {
                        *o += l;
                    }
                }
            }
            let br = best_response(&res, model, &other, &flows[i], demands[i]);
            change = change.max(br.iter().zip(&flows[i]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
            flows[i] = br;
        }
        if change < tol {
            break;
        }
    }
    let mut total_load = vec![0.0; res.coeffs.len()];
    for f in &flows {
        for (t, l) in total_load.iter_mut().zip(resource_load(&res, f)) {
            *t += l;
        }
    }
    let agent_costs: Vec<f64> = flows
        .iter()
        .map(|f| {
            resource_load(&res, f)
                .iter()
                .enumerate()
                .map(|(r, own)| (res.coeffs[r].0 * total_load[r] + res.coeffs[r].1) * own)
                .sum()
        })
        .collect();
    let n_edges = net.edges().len();
    let mut edge_flows = vec![0.0; n_edges];
    for (r, l) in total_load.iter().enumerate() {
        edge_flows[r % n_edges] += l;
    }
    let mean_latency = agent_costs.iter().sum::<f64>() / demands.iter().sum::<f64>();
    Ok(FlowEquilibrium {
        paths,
        path_flows: flows,
        edge_flows,
        agent_costs,
        mean_latency,
        rounds,
    })
}
