use std::collections::{HashMap, VecDeque};
use std::path::Path;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{ActionLayout, Game, RewardGrad};

const BRAESS_JSON: &str = include_str!("../../fixtures/braess.json");

/// Edge with affine latency `a * x + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub a: f64,
    pub b: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeFile {
    from: String,
    to: String,
    a: f64,
    b: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetFile {
    nodes: Vec<String>,
    edges: Vec<EdgeFile>,
    source: String,
    sink: String,
}

/// Validated directed acyclic network with a single source and sink.
#[derive(Clone, Debug, PartialEq)]
pub struct RoutingNet {
    nodes: Vec<String>,
    edges: Vec<Edge>,
    source: usize,
    sink: usize,
    out_edges: Vec<Vec<usize>>,
}

impl RoutingNet {
    pub fn new(nodes: Vec<String>, edges: Vec<Edge>, source: usize, sink: usize) -> Result<Self> {
        let n = nodes.len();
        if n < 2 {
            return Err(Error::Graph("need at least two nodes".into()));
        }
        if source >= n || sink >= n || source == sink {
            return Err(Error::Graph("source and sink must be distinct existing nodes".into()));
        }
        let mut out_edges = vec![Vec::new(); n];
        for (k, e) in edges.iter().enumerate() {
            if e.from >= n || e.to >= n {
                return Err(Error::Graph(format!("edge {k} references a missing node")));
            }
            if e.from == e.to {
                return Err(Error::Graph(format!("edge {k} is a self loop")));
            }
            if !(e.a >= 0.0 && e.b >= 0.0 && e.a.is_finite() && e.b.is_finite()) {
                return Err(Error::Graph(format!("edge {k} needs finite non-negative latency coefficients")));
            }
            out_edges[e.from].push(k);
        }
        if !out_edges[sink].is_empty() {
            return Err(Error::Graph("the sink must not have outgoing edges".into()));
        }
        let net = Self {
            nodes,
            edges,
            source,
            sink,
            out_edges,
        };
        net.topological_order()?;
        let reach = net.reaches_sink();
        if let Some(v) = reach.iter().position(|r| !r) {
            return Err(Error::Graph(format!("node {} cannot reach the sink", net.nodes[v])));
        }
        Ok(net)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: NetFile = serde_json::from_str(text)?;
        let index: HashMap<&str, usize> = file.nodes.iter().enumerate().map(|(k, s)| (s.as_str(), k)).collect();
        if index.len() != file.nodes.len() {
            return Err(Error::Graph("duplicate node name".into()));
        }
        let lookup = |name: &str| {
            index
                .get(name)
                .copied()
                .ok_or_else(|| Error::Graph(format!("unknown node {name}")))
        };
        let edges = file
            .edges
            .iter()
            .map(|e| {
                Ok(Edge {
                    from: lookup(&e.from)?,
                    to: lookup(&e.to)?,
                    a: e.a,
                    b: e.b,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let (source, sink) = (lookup(&file.source)?, lookup(&file.sink)?);
        Self::new(file.nodes, edges, source, sink)
    }

    pub fn to_json(&self) -> String {
        let file = NetFile {
            nodes: self.nodes.clone(),
            edges: self
                .edges
                .iter()
                .map(|e| EdgeFile {
                    from: self.nodes[e.from].clone(),
                    to: self.nodes[e.to].clone(),
                    a: e.a,
                    b: e.b,
                })
                .collect(),
            source: self.nodes[self.source].clone(),
            sink: self.nodes[self.sink].clone(),
        };
        serde_json::to_string_pretty(&file).expect("network serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn source(&self) -> usize {
        self.source
    }

    pub fn sink(&self) -> usize {
        self.sink
    }

    pub fn out_edges(&self, v: usize) -> &[usize] {
        &self.out_edges[v]
    }

    pub fn node_index(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n == name)
    }

    /// Index of the edge `from -> to`, by node names.
    pub fn edge_index(&self, from: &str, to: &str) -> Option<usize> {
        let (f, t) = (self.node_index(from)?, self.node_index(to)?);
        self.edges.iter().position(|e| e.from == f && e.to == t)
    }

    /// Copy without the given edge. Fails if that breaks reachability.
    pub fn without_edge(&self, edge: usize) -> Result<Self> {
        let mut edges = self.edges.clone();
        edges.remove(edge);
        Self::new(self.nodes.clone(), edges, self.source, self.sink)
    }

    pub fn topological_order(&self) -> Result<Vec<usize>> {
        let n = self.nodes.len();
        let mut indeg = vec![0usize; n];
        for e in &self.edges {
            indeg[e.to] += 1;
        }
        let mut queue: VecDeque<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &k in &self.out_edges[v] {
                let t = self.edges[k].to;
                indeg[t] -= 1;
                if indeg[t] == 0 {
                    queue.push_back(t);
                }
            }
        }
        if order.len() != n {
            return Err(Error::Graph("network contains a cycle".into()));
        }
        Ok(order)
    }

    /// `reach[v]` is true when a directed path leads from `v` to the sink.
    pub fn reaches_sink(&self) -> Vec<bool> {
        let mut reach = vec![false; self.nodes.len()];
        reach[self.sink] = true;
        let mut stack = vec![self.sink];
        while let Some(v) = stack.pop() {
            for e in &self.edges {
                if e.to == v && !reach[e.from] {
                    reach[e.from] = true;
                    stack.push(e.from);
                }
            }
        }
        reach
    }

    /// All source-to-sink paths as edge-index lists.
    pub fn paths(&self) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut stack = vec![(self.source, Vec::new())];
        while let Some((v, path)) = stack.pop() {
            if v == self.sink {
                out.push(path);
                continue;
            }
            for &k in self.out_edges[v].iter().rev() {
                let mut p = path.clone();
                p.push(k);
                stack.push((self.edges[k].to, p));
            }
        }
        out
    }

    /// Longest source-to-sink path length in edges.
    pub fn depth(&self) -> usize {
        self.paths().iter().map(Vec::len).max().unwrap_or(0)
    }
}

/// Four-node Braess network with the zero-latency shortcut `A -> B`.
pub fn braess_network() -> RoutingNet {
    RoutingNet::from_json(BRAESS_JSON).expect("bundled Braess fixture is valid")
}

/// Layered DAG: one source, `layers - 2` hidden layers of `width` nodes, one
/// sink. Consecutive layers are joined by random edges with `a` in [0.5, 2]
/// and `b` in [0, 1]; every node gets at least one incoming and one outgoing edge.
pub fn random_layered_network(layers: usize, width: usize, seed: u64) -> Result<RoutingNet> {
    if layers < 2 {
        return Err(Error::InvalidParam("a layered network needs at least two layers".into()));
    }
    if width == 0 {
        return Err(Error::InvalidParam("layer width must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layer_nodes: Vec<Vec<usize>> = Vec::with_capacity(layers);
    let mut names = Vec::new();
    for l in 0..layers {
        let count = if l == 0 || l == layers - 1 { 1 } else { width };
        let ids = (0..count)
            .map(|k| {
                names.push(match l {
                    0 => "src".to_string(),
                    _ if l == layers - 1 => "sink".to_string(),
                    _ => format!("n{l}_{k}"),
                });
                names.len() - 1
            })
            .collect();
        layer_nodes.push(ids);
    }
    let mut edges = Vec::new();
    for w in layer_nodes.windows(2) {
        let (cur, next) = (&w[0], &w[1]);
        let mut has_in = vec![false; next.len()];
        for &u in cur {
            let mut picked: Vec<usize> = (0..next.len()).filter(|_| rng.random_bool(0.5)).collect();
            if picked.is_empty() {
                picked.push(rng.random_range(0..next.len()));
            }
            for k in picked {
                has_in[k] = true;
                edges.push((u, next[k]));
            }
        }
        for (k, covered) in has_in.into_iter().enumerate() {
            if !covered {
                let u = cur[rng.random_range(0..cur.len())];
                edges.push((u, next[k]));
            }
        }
    }
    let edges = edges
        .into_iter()
        .map(|(from, to)| Edge {
            from,
            to,
            a: rng.random_range(0.5..=2.0),
            b: rng.random_range(0.0..=1.0),
        })
        .collect();
    let sink = names.len() - 1;
    RoutingNet::new(names, edges, 0, sink)
}

/// Atomic splittable routing as a stochastic game.
///
/// The state stacks every agent's commodity distribution over nodes. Each
/// agent's action holds one logit per edge; at every node the logits of the
/// outgoing edges pass through a softmax to give split fractions. All mass
/// moves one edge per step and the sink absorbs.
#[derive(Clone, Debug)]
pub struct RoutingGame {
    net: RoutingNet,
    demands: Vec<f64>,
    horizon: usize,
    discount: f64,
    layout: ActionLayout,
    low: Vec<f64>,
    high: Vec<f64>,
}

/// Logits are confined to `[-LOGIT_BOUND, LOGIT_BOUND]`.
pub const LOGIT_BOUND: f64 = 5.0;

impl RoutingGame {
    pub fn new(net: RoutingNet, demands: Vec<f64>, horizon: usize, discount: f64) -> Result<Self> {
        if demands.is_empty() || demands.iter().any(|&d| !(d > 0.0) || !d.is_finite()) {
            return Err(Error::InvalidParam("routing demands must be positive".into()));
        }
        if horizon == 0 {
            return Err(Error::InvalidParam("horizon must be positive".into()));
        }
        if !(0.0..1.0).contains(&discount) {
            return Err(Error::InvalidParam(format!("discount {discount} outside [0, 1)")));
        }
        let n_edges = net.edges.len();
        let layout = ActionLayout::uniform(demands.len(), n_edges);
        let total = layout.total();
        Ok(Self {
            net,
            demands,
            horizon,
            discount,
            layout,
            low: vec![-LOGIT_BOUND; total],
            high: vec![LOGIT_BOUND; total],
        })
    }

    /// `n_agents` agents sharing a total demand of 1 equally.
    pub fn equal_split(net: RoutingNet, n_agents: usize, horizon: usize, discount: f64) -> Result<Self> {
        if n_agents == 0 {
            return Err(Error::InvalidParam("routing needs at least one agent".into()));
        }
        Self::new(net, vec![1.0 / n_agents as f64; n_agents], horizon, discount)
    }

    pub fn net(&self) -> &RoutingNet {
        &self.net
    }

    pub fn demands(&self) -> &[f64] {
        &self.demands
    }

    fn n_nodes(&self) -> usize {
        self.net.n_nodes()
    }

    /// Agent `i`'s node distribution inside the state vector.
    pub fn agent_mass<'a>(&self, i: usize, s: &'a [f64]) -> &'a [f64] {
        &s[i * self.n_nodes()..(i + 1) * self.n_nodes()]
    }

    /// Per-agent split fractions indexed by edge.
    pub fn splits(&self, a: &[f64]) -> Vec<Vec<f64>> {
        (0..self.demands.len())
            .map(|i| {
                let logits = self.layout.agent(i, a);
                let mut p = vec![0.0; self.net.edges.len()];
                for v in 0..self.n_nodes() {
                    let out = &self.net.out_edges[v];
                    if out.is_empty() {
                        continue;
                    }
                    let m = out.iter().map(|&k| logits[k]).fold(f64::NEG_INFINITY, f64::max);
                    let z: f64 = out.iter().map(|&k| (logits[k] - m).exp()).sum();
                    for &k in out {
                        p[k] = (logits[k] - m).exp() / z;
                    }
                }
                p
            })
            .collect()
    }

    /// Per-agent edge flows `f_e^i = w_i(from(e)) * split`.
    pub fn edge_flows(&self, s: &[f64], a: &[f64]) -> Vec<Vec<f64>> {
        self.splits(a)
            .into_iter()
            .enumerate()
            .map(|(i, p)| {
                let w = self.agent_mass(i, s);
                self.net
                    .edges
                    .iter()
                    .zip(p)
                    .map(|(e, p)| w[e.from] * p)
                    .collect()
            })
            .collect()
    }

    fn totals(&self, flows: &[Vec<f64>]) -> Vec<f64> {
        (0..self.net.edges.len()).map(|e| flows.iter().map(|f| f[e]).sum()).collect()
    }

    /// Mass that has reached the sink, summed over agents.
    pub fn sink_mass(&self, s: &[f64]) -> f64 {
        (0..self.demands.len()).map(|i| self.agent_mass(i, s)[self.net.sink]).sum()
    }

    /// Pulls per-agent flow gradients back to the logits and the state.
    fn chain(&self, s: &[f64], a: &[f64], g_flow: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
        let splits = self.splits(a);
        let n = self.n_nodes();
        let mut d_action = vec![0.0; self.layout.total()];
        let mut d_state = vec![0.0; s.len()];
        for (j, (p, g)) in splits.iter().zip(g_flow).enumerate() {
            let w = self.agent_mass(j, s);
            let block = self.layout.agent_mut(j, &mut d_action);
            for v in 0..n {
                let out = &self.net.out_edges[v];
                if out.is_empty() {
                    continue;
                }
                let mean: f64 = out.iter().map(|&k| p[k] * g[k]).sum();
                d_state[j * n + v] = mean;
                for &k in out {
                    block[k] = w[v] * p[k] * (g[k] - mean);
                }
            }
        }
        (d_action, d_state)
    }
}

impl Game for RoutingGame {
    fn name(&self) -> String {
        format!("routing-{}n-{}a", self.n_nodes(), self.demands.len())
    }

    fn n_agents(&self) -> usize {
        self.demands.len()
    }

    fn state_dim(&self) -> usize {
        self.demands.len() * self.n_nodes()
    }

    fn layout(&self) -> &ActionLayout {
        &self.layout
    }

    fn action_bounds(&self) -> (&[f64], &[f64]) {
        (&self.low, &self.high)
    }

    fn state_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let hi = self
            .demands
            .iter()
            .flat_map(|&d| std::iter::repeat_n(d, self.n_nodes()))
            .collect();
        (vec![0.0; self.state_dim()], hi)
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn discount(&self) -> f64 {
        self.discount
    }

    fn initial_state(&self, _rng: &mut dyn RngCore) -> Vec<f64> {
        let n = self.n_nodes();
        let mut s = vec![0.0; self.state_dim()];
        for (i, &d) in self.demands.iter().enumerate() {
            s[i * n + self.net.source] = d;
        }
        s
    }

    fn rewards(&self, s: &[f64], a: &[f64]) -> Vec<f64> {
        let flows = self.edge_flows(s, a);
        let total = self.totals(&flows);
        flows
            .iter()
            .map(|f| {
                -self
                    .net
                    .edges
                    .iter()
                    .enumerate()
                    .map(|(k, e)| (e.a * total[k] + e.b) * f[k])
                    .sum::<f64>()
            })
            .collect()
    }

    fn transition(&self, s: &[f64], a: &[f64], _rng: &mut dyn RngCore) -> Vec<f64> {
        let n = self.n_nodes();
        let flows = self.edge_flows(s, a);
        let mut next = vec![0.0; s.len()];
        for (i, f) in flows.iter().enumerate() {
            next[i * n + self.net.sink] = self.agent_mass(i, s)[self.net.sink];
            for (k, e) in self.net.edges.iter().enumerate() {
                next[i * n + e.to] += f[k];
            }
        }
        next
    }

    fn is_terminal(&self, s: &[f64]) -> bool {
        let total: f64 = self.demands.iter().sum();
        self.sink_mass(s) >= (1.0 - 1e-6) * total
    }

    fn reward_grads(&self, s: &[f64], a: &[f64]) -> Option<Vec<RewardGrad>> {
        let flows = self.edge_flows(s, a);
        let total = self.totals(&flows);
        let edges = &self.net.edges;
        Some(
            (0..self.demands.len())
                .map(|i| {
                    let g: Vec<Vec<f64>> = (0..self.demands.len())
                        .map(|j| {
                            edges
                                .iter()
                                .enumerate()
                                .map(|(k, e)| {
                                    let cross = -e.a * flows[i][k];
                                    if j == i {
                                        cross - (e.a * total[k] + e.b)
                                    } else {
                                        cross
                                    }
                                })
                                .collect()
                        })
                        .collect();
                    let (d_action, d_state) = self.chain(s, a, &g);
                    RewardGrad { d_action, d_state }
                })
                .collect(),
        )
    }

    fn potential(&self, s: &[f64], a: &[f64]) -> Option<f64> {
        let flows = self.edge_flows(s, a);
        let total = self.totals(&flows);
        let phi = self
            .net
            .edges
            .iter()
            .enumerate()
            .map(|(k, e)| {
                let sq: f64 = flows.iter().map(|f| f[k] * f[k]).sum();
                // sum_i f_i^2 + sum_{i<j} f_i f_j = (F^2 + sum_i f_i^2) / 2
                e.a * 0.5 * (total[k] * total[k] + sq) + e.b * total[k]
            })
            .sum::<f64>();
        Some(-phi)
    }

    fn potential_grad(&self, s: &[f64], a: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
        let flows = self.edge_flows(s, a);
        let total = self.totals(&flows);
        let g: Vec<Vec<f64>> = flows
            .iter()
            .map(|f| {
                self.net
                    .edges
                    .iter()
                    .enumerate()
                    .map(|(k, e)| -(e.a * (f[k] + total[k]) + e.b))
                    .collect()
            })
            .collect();
        Some(self.chain(s, a, &g))
    }

    /// Random commodity distributions, each summing to the agent's demand.
    fn sample_probe_state(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let n = self.n_nodes();
        let mut s = Vec::with_capacity(self.state_dim());
        for &d in &self.demands {
            let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 1e-3).collect();
            let z: f64 = w.iter().sum();
            s.extend(w.iter().map(|x| d * x / z));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_edge() -> RoutingNet {
        RoutingNet::new(
            vec!["s".into(), "t".into()],
            vec![Edge {
                from: 0,
                to: 1,
                a: 1.0,
                b: 0.0,
            }],
            0,
            1,
        )
        .unwrap()
    }

    #[test]
    fn single_edge_hand_values() {
        let g = RoutingGame::new(single_edge(), vec![0.5, 0.5], 10, 0.99).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = g.initial_state(&mut rng);
        let a = vec![0.0, 0.0];
        assert_eq!(g.rewards(&s, &a), vec![-0.5, -0.5]);
        assert!((g.potential(&s, &a).unwrap() + 0.75).abs() < 1e-15);
        let s2 = g.transition(&s, &a, &mut rng);
        assert!(g.is_terminal(&s2));
        assert_eq!(g.rewards(&s2, &a), vec![0.0, 0.0]);
    }

    #[test]
    fn braess_topology() {
        let net = braess_network();
        assert_eq!(net.edges().len(), 5);
        assert!(net.topological_order().is_ok());
        assert_eq!(net.paths().len(), 3);
        let round = RoutingNet::from_json(&net.to_json()).unwrap();
        assert_eq!(round, net);
    }

    #[test]
    fn cycles_rejected() {
        let edges = vec![
            Edge { from: 0, to: 1, a: 1.0, b: 0.0 },
            Edge { from: 1, to: 2, a: 1.0, b: 0.0 },
            Edge { from: 2, to: 1, a: 1.0, b: 0.0 },
            Edge { from: 1, to: 3, a: 1.0, b: 0.0 },
        ];
        let names = ["s", "x", "y", "t"].map(String::from).to_vec();
        assert!(matches!(RoutingNet::new(names, edges, 0, 3), Err(Error::Graph(_))));
    }

    #[test]
    fn dead_end_rejected() {
        let edges = vec![
            Edge { from: 0, to: 1, a: 1.0, b: 0.0 },
            Edge { from: 0, to: 2, a: 1.0, b: 0.0 },
        ];
        let names = ["s", "t", "dead"].map(String::from).to_vec();
        assert!(RoutingNet::new(names, edges, 0, 1).is_err());
    }

    #[test]
    fn two_layers_is_one_edge() {
        let net = random_layered_network(2, 1, 3).unwrap();
        assert_eq!(net.n_nodes(), 2);
        assert_eq!(net.edges().len(), 1);
    }

    #[test]
    fn layered_is_seeded_and_connected() {
        let a = random_layered_network(5, 6, 42).unwrap();
        assert_eq!(a, random_layered_network(5, 6, 42).unwrap());
        assert_eq!(a.n_nodes(), 20);
        assert!(a.reaches_sink().iter().all(|&r| r));
        assert!(a.edges().iter().all(|e| (0.5..=2.0).contains(&e.a) && (0.0..=1.0).contains(&e.b)));
    }
}
