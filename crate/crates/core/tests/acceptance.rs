//! Acceptance suite. Every test prints one `criterion N: PASS|FAIL` line to
//! stderr (uncaptured) and then asserts. Tests share a lock so the runtime
//! budgets are measured without interference from each other.

mod common;

use std::io::Write;
use std::sync::{Mutex, OnceLock};
use std::time::{Duration, Instant};

use common::{fd_gradient, rel_err, rng};
use rand::Rng;
use spg_core::approx::{Activation, DenseNet, Differentiable, GaussianPolicy, Squash};
use spg_core::envs::flow::{best_response_dynamics, FlowModel, TimeModel};
use spg_core::envs::{
    braess_network, random_layered_network, Ablation, AblationMode, Cournot, CournotParams, RoutingGame, TeamGame,
};
use spg_core::game::{
    check_potentiality, discretize, ne_certificate, rollout_with, value_iteration, Game, JointActionGrid, TabularMdp,
};
use spg_core::learners::{
    train_independent, train_spotac, ActorSet, BestResponseConfig, TrainConfig, TrainOutcome,
};
use spg_core::metrics::{exploitability, exploitability_analytic, ne_gap, social_welfare};
use spg_core::potential::{
    estimate_potential, estimate_potential_consensus, nascent_bound_probe, ConsensusConfig, GradientSource,
    NascentProbe, PotentialModel, ResidualConfig, Topology,
};

static LOCK: Mutex<()> = Mutex::new(());

fn serial() -> std::sync::MutexGuard<'static, ()> {
    LOCK.lock().unwrap_or_else(|e| e.into_inner())
}

fn verdict(n: u32, pass: bool, detail: String) {
    let word = if pass { "PASS" } else { "FAIL" };
    // written to the raw handle so the line survives test output capture
    let _ = writeln!(std::io::stderr(), "criterion {n:>2}: {word}  {detail}");
    assert!(pass, "criterion {n} failed: {detail}");
}

fn cournot(n: usize) -> Cournot {
    Cournot::new(CournotParams::with_agents(n)).unwrap()
}

/// Network and batch sizes used for every training run in this suite.
fn desk_cfg(steps: usize, analytic_phi: bool) -> TrainConfig {
    TrainConfig {
        steps,
        batch: 32,
        actor_hidden: vec![16, 16],
        critic_hidden: vec![32, 32],
        eval_interval: steps / 4,
        use_analytic_potential: analytic_phi,
        ..TrainConfig::default()
    }
}

fn seconds(d: Duration) -> String {
    format!("{:.1}s", d.as_secs_f64())
}

#[test]
fn criterion_01_potentiality_oracle() {
    let _g = serial();
    let t = Instant::now();
    let mut games: Vec<Box<dyn Game>> = [2, 3, 4, 6].iter().map(|&n| Box::new(cournot(n)) as Box<dyn Game>).collect();
    games.push(Box::new(RoutingGame::equal_split(braess_network(), 2, 3, 0.99).unwrap()));
    let layered = random_layered_network(5, 6, 0).unwrap();
    assert_eq!(layered.n_nodes(), 20);
    games.push(Box::new(RoutingGame::equal_split(layered, 3, 4, 0.99).unwrap()));
    games.push(Box::new(TeamGame::new(Box::new(RoutingGame::equal_split(braess_network(), 2, 3, 0.99).unwrap())).unwrap()));
    games.push(Box::new(TeamGame::new(Box::new(cournot(3))).unwrap()));

    let mut worst: f64 = 0.0;
    let mut all_pass = true;
    for (k, g) in games.iter().enumerate() {
        let rep = check_potentiality(g.as_ref(), |s, a| g.potential(s, a).unwrap(), 1000, 1e-9, &mut rng(k as u64));
        worst = worst.max(rep.max_violation);
        all_pass &= rep.pass;
    }
    let abl = Ablation::new(Box::new(cournot(2)), AblationMode::NonPotential, 0.5).unwrap();
    let bad = check_potentiality(&abl, |s, a| abl.potential(s, a).unwrap(), 1000, 1e-9, &mut rng(99));
    let elapsed = t.elapsed();
    verdict(
        1,
        all_pass && !bad.pass && elapsed < Duration::from_secs(10),
        format!(
            "{} potential games max violation {worst:.2e} <= 1e-9; non-potential ablation c=0.5 violation {:.3} fails; {}",
            games.len(),
            bad.max_violation,
            seconds(elapsed)
        ),
    );
}

fn cournot_estimate(seed: u64) -> PotentialModel {
    let g = cournot(2);
    estimate_potential(&g, &GradientSource::Analytic(&g), &ResidualConfig::default(), &mut rng(seed))
        .unwrap()
        .model
}

#[test]
fn criterion_02_cournot_coefficient_recovery() {
    let _g = serial();
    let t = Instant::now();
    let m = cournot_estimate(0);
    let (alpha, beta, cost) = (2.0, 1.0, 1.0);
    let checks = [
        ("a0", m.action_linear(0).unwrap(), alpha - cost),
        ("a1", m.action_linear(1).unwrap(), alpha - cost),
        ("a0^2", m.action_quadratic(0, 0).unwrap(), -beta),
        ("a1^2", m.action_quadratic(1, 1).unwrap(), -beta),
        ("a0*a1", m.action_quadratic(0, 1).unwrap(), -beta),
    ];
    let worst = checks
        .iter()
        .map(|(_, got, want)| ((got - want) / want).abs())
        .fold(0.0, f64::max);
    let elapsed = t.elapsed();
    let listing: Vec<String> = checks.iter().map(|(n, got, _)| format!("{n}={got:.4}")).collect();
    verdict(
        2,
        worst < 0.05 && elapsed < Duration::from_secs(120),
        format!("{}; worst relative error {:.2}% < 5%; {}", listing.join(" "), 100.0 * worst, seconds(elapsed)),
    );
}

#[test]
fn criterion_03_gauge() {
    let _g = serial();
    let a = cournot_estimate(1);
    let b = cournot_estimate(2);
    let mut diffs = Vec::new();
    let mut values = Vec::new();
    for i in 0..20 {
        for j in 0..20 {
            let act = [-1.0 + 2.0 * i as f64 / 19.0, -1.0 + 2.0 * j as f64 / 19.0];
            let va = a.value(&[0.0], &act).unwrap();
            values.push(va);
            diffs.push(va - b.value(&[0.0], &act).unwrap());
        }
    }
    let range = values.iter().copied().fold(f64::NEG_INFINITY, f64::max) - values.iter().copied().fold(f64::INFINITY, f64::min);
    let sd = common::std_dev(&diffs);
    verdict(
        3,
        sd < 0.05 * range,
        format!("std of difference {sd:.2e} < 5% of range {range:.3}"),
    );
}

struct NeRun {
    n: usize,
    analytic: bool,
    seed: u64,
    gap: f64,
    elapsed: Duration,
}

fn train_cournot(n: usize, analytic: bool, seed: u64) -> (TrainOutcome, Duration) {
    let t = Instant::now();
    let out = train_spotac(&cournot(n), &desk_cfg(20_000, analytic), seed).unwrap();
    (out, t.elapsed())
}

/// The converged duopoly actors reused by criterion 5.
fn duopoly_actors() -> &'static ActorSet {
    static CELL: OnceLock<ActorSet> = OnceLock::new();
    CELL.get_or_init(|| train_cournot(2, true, 0).0.actors)
}

#[test]
fn criterion_04_ne_convergence() {
    let _g = serial();
    let mut runs = Vec::new();
    for n in [2, 4] {
        for analytic in [true, false] {
            for seed in 0..3 {
                let (out, elapsed) = if n == 2 && analytic && seed == 0 {
                    let t = Instant::now();
                    let actors = duopoly_actors().clone();
                    (
                        TrainOutcome {
                            actors,
                            critic: spg_core::learners::CriticModel::mlp(1, 2, &[1], 0.5, &mut rng(0)).unwrap(),
                            potential: None,
                            trace: Vec::new(),
                        },
                        t.elapsed(),
                    )
                } else {
                    train_cournot(n, analytic, seed)
                };
                let gap = ne_gap(&cournot(n), &out.actors).unwrap();
                runs.push(NeRun {
                    n,
                    analytic,
                    seed,
                    gap,
                    elapsed,
                });
            }
        }
    }
    let ok = |r: &NeRun| r.gap < if r.analytic { 0.05 } else { 0.08 } && r.elapsed < Duration::from_secs(300);
    let worst_a = runs.iter().filter(|r| r.analytic).map(|r| r.gap).fold(0.0, f64::max);
    let worst_e = runs.iter().filter(|r| !r.analytic).map(|r| r.gap).fold(0.0, f64::max);
    let slowest = runs.iter().map(|r| r.elapsed).max().unwrap();
    for r in runs.iter().filter(|r| !ok(r)) {
        let _ = writeln!(
            std::io::stderr(),
            "  N={} analytic={} seed={} ne_gap={:.4} {}",
            r.n,
            r.analytic,
            r.seed,
            r.gap,
            seconds(r.elapsed)
        );
    }
    verdict(
        4,
        runs.iter().all(ok),
        format!(
            "{} runs at 2e4 steps, worst ne_gap analytic {worst_a:.4} < 0.05, estimated {worst_e:.4} < 0.08; slowest run {}",
            runs.len(),
            seconds(slowest)
        ),
    );
}

#[test]
fn criterion_05_exploitability_at_ne() {
    let _g = serial();
    let g = cournot(2);
    let rep = exploitability_analytic(&g, duopoly_actors(), 200, 0).unwrap();
    verdict(
        5,
        rep.delta.abs() < 0.02,
        format!("analytic-BR delta {:.5} (gains {:?}) |delta| < 0.02", rep.delta, rep.gains),
    );
}

#[test]
fn criterion_06_braess_equilibrium() {
    let _g = serial();
    let net = braess_network();
    let ab = net.edge_index("A", "B").unwrap();
    let game = RoutingGame::equal_split(net.clone(), 2, net.depth(), 0.99).unwrap();
    let cfg = desk_cfg(20_000, true);
    let out = train_spotac(&game, &cfg, 0).unwrap();

    // share of the commodity that crosses the shortcut over one deterministic episode
    let mut s = game.initial_state(&mut rng(0));
    let mut share = 0.0;
    for _ in 0..game.horizon() {
        let a = out.actors.deterministic(&s).unwrap();
        share += game.edge_flows(&s, &a).iter().map(|f| f[ab]).sum::<f64>();
        s = game.transition(&s, &a, &mut rng(0));
    }
    let oracle = best_response_dynamics(&net, game.demands(), FlowModel::Atomic, TimeModel::Dynamic, 1e-12, 10_000).unwrap();

    let episodes = rollout_with(&game, 100, &mut rng(1), |s, r| out.actors.sample(s, r)).unwrap();
    let mean_return = social_welfare(&episodes).unwrap() / game.n_agents() as f64;
    let br = BestResponseConfig {
        steps: 5000,
        eval_episodes: 100,
    };
    let rep = exploitability(&game, &out.actors, &cfg, &br, 0).unwrap();
    verdict(
        6,
        share >= 0.9 && rep.delta < 0.05 * mean_return.abs(),
        format!(
            "shortcut share {share:.3} (need >= 0.9; dynamic atomic best-response oracle gives {:.3}); learned-BR delta {:.4} vs 0.05*|mean return| = {:.4}",
            oracle.edge_flows[ab],
            rep.delta,
            0.05 * mean_return.abs()
        ),
    );
}

#[test]
fn criterion_07_dual_mdp_certificate() {
    let _g = serial();
    let g = cournot(2);
    let grid = JointActionGrid::uniform_scalar(2, -1.0, 1.0, 11).unwrap();
    let mdp = discretize(&g, &[vec![0.0]], &grid, 1, |s, a| g.potential(s, a).unwrap(), &mut rng(0)).unwrap();
    let vi = value_iteration(&mdp, 1e-12);
    let gains = ne_certificate(&mdp, &vi.policy, 1e-12).unwrap();
    let greedy = grid.joint(vi.policy[0]);
    let axis: Vec<f64> = (0..11).map(|k| grid.agent_action(0, k)[0]).collect();
    let nearest = axis
        .iter()
        .copied()
        .min_by(|x, y| (x - g.ne_quantity()).abs().total_cmp(&(y - g.ne_quantity()).abs()))
        .unwrap();
    let on_nearest = greedy.iter().all(|q| (q - nearest).abs() < 1e-12);
    verdict(
        7,
        gains.iter().all(|&x| x <= 1e-12) && on_nearest,
        format!("greedy {greedy:.3?}, nearest grid point to NE {nearest:.3}; best deviation gains {gains:?}"),
    );
}

fn random_mdp(seed: u64) -> TabularMdp {
    let mut r = rng(seed);
    let n_states = r.random_range(3..8);
    let grid = JointActionGrid::uniform_scalar(2, -1.0, 1.0, 3).unwrap();
    let states: Vec<Vec<f64>> = (0..n_states).map(|k| vec![k as f64]).collect();
    let cells = n_states * grid.len();
    let reward = (0..cells).map(|_| r.random_range(-1.0..1.0)).collect();
    let transitions = (0..cells)
        .map(|_| {
            let w: Vec<f64> = (0..n_states).map(|_| r.random::<f64>()).collect();
            let z: f64 = w.iter().sum();
            w.into_iter().enumerate().map(|(j, p)| (j, p / z)).collect()
        })
        .collect();
    TabularMdp::new(states, grid, reward, transitions, 0.9).unwrap()
}

#[test]
fn criterion_08_value_error_bound() {
    let _g = serial();
    let gamma: f64 = 0.9;
    let factor = (2.0 - gamma) / (1.0 - gamma);
    let mut violations = 0;
    let mut worst_ratio: f64 = 0.0;
    for game in 0..10 {
        let mdp = random_mdp(game);
        let base = value_iteration(&mdp, 1e-13).values;
        for eps in [0.01, 0.1] {
            let mut r = rng(1000 + game);
            let mut noise: Vec<f64> = mdp.reward.iter().map(|_| r.random_range(-1.0..1.0)).collect();
            // pin the sup norm of the perturbation at exactly eps
            noise[r.random_range(0..mdp.reward.len())] = 1.0;
            let perturbed: Vec<f64> = mdp.reward.iter().zip(&noise).map(|(x, n)| x + eps * n).collect();
            let vals = value_iteration(&mdp.with_reward(perturbed).unwrap(), 1e-13).values;
            let change = base.iter().zip(&vals).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            worst_ratio = worst_ratio.max(change / eps);
            if change > factor * eps {
                violations += 1;
            }
        }
    }
    verdict(
        8,
        violations == 0,
        format!("20 perturbations, largest value change {worst_ratio:.3} * eps <= {factor:.0} * eps, {violations} violations"),
    );
}

#[test]
fn criterion_09_nascent_probe() {
    let _g = serial();
    let g = cournot(2);
    let probe = NascentProbe {
        s: vec![0.0],
        base: vec![0.2, 0.3],
        deviated: vec![0.6, 0.3],
        samples: 20_000,
        squash: true,
    };
    let sigmas = [0.5, 0.2, 0.1, 0.05];
    let rows = nascent_bound_probe(&g, |s, a| g.rewards(s, a)[0], &probe, &sigmas, &mut rng(0)).unwrap();
    let ok = rows
        .windows(2)
        .all(|w| w[1].gap <= w[0].gap + 2.0 * w[0].std_err.max(w[1].std_err));
    let table: Vec<String> = rows.iter().map(|r| format!("{}:{:.4}+-{:.4}", r.sigma, r.gap, r.std_err)).collect();
    verdict(9, ok, format!("gap by sigma {}", table.join(" ")));
}

#[test]
fn criterion_10_consensus() {
    let _g = serial();
    let g = cournot(4);
    let src = GradientSource::Analytic(&g);
    let residual = ResidualConfig::default();
    let ccfg = ConsensusConfig {
        topology: Topology::Ring,
        ..ConsensusConfig::default()
    };
    let cons = estimate_potential_consensus(&g, &src, &residual, &ccfg, &mut rng(0)).unwrap();
    let central = estimate_potential(&g, &src, &residual, &mut rng(1)).unwrap().model;
    let disagreement = *cons.agreement.last().unwrap();
    let tracking = cons.tracking.iter().copied().fold(0.0, f64::max);

    let axis = [-1.0, -0.5, 0.0, 0.5, 1.0];
    let mut worst: f64 = 0.0;
    for m in &cons.models {
        let (mut num, mut den) = (0.0, 0.0);
        for &x0 in &axis {
            for &x1 in &axis {
                for &x2 in &axis {
                    for &x3 in &axis {
                        let a = [x0, x1, x2, x3];
                        let gc = m.gradients(&[0.0], &a).unwrap().0;
                        let gz = central.gradients(&[0.0], &a).unwrap().0;
                        num += gc.iter().zip(&gz).map(|(p, q)| (p - q) * (p - q)).sum::<f64>();
                        den += gz.iter().map(|q| q * q).sum::<f64>();
                    }
                }
            }
        }
        worst = worst.max((num / den).sqrt());
    }
    verdict(
        10,
        disagreement < 1e-3 && worst < 0.1 && tracking < 1e-10,
        format!(
            "ring of 4: disagreement {disagreement:.2e} < 1e-3, action-gradient mismatch {:.2}% < 10%, tracking error {tracking:.1e} < 1e-10 over {} rounds",
            100.0 * worst,
            cons.tracking.len() - 1
        ),
    );
}

#[test]
fn criterion_11_gradient_infrastructure() {
    let _g = serial();
    let (mut worst_in, mut worst_param, mut worst_score): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for seed in 0..100 {
        let mut r = rng(7000 + seed);
        let input = r.random_range(1..5);
        let hidden: Vec<usize> = (0..r.random_range(1..3)).map(|_| r.random_range(2..7)).collect();
        let out = r.random_range(1..4);
        let mut dims = vec![input];
        dims.extend(&hidden);
        dims.push(out);
        let acts: Vec<Activation> = (0..dims.len() - 1)
            .map(|k| if k + 2 == dims.len() { Activation::Identity } else { Activation::Tanh })
            .collect();
        let net = DenseNet::random(dims, acts, &mut r).unwrap();
        let x: Vec<f64> = (0..input).map(|_| r.random_range(-1.0..1.0)).collect();
        let up: Vec<f64> = (0..out).map(|_| r.random_range(-1.0..1.0)).collect();
        let dot = |y: Vec<f64>| y.iter().zip(&up).map(|(a, b)| a * b).sum::<f64>();
        let (pg, ig) = net.gradients(&x, &up).unwrap();
        worst_in = worst_in.max(rel_err(&ig, &fd_gradient(|x| dot(net.forward(x).unwrap()), &x, 1e-5)));
        let fd_p = fd_gradient(
            |p| {
                let mut n = net.clone();
                n.params_mut().copy_from_slice(p);
                dot(n.forward(&x).unwrap())
            },
            net.params(),
            1e-5,
        );
        worst_param = worst_param.max(rel_err(&pg, &fd_p));

        let squash = Squash::Tanh {
            low: vec![-1.0; out],
            high: vec![1.0; out],
        };
        let policy = GaussianPolicy::new(net.clone(), r.random_range(0.05..0.5), squash).unwrap();
        let raw = policy.sample_raw(&x, &mut r).unwrap().raw;
        let score = policy.score(&x, &raw).unwrap();
        let fd_s = fd_gradient(
            |p| {
                let mut q = policy.clone();
                q.mean_model.params_mut().copy_from_slice(p);
                q.log_density(&x, &raw).unwrap()
            },
            policy.mean_model.params(),
            1e-5,
        );
        worst_score = worst_score.max(rel_err(&score, &fd_s));
    }
    verdict(
        11,
        worst_in < 1e-4 && worst_param < 1e-4 && worst_score < 1e-4,
        format!("100 checks each, worst relative error input {worst_in:.1e}, params {worst_param:.1e}, score {worst_score:.1e} < 1e-4"),
    );
}

#[test]
fn criterion_12_ablation_trend_and_team_routing() {
    let _g = serial();
    let cs = [0.0, 0.1, 0.3, 0.5];
    let seeds = 0..3;
    let cfg = desk_cfg(10_000, false);
    let base = cournot(2);
    let (mut means, mut base_means) = (Vec::new(), Vec::new());
    for &c in &cs {
        let game = Ablation::new(Box::new(cournot(2)), AblationMode::NonPotential, c).unwrap();
        let (mut returns, mut base_returns) = (Vec::new(), Vec::new());
        for seed in seeds.clone() {
            let out = train_spotac(&game, &cfg, seed).unwrap();
            let eps = rollout_with(&game, 200, &mut rng(seed), |s, r| out.actors.sample(s, r)).unwrap();
            returns.push(social_welfare(&eps).unwrap() / 2.0);
            // same play scored without the extra term, reported for context only
            let eps = rollout_with(&base, 200, &mut rng(seed), |s, r| out.actors.sample(s, r)).unwrap();
            base_returns.push(social_welfare(&eps).unwrap() / 2.0);
        }
        means.push(common::mean(&returns));
        base_means.push(common::mean(&base_returns));
    }
    let inversions = means.windows(2).filter(|w| w[1] > w[0]).count();

    let team = TeamGame::new(Box::new(RoutingGame::equal_split(braess_network(), 2, 3, 0.99).unwrap())).unwrap();
    let team_cfg = desk_cfg(20_000, true);
    let (mut spot, mut indep) = (Vec::new(), Vec::new());
    for seed in seeds {
        spot.push(train_spotac(&team, &team_cfg, seed).unwrap().trace.last().unwrap().social_welfare);
        indep.push(train_independent(&team, &team_cfg, seed).unwrap().trace.last().unwrap().social_welfare);
    }
    let (spot, indep) = (common::mean(&spot), common::mean(&indep));
    verdict(
        12,
        inversions <= 1 && spot >= indep,
        format!(
            "mean return by c {:?}: {inversions} inversion(s) <= 1 (base-reward part {:?}); team routing welfare SPot-AC {spot:.4} >= independent {indep:.4}",
            means.iter().map(|m| format!("{m:.4}")).collect::<Vec<_>>(),
            base_means.iter().map(|m| format!("{m:.4}")).collect::<Vec<_>>()
        ),
    );
}
