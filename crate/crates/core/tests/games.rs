mod common;

use common::{cournot_grid_br, cournot_reward, rng};
use proptest::prelude::*;
use spg_core::envs::flow::{best_response_dynamics, FlowModel, TimeModel};
use spg_core::envs::{
    braess_network, random_layered_network, Ablation, AblationMode, Cournot, CournotParams, Edge, Nav, NavParams,
    RoutingGame, RoutingNet,
};
use spg_core::game::{
    check_potentiality, check_state_transitivity, discretize, rollout, value_iteration, Game, JointActionGrid,
    ReplayBuffer,
};
use spg_core::approx::{GaussianPolicy, Squash};
use spg_core::TransitionSample;

fn cournot(n: usize) -> Cournot {
    Cournot::new(CournotParams::with_agents(n)).unwrap()
}

#[test]
fn cournot_reference_values() {
    let g = cournot(2);
    let a = [1.0 / 3.0, 1.0 / 3.0];
    let r = g.rewards(&[0.0], &a);
    assert!((r[0] - 1.0 / 9.0).abs() < 1e-12);
    assert!((r[0] - cournot_reward(2.0, 1.0, 1.0, &a, 0)).abs() < 1e-15);
    assert!((g.potential(&[0.0], &a).unwrap() - 1.0 / 3.0).abs() < 1e-12);

    let dev = [0.5, 1.0 / 3.0];
    let dr = g.rewards(&[0.0], &dev)[0] - r[0];
    let dphi = g.potential(&[0.0], &dev).unwrap() - g.potential(&[0.0], &a).unwrap();
    assert!((dr + 1.0 / 36.0).abs() < 1e-12);
    assert!((dphi + 1.0 / 36.0).abs() < 1e-12);
}

#[test]
fn cournot_equilibrium_matches_brute_force() {
    for (n, q) in [(2, 1.0 / 3.0), (4, 0.2)] {
        let g = cournot(n);
        assert!((g.ne_quantity() - q).abs() < 1e-12);
        let ne = g.analytic_ne().unwrap();
        for i in 0..n {
            let br = cournot_grid_br(2.0, 1.0, 1.0, &ne, i, 1.0);
            assert!((br - q).abs() < 1e-5, "n={n} agent {i}: {br}");
        }
    }
}

#[test]
fn cournot_best_response_matches_brute_force() {
    let g = cournot(3);
    for a in [[0.0, 0.0, 0.0], [0.9, -0.4, 0.2], [-1.0, -1.0, -1.0]] {
        for i in 0..3 {
            let br = g.analytic_best_response(i, &[0.0], &a).unwrap()[0];
            assert!((br - cournot_grid_br(2.0, 1.0, 1.0, &a, i, 1.0)).abs() < 1e-5);
        }
    }
}

#[test]
fn cournot_rejects_bad_params() {
    assert!(Cournot::new(CournotParams::with_agents(0)).is_err());
    let p = CournotParams {
        discount: 1.0,
        ..CournotParams::default()
    };
    assert!(Cournot::new(p).is_err());
}

fn single_edge() -> RoutingNet {
    RoutingNet::new(
        vec!["s".into(), "t".into()],
        vec![Edge { from: 0, to: 1, a: 1.0, b: 0.0 }],
        0,
        1,
    )
    .unwrap()
}

#[test]
fn single_edge_routing_costs_and_terminates() {
    let g = RoutingGame::equal_split(single_edge(), 2, 1, 0.99).unwrap();
    let s = g.initial_state(&mut rng(0));
    let a = vec![0.0; g.joint_action_dim()];
    assert_eq!(g.rewards(&s, &a), vec![-0.5, -0.5]);
    let s2 = g.transition(&s, &a, &mut rng(0));
    assert!(g.is_terminal(&s2));
    assert!((g.sink_mass(&s2) - 1.0).abs() < 1e-12);
}

#[test]
fn braess_static_wardrop_oracle() {
    let net = braess_network();
    let zigzag = vec![
        net.edge_index("src", "A").unwrap(),
        net.edge_index("A", "B").unwrap(),
        net.edge_index("B", "sink").unwrap(),
    ];
    let eq = best_response_dynamics(&net, &[0.5, 0.5], FlowModel::Wardrop, TimeModel::Static, 1e-12, 10_000).unwrap();
    assert!((eq.path_share(&zigzag) - 1.0).abs() < 1e-6);
    assert!((eq.mean_latency - 2.0).abs() < 1e-6);

    let plain = net.without_edge(net.edge_index("A", "B").unwrap()).unwrap();
    let eq = best_response_dynamics(&plain, &[0.5, 0.5], FlowModel::Wardrop, TimeModel::Static, 1e-12, 10_000).unwrap();
    assert!((eq.mean_latency - 1.5).abs() < 1e-6);
}

#[test]
fn braess_dynamic_atomic_equilibrium_is_stable() {
    let net = braess_network();
    let ab = net.edge_index("A", "B").unwrap();
    let eq = best_response_dynamics(&net, &[0.5, 0.5], FlowModel::Atomic, TimeModel::Dynamic, 1e-12, 10_000).unwrap();
    assert!((eq.edge_flows[ab] - 5.0 / 9.0).abs() < 1e-6);
    assert!(eq.rounds < 10_000);
}

#[test]
fn layered_network_is_connected_dag() {
    let net = random_layered_network(5, 6, 3).unwrap();
    assert!(net.topological_order().is_ok());
    assert!(net.reaches_sink().iter().all(|&r| r));
    assert_eq!(net.depth(), 4);
    let back = RoutingNet::from_json(&net.to_json()).unwrap();
    assert_eq!(back.edges(), net.edges());
}

fn check_game(game: &dyn Game, seed: u64) -> (f64, f64) {
    let phi = |s: &[f64], a: &[f64]| game.potential(s, a).unwrap();
    let a = check_potentiality(game, phi, 200, 1e-9, &mut rng(seed));
    let b = check_state_transitivity(game, phi, 200, 1e-9, &mut rng(seed + 1));
    (a.max_violation, b.max_violation)
}

#[test]
fn analytic_potentials_are_exact() {
    let games: Vec<Box<dyn Game>> = vec![
        Box::new(cournot(3)),
        Box::new(RoutingGame::equal_split(braess_network(), 2, 3, 0.99).unwrap()),
        Box::new(RoutingGame::equal_split(random_layered_network(4, 3, 1).unwrap(), 3, 3, 0.99).unwrap()),
        Box::new(Nav::new(NavParams::default()).unwrap()),
        Box::new(Ablation::new(Box::new(cournot(2)), AblationMode::NoncoopPotential, 0.5).unwrap()),
    ];
    for g in &games {
        let (dev, _) = check_game(g.as_ref(), 7);
        assert!(dev < 1e-9, "{}: {dev}", g.name());
    }
}

#[test]
fn non_potential_ablation_breaks_the_check() {
    let g = Ablation::new(Box::new(cournot(2)), AblationMode::NonPotential, 0.5).unwrap();
    let (dev, _) = check_game(&g, 7);
    assert!(dev > 1e-3);
    let g0 = Ablation::new(Box::new(cournot(2)), AblationMode::NonPotential, 0.0).unwrap();
    assert!(check_game(&g0, 7).0 < 1e-9);
}

#[test]
fn reward_gradients_match_finite_differences() {
    let games: Vec<Box<dyn Game>> = vec![
        Box::new(cournot(3)),
        Box::new(RoutingGame::equal_split(braess_network(), 2, 3, 0.99).unwrap()),
        Box::new(Nav::new(NavParams::default()).unwrap()),
    ];
    for g in &games {
        let mut r = rng(4);
        let s = g.sample_probe_state(&mut r);
        let a: Vec<f64> = (0..g.joint_action_dim()).map(|k| 0.1 * (k as f64 + 1.0).sin()).collect();
        let grads = g.reward_grads(&s, &a).unwrap();
        for (i, grad) in grads.iter().enumerate() {
            let fd = common::fd_gradient(|x| g.rewards(&s, x)[i], &a, 1e-6);
            assert!(common::rel_err(&grad.d_action, &fd) < 1e-6, "{} agent {i}", g.name());
            let fd_s = common::fd_gradient(|x| g.rewards(x, &a)[i], &s, 1e-6);
            assert!(common::rel_err(&grad.d_state, &fd_s) < 1e-6, "{} agent {i} state", g.name());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cournot_potential_holds_for_random_params(
        n in 1usize..6, alpha in 0.5f64..5.0, beta in 0.1f64..3.0, cost in 0.0f64..2.0, seed in 0u64..1000
    ) {
        let g = Cournot::new(CournotParams { n_agents: n, alpha, beta, gamma_cost: cost, caps: vec![2.0], discount: 0.9 }).unwrap();
        prop_assert!(check_game(&g, seed).0 < 1e-9);
    }

    #[test]
    fn constant_shift_keeps_potential(shift in -100.0f64..100.0, seed in 0u64..1000) {
        let g = cournot(3);
        let phi = |s: &[f64], a: &[f64]| g.potential(s, a).unwrap() + shift;
        prop_assert!(check_potentiality(&g, phi, 50, 1e-9, &mut rng(seed)).pass);
    }

    #[test]
    fn routing_conserves_mass(seed in 0u64..1000, n in 1usize..4) {
        let g = RoutingGame::equal_split(random_layered_network(4, 3, seed).unwrap(), n, 3, 0.9).unwrap();
        let mut r = rng(seed);
        let s = g.sample_probe_state(&mut r);
        let a: Vec<f64> = (0..g.joint_action_dim()).map(|k| ((seed + k as u64) as f64).cos() * 3.0).collect();
        let s2 = g.transition(&s, &a, &mut r);
        for i in 0..n {
            let before: f64 = g.agent_mass(i, &s).iter().sum();
            let after: f64 = g.agent_mass(i, &s2).iter().sum();
            prop_assert!((before - after).abs() < 1e-12);
        }
    }
}

#[test]
fn replay_buffer_samples_uniformly() {
    let mut buf = ReplayBuffer::new(10);
    for k in 0..10 {
        buf.push(TransitionSample {
            s: vec![k as f64],
            a: vec![],
            s2: vec![],
            rewards: vec![],
            done: false,
        });
    }
    let mut counts = [0usize; 10];
    let mut r = rng(9);
    let draws = 100_000;
    for _ in 0..draws / 10 {
        for x in buf.sample(10, &mut r).unwrap() {
            counts[x.s[0] as usize] += 1;
        }
    }
    // chi-square with 9 dof; 27.88 is the 0.999 quantile
    let e = draws as f64 / 10.0;
    let chi: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
    assert!(chi < 27.88, "chi2 {chi}");
}

#[test]
fn rollouts_are_reproducible_per_seed() {
    let g = Nav::new(NavParams::default()).unwrap();
    let squash = Squash::Tanh {
        low: g.action_bounds().0[..2].to_vec(),
        high: g.action_bounds().1[..2].to_vec(),
    };
    let p = GaussianPolicy::constant(g.state_dim(), &[0.1, -0.2], 0.3, squash).unwrap();
    let ps = vec![p.clone(), p];
    let a = rollout(&g, &ps, 3, &mut rng(1)).unwrap();
    let b = rollout(&g, &ps, 3, &mut rng(1)).unwrap();
    assert_eq!(a, b);
    assert!(a.iter().all(|ep| ep.len() == g.horizon()));
}

#[test]
fn value_iteration_contracts_at_the_discount_rate() {
    let p = CournotParams {
        discount: 0.9,
        ..CournotParams::with_agents(2)
    };
    let g = Cournot::new(p).unwrap();
    let grid = JointActionGrid::uniform_scalar(2, -1.0, 1.0, 11).unwrap();
    let mdp = discretize(&g, &[vec![0.0]], &grid, 1, |s, a| g.potential(s, a).unwrap(), &mut rng(0)).unwrap();
    let vi = value_iteration(&mdp, 1e-12);
    for w in vi.deltas.windows(2) {
        assert!(w[1] <= 0.9 * w[0] + 1e-12);
    }
    // the grid point nearest 1/3 for both firms
    let greedy = grid.joint(vi.policy[0]);
    assert!(greedy.iter().all(|q| (q - 0.4).abs() < 1e-12), "{greedy:?}");
    // horizon one: the episode ends after the single stage
    assert!((vi.values[0] - 0.32).abs() < 1e-12);
}
