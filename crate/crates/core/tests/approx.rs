mod common;

use common::{fd_gradient, rel_err, rng};
use proptest::prelude::*;
use rand::Rng;
use spg_core::approx::checkpoint;
use spg_core::approx::{Activation, DenseNet, Differentiable, GaussianPolicy, OptimizerState, PolyBasis, PolyModel, Squash};

fn random_net(seed: u64) -> DenseNet {
    let mut r = rng(seed);
    let depth = r.random_range(1..4);
    let mut dims = vec![r.random_range(1..5)];
    let mut acts = Vec::new();
    for _ in 0..depth {
        dims.push(r.random_range(1..6));
        acts.push(match r.random_range(0..3) {
            0 => Activation::Tanh,
            1 => Activation::Relu,
            _ => Activation::Identity,
        });
    }
    let mut net = DenseNet::random(dims, acts, &mut r).unwrap();
    for p in net.params_mut() {
        *p += r.random_range(-0.3..0.3);
    }
    net
}

#[test]
fn affine_net_forward_and_gradient() {
    let net = DenseNet::new(vec![1, 1], vec![Activation::Identity], vec![2.0, 1.0]).unwrap();
    assert_eq!(net.forward(&[3.0]).unwrap(), vec![7.0]);
    let (pg, ig) = net.gradients(&[3.0], &[1.0]).unwrap();
    assert_eq!(ig, vec![2.0]);
    assert_eq!(pg, vec![3.0, 1.0]);
}

#[test]
fn zero_weights_output_bias_and_tanh_zero() {
    let mut net = DenseNet::zeros(vec![3, 2], vec![Activation::Identity]).unwrap();
    net.set_output_bias(&[0.5, -1.0]).unwrap();
    assert_eq!(net.forward(&[9.0, -4.0, 2.0]).unwrap(), vec![0.5, -1.0]);
    let t = DenseNet::random(vec![2, 4], vec![Activation::Tanh], &mut rng(1)).unwrap();
    assert_eq!(t.forward(&[0.0, 0.0]).unwrap(), vec![0.0; 4]);
}

#[test]
fn wrong_input_length_is_an_error() {
    let net = random_net(3);
    let bad = vec![0.0; net.input_dim() + 1];
    assert!(net.forward(&bad).is_err());
}

#[test]
fn hundred_random_nets_match_finite_differences() {
    for seed in 0..100 {
        let net = random_net(seed);
        let mut r = rng(1000 + seed);
        let x: Vec<f64> = (0..net.input_dim()).map(|_| r.random_range(-1.5..1.5)).collect();
        let up: Vec<f64> = (0..net.output_dim()).map(|_| r.random_range(-1.0..1.0)).collect();
        let dot = |y: Vec<f64>| y.iter().zip(&up).map(|(a, b)| a * b).sum::<f64>();
        let (pg, ig) = net.gradients(&x, &up).unwrap();
        let fd_x = fd_gradient(|x| dot(net.forward(x).unwrap()), &x, 1e-5);
        assert!(rel_err(&ig, &fd_x) < 1e-4, "input grad seed {seed}");
        let params = net.params().to_vec();
        let fd_p = fd_gradient(
            |p| {
                let mut n = net.clone();
                n.params_mut().copy_from_slice(p);
                dot(n.forward(&x).unwrap())
            },
            &params,
            1e-5,
        );
        assert!(rel_err(&pg, &fd_p) < 1e-4, "param grad seed {seed}");
    }
}

#[test]
fn poly_square_gradient_is_six_at_three() {
    let basis = PolyBasis::new(1, 2).unwrap();
    let m = PolyModel::new(basis, vec![0.0, 0.0, 1.0]).unwrap();
    assert_eq!(m.gradients(&[3.0], &[1.0]).unwrap().1, vec![6.0]);
}

#[test]
fn poly_least_squares_recovers_quadratic() {
    let basis = PolyBasis::new(1, 2).unwrap();
    let xs: Vec<Vec<f64>> = (0..50).map(|k| vec![-1.0 + k as f64 / 24.5]).collect();
    let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x[0] * x[0] - 2.0 * x[0] + 1.0).collect();
    let m = PolyModel::fit_least_squares(basis, &xs, &ys).unwrap();
    for (w, e) in m.weights().iter().zip([1.0, -2.0, 3.0]) {
        assert!((w - e).abs() < 1e-8);
    }
}

fn unit_box(d: usize) -> Squash {
    Squash::Tanh {
        low: vec![-1.0; d],
        high: vec![1.0; d],
    }
}

#[test]
fn zero_sigma_sample_is_the_mean() {
    let p = GaussianPolicy::constant(1, &[0.3f64.atanh()], 0.0, unit_box(1)).unwrap();
    let a = p.sample(&[0.0], &mut rng(0)).unwrap();
    assert!((a[0] - 0.3).abs() < 1e-15);
}

#[test]
fn sample_mean_within_clt_bound() {
    let p = GaussianPolicy::constant(1, &[0.2], 0.1, Squash::Identity).unwrap();
    let mut r = rng(5);
    let n = 10_000;
    let m: f64 = (0..n).map(|_| p.sample(&[0.0], &mut r).unwrap()[0]).sum::<f64>() / n as f64;
    assert!((m - 0.2).abs() < 3.0 * 0.1 / (n as f64).sqrt());
}

#[test]
fn far_mean_stays_in_box() {
    let p = GaussianPolicy::constant(1, &[40.0, -40.0], 1.0, unit_box(2)).unwrap();
    let mut r = rng(2);
    for _ in 0..1000 {
        assert!(p.sample(&[0.0], &mut r).unwrap().iter().all(|a| (-1.0..=1.0).contains(a)));
    }
}

#[test]
fn scalar_score_and_stationarity() {
    let p = GaussianPolicy::constant(1, &[0.0], 1.0, Squash::Identity).unwrap();
    // one weight (state is 0) and one bias
    assert_eq!(p.score(&[0.0], &[0.5]).unwrap(), vec![0.0, 0.5]);
    assert!(p.score(&[0.0], &[0.0]).unwrap().iter().all(|&g| g == 0.0));
    let degenerate = GaussianPolicy::constant(1, &[0.0], 0.0, Squash::Identity).unwrap();
    assert!(degenerate.score(&[0.0], &[0.5]).is_err());
}

#[test]
fn hundred_policy_scores_match_log_density_differences() {
    for seed in 0..100 {
        let mut r = rng(500 + seed);
        let sd = r.random_range(1..4);
        let ad = r.random_range(1..3);
        let net = DenseNet::mlp(sd, &[5], ad, &mut r).unwrap();
        let p = GaussianPolicy::new(net, r.random_range(0.05..0.5), unit_box(ad)).unwrap();
        let s: Vec<f64> = (0..sd).map(|_| r.random_range(-1.0..1.0)).collect();
        let raw = p.sample_raw(&s, &mut r).unwrap().raw;
        let score = p.score(&s, &raw).unwrap();
        let params = p.mean_model.params().to_vec();
        let fd = fd_gradient(
            |q| {
                let mut pp = p.clone();
                pp.mean_model.params_mut().copy_from_slice(q);
                pp.log_density(&s, &raw).unwrap()
            },
            &params,
            1e-5,
        );
        assert!(rel_err(&score, &fd) < 1e-4, "seed {seed}");
    }
}

#[test]
fn optimizer_contracts() {
    let mut p = [1.0];
    OptimizerState::sgd(0.1).without_clipping().step(&mut p, &[2.0]).unwrap();
    assert!((p[0] - 0.8).abs() < 1e-15);

    let mut q = [0.3, -0.7];
    OptimizerState::adam(0.1).step(&mut q, &[0.0, 0.0]).unwrap();
    assert_eq!(q, [0.3, -0.7]);

    // gradient of norm 10 under the default clip of 1 moves sgd params by lr * 1
    let mut c = [0.0, 0.0];
    OptimizerState::sgd(1.0).step(&mut c, &[6.0, 8.0]).unwrap();
    assert!((c[0].hypot(c[1]) - 1.0).abs() < 1e-12);

    assert!(OptimizerState::sgd(0.1).step(&mut [0.0], &[f64::NAN]).is_err());
}

#[test]
fn adam_first_step_is_lr_times_sign() {
    // bias-corrected first step: m_hat / sqrt(v_hat) = sign(g)
    let mut p = [0.0, 0.0];
    OptimizerState::adam(0.01).without_clipping().step(&mut p, &[3.0, -0.2]).unwrap();
    assert!((p[0] + 0.01).abs() < 1e-9 && (p[1] - 0.01).abs() < 1e-9);
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let net = random_net(11);
    let back = checkpoint::from_bytes(&checkpoint::to_bytes(&net)).unwrap();
    assert_eq!(back.params(), net.params());
    let json = checkpoint::from_json(&checkpoint::to_json(&net).unwrap()).unwrap();
    assert_eq!(json.params(), net.params());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.json");
    checkpoint::save(&net, &path).unwrap();
    assert_eq!(checkpoint::load(&path).unwrap().params(), net.params());
}

proptest! {
    #[test]
    fn score_vanishes_at_the_mean(seed in 0u64..1000, sigma in 0.01f64..2.0) {
        let mut r = rng(seed);
        let net = DenseNet::mlp(2, &[4], 2, &mut r).unwrap();
        let p = GaussianPolicy::new(net, sigma, unit_box(2)).unwrap();
        let s = [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)];
        let mean = p.raw_mean(&s).unwrap();
        prop_assert!(p.score(&s, &mean).unwrap().iter().all(|g| g.abs() < 1e-12));
    }

    #[test]
    fn same_seed_same_sample(seed in 0u64..1000) {
        let p = GaussianPolicy::constant(1, &[0.1, -0.4], 0.3, unit_box(2)).unwrap();
        prop_assert_eq!(p.sample(&[0.0], &mut rng(seed)).unwrap(), p.sample(&[0.0], &mut rng(seed)).unwrap());
    }

    #[test]
    fn degree_two_feature_count(d in 1usize..12) {
        prop_assert_eq!(PolyBasis::new(d, 2).unwrap().feature_count(), 1 + d + d * (d + 1) / 2);
    }
}
