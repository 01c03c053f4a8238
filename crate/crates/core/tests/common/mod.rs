//! Independent numeric oracles shared by the integration tests.
#![allow(dead_code)]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Central finite-difference gradient of `f` at `x`.
pub fn fd_gradient<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], h: f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|k| {
            p[k] = x[k] + h;
            let up = f(&p);
            p[k] = x[k] - h;
            let down = f(&p);
            p[k] = x[k];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `||a - b|| / max(||a||, ||b||, floor)`.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(a).max(norm(b)).max(1e-8)
}

/// Cournot reward written out by hand: `a_i (alpha - beta sum a) - cost a_i`.
pub fn cournot_reward(alpha: f64, beta: f64, cost: f64, a: &[f64], i: usize) -> f64 {
    let total: f64 = a.iter().sum();
    a[i] * (alpha - beta * total) - cost * a[i]
}

/// Brute-force best response of firm `i` over a fine grid of its own action.
pub fn cournot_grid_br(alpha: f64, beta: f64, cost: f64, a: &[f64], i: usize, cap: f64) -> f64 {
    let mut best = (f64::NEG_INFINITY, 0.0);
    let mut trial = a.to_vec();
    for k in 0..=200_000 {
        trial[i] = -cap + 2.0 * cap * k as f64 / 200_000.0;
        let r = cournot_reward(alpha, beta, cost, &trial, i);
        if r > best.0 {
            best = (r, trial[i]);
        }
    }
    best.1
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn std_dev(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
}
