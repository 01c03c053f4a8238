use serde::{Deserialize, Serialize};

use super::Differentiable;
use crate::error::{Error, Result};

/// Monomial feature map `{1, x_i, x_i x_j (i <= j)}` up to degree two.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolyBasis {
    input_dim: usize,
    degree: usize,
}

impl PolyBasis {
    pub fn new(input_dim: usize, degree: usize) -> Result<Self> {
        if degree > 2 {
            return Err(Error::InvalidParam(format!("polynomial degree {degree} > 2 unsupported")));
        }
        Ok(Self { input_dim, degree })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn feature_count(&self) -> usize {
        let d = self.input_dim;
        match self.degree {
            0 => 1,
            1 => 1 + d,
            _ => 1 + d + d * (d + 1) / 2,
        }
    }

    pub fn linear_index(&self, i: usize) -> usize {
        debug_assert!(self.degree >= 1 && i < self.input_dim);
        1 + i
    }

    /// Index of the `x_i x_j` monomial (order of `i`, `j` is irrelevant).
    pub fn quadratic_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(self.degree == 2);
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        let d = self.input_dim;
        // rows r < i of the upper triangle hold d - r entries each
        1 + d + i * d - i * i.saturating_sub(1) / 2 + (j - i)
    }

    pub fn features(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim {
            return Err(Error::dim("polynomial input", self.input_dim, x.len()));
        }
        let mut f = Vec::with_capacity(self.feature_count());
        f.push(1.0);
        if self.degree >= 1 {
            f.extend_from_slice(x);
        }
        if self.degree >= 2 {
            for i in 0..x.len() {
                for j in i..x.len() {
                    f.push(x[i] * x[j]);
                }
            }
        }
        Ok(f)
    }

    /// `sum_k w_k * grad f_k(x)`.
    pub fn weighted_gradient(&self, weights: &[f64], x: &[f64]) -> Vec<f64> {
        let d = self.input_dim;
        let mut g = vec![0.0; d];
        if self.degree >= 1 {
            g.copy_from_slice(&weights[1..1 + d]);
        }
        if self.degree >= 2 {
            let mut k = 1 + d;
            for i in 0..d {
                for j in i..d {
                    let w = weights[k];
                    if i == j {
                        g[i] += 2.0 * w * x[i];
                    } else {
                        g[i] += w * x[j];
                        g[j] += w * x[i];
                    }
                    k += 1;
                }
            }
        }
        g
    }

    /// Directional derivative of every feature: `grad f_k(x) . v` for each `k`.
    pub fn directional_features(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        let d = self.input_dim;
        let mut out = Vec::with_capacity(self.feature_count());
        out.push(0.0);
        if self.degree >= 1 {
            out.extend_from_slice(v);
        }
        if self.degree >= 2 {
            for i in 0..d {
                for j in i..d {
                    out.push(x[i] * v[j] + x[j] * v[i]);
                }
            }
        }
        out
    }
}

/// Linear model on top of a [`PolyBasis`]; one scalar output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolyModel {
    basis: PolyBasis,
    weights: Vec<f64>,
}

impl PolyModel {
    pub fn new(basis: PolyBasis, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != basis.feature_count() {
            return Err(Error::dim("polynomial weights", basis.feature_count(), weights.len()));
        }
        Ok(Self { basis, weights })
    }

    pub fn zeros(basis: PolyBasis) -> Self {
        Self {
            weights: vec![0.0; basis.feature_count()],
            basis,
        }
    }

    pub fn basis(&self) -> &PolyBasis {
        &self.basis
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        let f = self.basis.features(x)?;
        Ok(f.iter().zip(&self.weights).map(|(a, b)| a * b).sum())
    }

    /// Ordinary least squares fit of the weights to `(x, y)` pairs.
    pub fn fit_least_squares(basis: PolyBasis, xs: &[Vec<f64>], ys: &[f64]) -> Result<Self> {
        if xs.is_empty() {
            return Err(Error::Empty("least-squares data"));
        }
        if xs.len() != ys.len() {
            return Err(Error::dim("least-squares targets", xs.len(), ys.len()));
        }
        let k = basis.feature_count();
        let mut gram = vec![0.0; k * k];
        let mut rhs = vec![0.0; k];
        for (x, &y) in xs.iter().zip(ys) {
            let f = basis.features(x)?;
            for a in 0..k {
                rhs[a] += f[a] * y;
                for b in 0..k {
                    gram[a * k + b] += f[a] * f[b];
                }
            }
        }
        let weights = crate::linalg::solve_spd_regularized(&gram, &rhs, k)?;
        Self::new(basis, weights)
    }
}

impl Differentiable for PolyModel {
    fn input_dim(&self) -> usize {
        self.basis.input_dim
    }

    fn output_dim(&self) -> usize {
        1
    }

    fn params(&self) -> &[f64] {
        &self.weights
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(vec![self.value(x)?])
    }

    fn gradients(&self, x: &[f64], upstream: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if upstream.len() != 1 {
            return Err(Error::dim("upstream gradient", 1, upstream.len()));
        }
        let u = upstream[0];
        let f = self.basis.features(x)?;
        let pg = f.into_iter().map(|v| v * u).collect();
        let ig = self
            .basis
            .weighted_gradient(&self.weights, x)
            .into_iter()
            .map(|v| v * u)
            .collect();
        Ok((pg, ig))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feature_count_matches_formula() {
        for d in 1..6 {
            let b = PolyBasis::new(d, 2).unwrap();
            assert_eq!(b.feature_count(), 1 + d + d * (d + 1) / 2);
            assert_eq!(b.features(&vec![0.5; d]).unwrap().len(), b.feature_count());
        }
    }

    #[test]
    fn quadratic_index_points_at_the_product() {
        let b = PolyBasis::new(4, 2).unwrap();
        let x = [2.0, 3.0, 5.0, 7.0];
        let f = b.features(&x).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(f[b.quadratic_index(i, j)], x[i] * x[j], "({i},{j})");
            }
            assert_eq!(f[b.linear_index(i)], x[i]);
        }
    }

    #[test]
    fn square_feature_gradient() {
        let m = PolyModel::new(PolyBasis::new(1, 2).unwrap(), vec![0.0, 0.0, 1.0]).unwrap();
        let (_, ig) = m.gradients(&[3.0], &[1.0]).unwrap();
        assert_eq!(ig, vec![6.0]);
    }

    #[test]
    fn degree_three_rejected() {
        assert!(PolyBasis::new(2, 3).is_err());
    }

    #[test]
    fn least_squares_recovers_quadratic() {
        let basis = PolyBasis::new(1, 2).unwrap();
        let xs: Vec<Vec<f64>> = (0..50).map(|k| vec![-2.0 + 4.0 * k as f64 / 49.0]).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x[0] * x[0] - 2.0 * x[0] + 1.0).collect();
        let m = PolyModel::fit_least_squares(basis, &xs, &ys).unwrap();
        let expected = [1.0, -2.0, 3.0];
        for (w, e) in m.weights().iter().zip(expected) {
            assert!((w - e).abs() < 1e-8, "{w} vs {e}");
        }
    }

    #[test]
    fn directional_features_match_weighted_gradient() {
        let b = PolyBasis::new(3, 2).unwrap();
        let w: Vec<f64> = (0..b.feature_count()).map(|k| (k as f64 * 0.37).sin()).collect();
        let x = [0.3, -1.2, 0.8];
        let v = [1.0, 0.5, -2.0];
        let g = b.weighted_gradient(&w, &x);
        let lhs: f64 = g.iter().zip(&v).map(|(a, b)| a * b).sum();
        let rhs: f64 = b.directional_features(&x, &v).iter().zip(&w).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
