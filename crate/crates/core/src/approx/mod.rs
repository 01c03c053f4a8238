//! Small differentiable function approximators with exact parameter and
//! input gradients, Gaussian policies, and first-order optimizers.

pub mod checkpoint;
mod dense;
mod optim;
mod policy;
mod poly;

pub use dense::{Activation, DenseNet, Trace};
pub use optim::{OptimizerKind, OptimizerState};
pub use policy::{GaussianPolicy, PolicySample, Squash};
pub use poly::{PolyBasis, PolyModel};

use crate::error::Result;

/// A parametric map `R^n -> R^m` with reverse-mode gradients.
pub trait Differentiable {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];
    fn forward(&self, x: &[f64]) -> Result<Vec<f64>>;
    /// Returns `(d(upstream . f)/d params, d(upstream . f)/dx)`.
    fn gradients(&self, x: &[f64], upstream: &[f64]) -> Result<(Vec<f64>, Vec<f64>)>;

    fn n_params(&self) -> usize {
        self.params().len()
    }
}

/// `target <- tau * source + (1 - tau) * target`.
pub fn polyak_update(target: &mut [f64], source: &[f64], tau: f64) {
    for (t, s) in target.iter_mut().zip(source) {
        *t = tau * s + (1.0 - tau) * *t;
    }
}
