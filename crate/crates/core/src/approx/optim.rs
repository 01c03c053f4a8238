use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

/// First-order optimizer state. `step` performs descent on the given gradient.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Global-norm clip applied before the update; `None` disables it.
    pub clip_norm: Option<f64>,
    steps: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl OptimizerState {
    pub fn sgd(lr: f64) -> Self {
        Self::with_kind(OptimizerKind::Sgd, lr)
    }

    pub fn adam(lr: f64) -> Self {
        Self::with_kind(OptimizerKind::Adam, lr)
    }

    pub fn with_kind(kind: OptimizerKind, lr: f64) -> Self {
        Self {
            kind,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            clip_norm: Some(1.0),
            steps: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn without_clipping(mut self) -> Self {
        self.clip_norm = None;
        self
    }

    pub fn with_clip(mut self, clip: Option<f64>) -> Self {
        self.clip_norm = clip;
        self
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn moments(&self) -> (&[f64], &[f64]) {
        (&self.m, &self.v)
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::dim("optimizer gradient", params.len(), grads.len()));
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite {
                context: "optimizer gradient",
                layer: 0,
            });
        }
        let scale = match self.clip_norm {
            Some(c) => {
                let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
                if norm > c {
                    c / norm
                } else {
                    1.0
                }
            }
            None => 1.0,
        };
        self.steps += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    *p -= self.lr * g * scale;
                }
            }
            OptimizerKind::Adam => {
                if self.m.len() != params.len() {
                    self.m = vec![0.0; params.len()];
                    self.v = vec![0.0; params.len()];
                }
                let t = self.steps as i32;
                let bc1 = 1.0 - self.beta1.powi(t);
                let bc2 = 1.0 - self.beta2.powi(t);
                for ((p, g), (m, v)) in params
                    .iter_mut()
                    .zip(grads)
                    .zip(self.m.iter_mut().zip(self.v.iter_mut()))
                {
                    let g = g * scale;
                    *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                    *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                    let mh = *m / bc1;
                    let vh = *v / bc2;
                    *p -= self.lr * mh / (vh.sqrt() + self.epsilon);
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_step() {
        let mut opt = OptimizerState::sgd(0.1).without_clipping();
        let mut p = [1.0];
        opt.step(&mut p, &[2.0]).unwrap();
        assert!((p[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_is_noop() {
        for mut opt in [OptimizerState::sgd(0.1), OptimizerState::adam(0.1)] {
            let mut p = [1.0, -2.0];
            opt.step(&mut p, &[0.0, 0.0]).unwrap();
            assert_eq!(p, [1.0, -2.0]);
        }
    }

    #[test]
    fn clipping_caps_norm() {
        let mut opt = OptimizerState::sgd(1.0);
        let mut p = [0.0, 0.0];
        opt.step(&mut p, &[6.0, 8.0]).unwrap();
        let norm = (p[0] * p[0] + p[1] * p[1]).sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn adam_moments_track_shape() {
        let mut opt = OptimizerState::adam(1e-3);
        let mut p = vec![0.0; 5];
        opt.step(&mut p, &[0.1; 5]).unwrap();
        assert_eq!(opt.moments().0.len(), 5);
        assert_eq!(opt.moments().1.len(), 5);
        // first Adam step moves each coordinate by ~lr
        assert!(p.iter().all(|x| (x + 1e-3).abs() < 1e-9));
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let mut opt = OptimizerState::sgd(0.1);
        let mut p = [0.0];
        assert!(opt.step(&mut p, &[f64::NAN]).is_err());
    }
}
