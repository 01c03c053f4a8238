use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Differentiable;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the post-activation value `y`.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Activation::Tanh => 0,
            Activation::Relu => 1,
            Activation::Identity => 2,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::Tanh),
            1 => Some(Activation::Relu),
            2 => Some(Activation::Identity),
            _ => None,
        }
    }
}

/// Fully connected feed-forward network.
///
/// Parameters are stored flattened, layer by layer: the weight matrix
/// (row-major, `out x in`) followed by the bias vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseNet {
    layer_dims: Vec<usize>,
    activations: Vec<Activation>,
    params: Vec<f64>,
}

/// Post-activation values of every layer, input included.
#[derive(Clone, Debug)]
pub struct Trace {
    acts: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("trace holds at least the input")
    }
}

pub(crate) fn param_count(layer_dims: &[usize]) -> usize {
    layer_dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl DenseNet {
    pub fn new(layer_dims: Vec<usize>, activations: Vec<Activation>, params: Vec<f64>) -> Result<Self> {
        if layer_dims.len() < 2 {
            return Err(Error::InvalidParam("a network needs at least one layer".into()));
        }
        if layer_dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidParam("layer widths must be positive".into()));
        }
        if activations.len() != layer_dims.len() - 1 {
            return Err(Error::dim("activations", layer_dims.len() - 1, activations.len()));
        }
        let expected = param_count(&layer_dims);
        if params.len() != expected {
            return Err(Error::dim("network parameters", expected, params.len()));
        }
        if let Some(pos) = params.iter().position(|p| !p.is_finite()) {
            let layer = layer_of_param(&layer_dims, pos);
            return Err(Error::NonFinite {
                context: "network parameters",
                layer,
            });
        }
        Ok(Self {
            layer_dims,
            activations,
            params,
        })
    }

    /// All-zero parameters.
    pub fn zeros(layer_dims: Vec<usize>, activations: Vec<Activation>) -> Result<Self> {
        let n = param_count(&layer_dims);
        Self::new(layer_dims, activations, vec![0.0; n])
    }

    /// Glorot-uniform weights, zero biases.
    pub fn random<R: Rng + ?Sized>(
        layer_dims: Vec<usize>,
        activations: Vec<Activation>,
        rng: &mut R,
    ) -> Result<Self> {
        let mut net = Self::zeros(layer_dims, activations)?;
        let mut offset = 0;
        for w in net.layer_dims.clone().windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for p in &mut net.params[offset..offset + fan_in * fan_out] {
                *p = rng.random_range(-limit..limit);
            }
            offset += fan_in * fan_out + fan_out;
        }
        Ok(net)
    }

    /// Tanh hidden layers with a linear head.
    pub fn mlp<R: Rng + ?Sized>(input: usize, hidden: &[usize], output: usize, rng: &mut R) -> Result<Self> {
        let mut dims = Vec::with_capacity(hidden.len() + 2);
        dims.push(input);
        dims.extend_from_slice(hidden);
        dims.push(output);
        let mut acts = vec![Activation::Tanh; hidden.len()];
        acts.push(Activation::Identity);
        Self::random(dims, acts, rng)
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    /// Scales the weights and bias of the final layer, used to start heads near zero.
    pub fn scale_last_layer(&mut self, factor: f64) {
        let n = self.layer_dims.len();
        let (fan_in, fan_out) = (self.layer_dims[n - 2], self.layer_dims[n - 1]);
        let start = self.params.len() - (fan_in * fan_out + fan_out);
        for p in &mut self.params[start..] {
            *p *= factor;
        }
    }

    /// Overwrites the final layer bias.
    pub fn set_output_bias(&mut self, bias: &[f64]) -> Result<()> {
        let out = self.output_dim();
        if bias.len() != out {
            return Err(Error::dim("output bias", out, bias.len()));
        }
        let start = self.params.len() - out;
        self.params[start..].copy_from_slice(bias);
        Ok(())
    }

    pub fn forward_trace(&self, x: &[f64]) -> Result<Trace> {
        if x.len() != self.input_dim() {
            return Err(Error::dim("network input", self.input_dim(), x.len()));
        }
        let mut acts = Vec::with_capacity(self.layer_dims.len());
        acts.push(x.to_vec());
        let mut offset = 0;
        for (l, w) in self.layer_dims.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let weights = &self.params[offset..offset + fan_in * fan_out];
            let bias = &self.params[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
            let input = &acts[l];
            let act = self.activations[l];
            let out: Vec<f64> = (0..fan_out)
                .map(|o| {
                    let row = &weights[o * fan_in..(o + 1) * fan_in];
                    let z = row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>() + bias[o];
                    act.apply(z)
                })
                .collect();
            acts.push(out);
            offset += fan_in * fan_out + fan_out;
        }
        Ok(Trace { acts })
    }

    /// Reverse pass through a recorded trace. Parameter gradients are added into
    /// `param_grad`; the input gradient is returned.
    pub fn backward_into(&self, trace: &Trace, upstream: &[f64], param_grad: &mut [f64]) -> Result<Vec<f64>> {
        if upstream.len() != self.output_dim() {
            return Err(Error::dim("upstream gradient", self.output_dim(), upstream.len()));
        }
        if param_grad.len() != self.params.len() {
            return Err(Error::dim("parameter gradient buffer", self.params.len(), param_grad.len()));
        }
        let n_layers = self.layer_dims.len() - 1;
        let mut offsets = Vec::with_capacity(n_layers);
        let mut off = 0;
        for w in self.layer_dims.windows(2) {
            offsets.push(off);
            off += w[0] * w[1] + w[1];
        }
        let mut delta: Vec<f64> = upstream.to_vec();
        for l in (0..n_layers).rev() {
            let (fan_in, fan_out) = (self.layer_dims[l], self.layer_dims[l + 1]);
            let out = &trace.acts[l + 1];
            let input = &trace.acts[l];
            let act = self.activations[l];
            for (d, &y) in delta.iter_mut().zip(out) {
                *d *= act.derivative_from_output(y);
            }
            if delta.iter().any(|d| !d.is_finite()) {
                return Err(Error::NonFinite {
                    context: "backward pass",
                    layer: l,
                });
            }
            let base = offsets[l];
            for o in 0..fan_out {
                let d = delta[o];
                if d != 0.0 {
                    let row = &mut param_grad[base + o * fan_in..base + (o + 1) * fan_in];
                    for (g, x) in row.iter_mut().zip(input) {
                        *g += d * x;
                    }
                }
                param_grad[base + fan_in * fan_out + o] += d;
            }
            let weights = &self.params[base..base + fan_in * fan_out];
            let mut next = vec![0.0; fan_in];
            for o in 0..fan_out {
                let d = delta[o];
                if d != 0.0 {
                    for (n, w) in next.iter_mut().zip(&weights[o * fan_in..(o + 1) * fan_in]) {
                        *n += d * w;
                    }
                }
            }
            delta = next;
        }
        Ok(delta)
    }

    /// Input gradient only; parameter gradients are discarded.
    pub fn input_gradient(&self, x: &[f64], upstream: &[f64]) -> Result<Vec<f64>> {
        let trace = self.forward_trace(x)?;
        let mut scratch = vec![0.0; self.params.len()];
        self.backward_into(&trace, upstream, &mut scratch)
    }
}

fn layer_of_param(layer_dims: &[usize], index: usize) -> usize {
    let mut off = 0;
    for (l, w) in layer_dims.windows(2).enumerate() {
        off += w[0] * w[1] + w[1];
        if index < off {
            return l;
        }
    }
    layer_dims.len() - 2
}

impl Differentiable for DenseNet {
    fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let trace = self.forward_trace(x)?;
        let out = trace.acts.into_iter().last().unwrap();
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "forward pass",
                layer: self.layer_dims.len() - 2,
            });
        }
        Ok(out)
    }

    fn gradients(&self, x: &[f64], upstream: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let trace = self.forward_trace(x)?;
        let mut pg = vec![0.0; self.params.len()];
        let ig = self.backward_into(&trace, upstream, &mut pg)?;
        Ok((pg, ig))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn affine() -> DenseNet {
        DenseNet::new(vec![1, 1], vec![Activation::Identity], vec![2.0, 1.0]).unwrap()
    }

    #[test]
    fn affine_forward_and_gradient() {
        let net = affine();
        assert_eq!(net.forward(&[3.0]).unwrap(), vec![7.0]);
        let (pg, ig) = net.gradients(&[3.0], &[1.0]).unwrap();
        assert_eq!(ig, vec![2.0]);
        // d/dw = x, d/db = 1
        assert_eq!(pg, vec![3.0, 1.0]);
    }

    #[test]
    fn zero_weights_return_bias() {
        let mut net = DenseNet::zeros(vec![3, 2], vec![Activation::Identity]).unwrap();
        net.set_output_bias(&[0.5, -1.5]).unwrap();
        assert_eq!(net.forward(&[9.0, -4.0, 2.0]).unwrap(), vec![0.5, -1.5]);
    }

    #[test]
    fn tanh_of_zero_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = DenseNet::random(vec![4, 5], vec![Activation::Tanh], &mut rng).unwrap();
        assert_eq!(net.forward(&[0.0; 4]).unwrap(), vec![0.0; 5]);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let net = affine();
        assert!(matches!(net.forward(&[1.0, 2.0]), Err(Error::Dimension { .. })));
        assert!(matches!(net.gradients(&[1.0], &[1.0, 1.0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn non_finite_reports_layer() {
        let net = DenseNet::new(
            vec![1, 2, 1],
            vec![Activation::Identity, Activation::Identity],
            vec![1e300, 1e300, 0.0, 0.0, 1e300, 1e300, 0.0],
        )
        .unwrap();
        match net.gradients(&[1e300], &[1e300]) {
            Err(Error::NonFinite { layer, .. }) => assert_eq!(layer, 0),
            other => panic!("expected non-finite error, got {other:?}"),
        }
    }

    #[test]
    fn relu_gradient_is_masked() {
        let net = DenseNet::new(vec![1, 1], vec![Activation::Relu], vec![1.0, 0.0]).unwrap();
        let (_, ig) = net.gradients(&[-2.0], &[1.0]).unwrap();
        assert_eq!(ig, vec![0.0]);
        let (_, ig) = net.gradients(&[2.0], &[1.0]).unwrap();
        assert_eq!(ig, vec![1.0]);
    }
}
