//! Small dense MLP with cached forward traces and vector-Jacobian
//! backpropagation. The networks here are tiny (tens of units), so plain
//! dynamic matrices are fine.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::policy::PolicyError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    pub fn name(&self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        }
    }

    pub fn from_name(name: &str) -> Result<Self, PolicyError> {
        match name {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            other => Err(PolicyError::UnknownActivation(other.to_string())),
        }
    }

    fn apply(&self, v: f64) -> f64 {
        match self {
            Activation::Tanh => v.tanh(),
            Activation::Relu => v.max(0.0),
        }
    }

    /// Derivative expressed through the activation output.
    fn derivative_from_output(&self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct Dense {
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
}

/// Multilayer perceptron; the activation is applied to all but the last
/// layer.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    pub activation: Activation,
}

/// Per-layer activations cached by the forward pass; `post[i]` is the output
/// of layer i after its nonlinearity (the last layer is linear).
#[derive(Clone, Debug)]
pub struct MlpTrace {
    pub input: DVector<f64>,
    pub post: Vec<DVector<f64>>,
}

/// Gradient buffers with the same shapes as the network parameters.
#[derive(Clone, Debug)]
pub struct MlpGrads {
    pub layers: Vec<Dense>,
}

impl Mlp {
    /// He-uniform style initialization scaled by fan-in; `head_scale`
    /// multiplies the final layer's initialization (zero silences it).
    pub fn init(
        sizes: &[usize],
        activation: Activation,
        head_scale: f64,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output sizes");
        let mut layers = Vec::with_capacity(sizes.len() - 1);
        for (li, pair) in sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let last = li == sizes.len() - 2;
            let bound = (6.0 / fan_in as f64).sqrt() * if last { head_scale } else { 1.0 };
            let weight = DMatrix::from_fn(fan_out, fan_in, |_, _| {
                (rng.random::<f64>() * 2.0 - 1.0) * bound
            });
            let bias = DVector::zeros(fan_out);
            layers.push(Dense { weight, bias });
        }
        Self { layers, activation }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().weight.nrows()
    }

    pub fn forward(&self, input: &DVector<f64>) -> (DVector<f64>, MlpTrace) {
        let mut post = Vec::with_capacity(self.layers.len());
        let mut cur = input.clone();
        for (li, layer) in self.layers.iter().enumerate() {
            let mut z = &layer.weight * &cur + &layer.bias;
            if li + 1 < self.layers.len() {
                z.apply(|v| *v = self.activation.apply(*v));
            }
            post.push(z.clone());
            cur = z;
        }
        (cur, MlpTrace { input: input.clone(), post })
    }

    /// Accumulates d(upstream . output)/d(params) into `grads` and returns
    /// the gradient with respect to the input.
    pub fn backprop(
        &self,
        trace: &MlpTrace,
        upstream: &DVector<f64>,
        grads: &mut MlpGrads,
    ) -> DVector<f64> {
        let mut delta = upstream.clone();
        for li in (0..self.layers.len()).rev() {
            if li + 1 < self.layers.len() {
                // chain through the activation of layer li
                let y = &trace.post[li];
                for (d, yv) in delta.iter_mut().zip(y.iter()) {
                    *d *= self.activation.derivative_from_output(*yv);
                }
            }
            let prev = if li == 0 { &trace.input } else { &trace.post[li - 1] };
            grads.layers[li].weight.ger(1.0, &delta, prev, 1.0);
            grads.layers[li].bias += &delta;
            let mut next = DVector::zeros(prev.len());
            next.gemv_tr(1.0, &self.layers[li].weight, &delta, 0.0);
            delta = next;
        }
        delta
    }

    pub fn zero_grads(&self) -> MlpGrads {
        MlpGrads {
            layers: self
                .layers
                .iter()
                .map(|l| Dense {
                    weight: DMatrix::zeros(l.weight.nrows(), l.weight.ncols()),
                    bias: DVector::zeros(l.bias.len()),
                })
                .collect(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }
}
