//! Dense layers and multi-layer perceptrons with hand-written backpropagation.
//!
//! Forward passes are pure. A pass that needs a backward step returns an
//! [`MlpTape`] holding the per-layer activations; [`Mlp::backward`] consumes
//! that tape and accumulates into the gradient buffers carried by each layer.
//! The same `Mlp` can be run many times per sample (the evolution unit is)
//! because each call gets its own tape.

use serde::{Deserialize, Serialize};

use super::ops::sigmoid;
use super::rng::Rng;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `y`.
    fn derivative(self, z: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Identity => 1.0,
        }
    }
}

/// `y = activation(W x + b)` with `W` stored row-major as `out_dim x in_dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LayerRecord", into = "LayerRecord")]
pub struct DenseLayer {
    in_dim: usize,
    out_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
    pub grad_weights: Vec<f64>,
    pub grad_bias: Vec<f64>,
}

/// On-disk form of a layer: shape plus row-major values, no gradient slots.
#[derive(Serialize, Deserialize)]
struct LayerRecord {
    in_dim: usize,
    out_dim: usize,
    activation: Activation,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl From<DenseLayer> for LayerRecord {
    fn from(l: DenseLayer) -> Self {
        LayerRecord { in_dim: l.in_dim, out_dim: l.out_dim, activation: l.activation, weights: l.weights, bias: l.bias }
    }
}

impl TryFrom<LayerRecord> for DenseLayer {
    type Error = Error;

    fn try_from(r: LayerRecord) -> Result<Self> {
        DenseLayer::from_parts(r.in_dim, r.out_dim, r.weights, r.bias, r.activation)
    }
}

impl DenseLayer {
    /// Glorot-uniform weights in `[-a, a]`, `a = sqrt(6 / (in + out))`, zero bias.
    pub fn new(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut Rng) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::config("layer dims must be > 0"));
        }
        let a = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let weights = (0..in_dim * out_dim).map(|_| rng.uniform(-a, a)).collect();
        Self::from_parts(in_dim, out_dim, weights, vec![0.0; out_dim], activation)
    }

    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Result<Self> {
        Self::from_parts(in_dim, out_dim, vec![0.0; in_dim * out_dim], vec![0.0; out_dim], activation)
    }

    /// Square identity matrix with zero bias.
    pub fn identity(dim: usize, activation: Activation) -> Result<Self> {
        let mut l = Self::zeros(dim, dim, activation)?;
        for i in 0..dim {
            l.weights[i * dim + i] = 1.0;
        }
        Ok(l)
    }

    pub fn from_parts(
        in_dim: usize,
        out_dim: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
        activation: Activation,
    ) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::config("layer dims must be > 0"));
        }
        if weights.len() != in_dim * out_dim || bias.len() != out_dim {
            return Err(Error::config(format!(
                "layer {in_dim}->{out_dim}: got {} weights and {} biases",
                weights.len(),
                bias.len()
            )));
        }
        if !weights.iter().chain(&bias).all(|v| v.is_finite()) {
            return Err(Error::numerical("non-finite layer parameter"));
        }
        Ok(Self {
            in_dim,
            out_dim,
            grad_weights: vec![0.0; weights.len()],
            grad_bias: vec![0.0; out_dim],
            weights,
            bias,
            activation,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    /// Returns `(pre_activation, output)`.
    fn forward_parts(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut pre = self.bias.clone();
        for (o, z) in pre.iter_mut().enumerate() {
            let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
            *z += row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
        let out = pre.iter().map(|&z| self.activation.apply(z)).collect();
        (pre, out)
    }

    pub fn zero_grad(&mut self) {
        self.grad_weights.iter_mut().for_each(|g| *g = 0.0);
        self.grad_bias.iter_mut().for_each(|g| *g = 0.0);
    }
}

/// Activations recorded by [`Mlp::forward_tape`].
#[derive(Debug, Clone)]
pub struct MlpTape {
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    outputs: Vec<Vec<f64>>,
}

impl MlpTape {
    pub fn output(&self) -> &[f64] {
        self.outputs.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<DenseLayer>", into = "Vec<DenseLayer>")]
pub struct Mlp {
    layers: Vec<DenseLayer>,
}

impl TryFrom<Vec<DenseLayer>> for Mlp {
    type Error = Error;

    fn try_from(layers: Vec<DenseLayer>) -> Result<Self> {
        Mlp::from_layers(layers)
    }
}

impl From<Mlp> for Vec<DenseLayer> {
    fn from(m: Mlp) -> Self {
        m.layers
    }
}

impl Mlp {
    /// Builds `dims[0] -> dims[1] -> ... -> dims[last]` with `hidden` on every
    /// layer but the last, which uses `output`.
    pub fn new(dims: &[usize], hidden: Activation, output: Activation, rng: &mut Rng) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::config("an MLP needs at least input and output dims"));
        }
        let last = dims.len() - 2;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| DenseLayer::new(w[0], w[1], if i == last { output } else { hidden }, rng))
            .collect::<Result<Vec<_>>>()?;
        Self::from_layers(layers)
    }

    pub fn from_layers(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::config("an MLP needs at least one layer"));
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(Error::config(format!(
                    "layer {k} outputs {} but layer {} expects {}",
                    pair[0].out_dim,
                    k + 1,
                    pair[1].in_dim
                )));
            }
        }
        Ok(Self { layers })
    }

    /// Same shapes and activations as `self`, every parameter zero.
    pub fn zeroed(&self) -> Self {
        let mut m = self.clone();
        for l in &mut m.layers {
            l.weights.iter_mut().for_each(|w| *w = 0.0);
            l.bias.iter_mut().for_each(|b| *b = 0.0);
        }
        m
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.in_dim() {
            return Err(Error::config(format!("MLP expects input of dim {}, got {}", self.in_dim(), x.len())));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut h = x.to_vec();
        for l in &self.layers {
            h = l.forward_parts(&h).1;
        }
        Ok(h)
    }

    pub fn forward_tape(&self, x: &[f64]) -> Result<(Vec<f64>, MlpTape)> {
        self.check_input(x)?;
        let mut tape = MlpTape {
            inputs: Vec::with_capacity(self.layers.len()),
            pre: Vec::with_capacity(self.layers.len()),
            outputs: Vec::with_capacity(self.layers.len()),
        };
        let mut h = x.to_vec();
        for l in &self.layers {
            let (pre, out) = l.forward_parts(&h);
            tape.inputs.push(h);
            tape.pre.push(pre);
            h = out.clone();
            tape.outputs.push(out);
        }
        Ok((h, tape))
    }

    /// Accumulates parameter gradients for `grad_out = dL/d(output)` and
    /// returns `dL/d(input)`.
    pub fn backward(&mut self, tape: &MlpTape, grad_out: &[f64]) -> Result<Vec<f64>> {
        let shapes_match = tape.inputs.len() == self.layers.len()
            && self.layers.iter().zip(&tape.inputs).all(|(l, x)| l.in_dim == x.len());
        if !shapes_match {
            return Err(Error::Usage("backward called with a tape that was not recorded on this MLP".into()));
        }
        if grad_out.len() != self.out_dim() {
            return Err(Error::config(format!("grad_out has dim {}, MLP outputs {}", grad_out.len(), self.out_dim())));
        }
        let mut grad = grad_out.to_vec();
        for (k, layer) in self.layers.iter_mut().enumerate().rev() {
            let x = &tape.inputs[k];
            let delta: Vec<f64> = grad
                .iter()
                .zip(&tape.pre[k])
                .zip(&tape.outputs[k])
                .map(|((g, &z), &y)| g * layer.activation.derivative(z, y))
                .collect();
            let mut grad_in = vec![0.0; layer.in_dim];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                layer.grad_bias[o] += d;
                let row = o * layer.in_dim;
                for i in 0..layer.in_dim {
                    layer.grad_weights[row + i] += d * x[i];
                    grad_in[i] += layer.weights[row + i] * d;
                }
            }
            grad = grad_in;
        }
        Ok(grad)
    }

    pub fn zero_grad(&mut self) {
        self.layers.iter_mut().for_each(DenseLayer::zero_grad);
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(DenseLayer::param_count).sum()
    }
}

/// Anything that owns trainable layers, visited in a fixed order.
///
/// Optimizer state and checkpoints index layers by this order.
pub trait Parameterized {
    fn layers(&self) -> Vec<&DenseLayer>;
    fn layers_mut(&mut self) -> Vec<&mut DenseLayer>;

    fn zero_grad(&mut self) {
        for l in self.layers_mut() {
            l.zero_grad();
        }
    }

    fn param_count(&self) -> usize {
        self.layers().iter().map(|l| l.param_count()).sum()
    }

    /// Multiplies every accumulated gradient by `factor`.
    fn scale_grads(&mut self, factor: f64) {
        for l in self.layers_mut() {
            l.grad_weights.iter_mut().for_each(|g| *g *= factor);
            l.grad_bias.iter_mut().for_each(|g| *g *= factor);
        }
    }
}

impl Parameterized for Mlp {
    fn layers(&self) -> Vec<&DenseLayer> {
        self.layers.iter().collect()
    }

    fn layers_mut(&mut self) -> Vec<&mut DenseLayer> {
        self.layers.iter_mut().collect()
    }
}
