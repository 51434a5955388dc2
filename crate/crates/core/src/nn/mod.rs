//! Dense feed-forward networks with a recorded forward pass and exact
//! reverse-mode parameter gradients.
//!
//! A [`DenseNet`] is a chain of affine layers `y = act(W x + b)` where `act` is
//! `tanh` or the identity. [`DenseNet::record`] runs the forward pass and keeps
//! every intermediate activation in a [`GradientTape`]; [`DenseNet::backward`]
//! consumes the tape together with `dL/d(output)` and accumulates
//! `dL/dW`, `dL/db` for every layer.
//!
//! Weights are stored row-major with shape `(out_dim, in_dim)`.

mod adam;

pub use adam::Adam;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    in_dim: usize,
    out_dim: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
    activation: Activation,
}

impl Dense {
    pub fn new(
        in_dim: usize,
        out_dim: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
        activation: Activation,
    ) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::Config("layer dimensions must be > 0".into()));
        }
        check_dim("dense weights", in_dim * out_dim, weights.len())?;
        check_dim("dense bias", out_dim, bias.len())?;
        Ok(Self {
            in_dim,
            out_dim,
            weights,
            bias,
            activation,
        })
    }

    /// Scaled-uniform initialisation: `U(-a, a)` with `a = gain * sqrt(3 / fan_in)`,
    /// giving weight variance `gain^2 / fan_in`. Biases start at zero.
    pub fn init<R: Rng + ?Sized>(
        in_dim: usize,
        out_dim: usize,
        gain: f64,
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let limit = gain * (3.0 / in_dim.max(1) as f64).sqrt();
        let weights = (0..in_dim * out_dim)
            .map(|_| {
                if limit > 0.0 {
                    rng.gen_range(-limit..limit)
                } else {
                    0.0
                }
            })
            .collect();
        Self::new(in_dim, out_dim, weights, vec![0.0; out_dim], activation)
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    fn forward_into(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.bias.iter().zip(self.weights.chunks_exact(self.in_dim)).map(
            |(b, row)| {
                let z = row.iter().zip(x).fold(*b, |acc, (w, xi)| acc + w * xi);
                self.activation.apply(z)
            },
        ));
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    layers: Vec<Dense>,
}

/// Activations recorded during a forward pass. `activations[0]` is the input,
/// `activations[i + 1]` the output of layer `i`.
#[derive(Debug, Clone)]
pub struct GradientTape {
    shape: Vec<(usize, usize)>,
    activations: Vec<Vec<f64>>,
}

impl GradientTape {
    pub fn output(&self) -> &[f64] {
        self.activations.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn input(&self) -> &[f64] {
        &self.activations[0]
    }
}

/// Parameter gradients laid out exactly like the network's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &DenseNet) -> Self {
        Self {
            weights: net.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            bias: net.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(f64::is_finite)
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.weights
            .iter()
            .zip(&self.bias)
            .flat_map(|(w, b)| w.iter().chain(b.iter()).copied())
    }

    pub fn max_abs(&self) -> f64 {
        self.iter().fold(0.0, |m, g| m.max(g.abs()))
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.iter().collect()
    }
}

impl DenseNet {
    pub fn new(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("network needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            check_dim("layer chaining", pair[0].out_dim, pair[1].in_dim)?;
        }
        Ok(Self { layers })
    }

    /// Tanh MLP with an identity output layer. Hidden layers use gain 1.0,
    /// the output layer uses `output_gain`.
    pub fn mlp<R: Rng + ?Sized>(
        input: usize,
        hidden: &[usize],
        output: usize,
        output_gain: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut prev = input;
        for &h in hidden {
            layers.push(Dense::init(prev, h, 1.0, Activation::Tanh, rng)?);
            prev = h;
        }
        layers.push(Dense::init(prev, output, output_gain, Activation::Identity, rng)?);
        Self::new(layers)
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        check_dim("network input", self.input_dim(), input.len())?;
        let mut x = input.to_vec();
        let mut y = Vec::new();
        for layer in &self.layers {
            layer.forward_into(&x, &mut y);
            std::mem::swap(&mut x, &mut y);
        }
        Ok(x)
    }

    pub fn record(&self, input: &[f64]) -> Result<GradientTape> {
        check_dim("network input", self.input_dim(), input.len())?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input.to_vec());
        for layer in &self.layers {
            let mut y = Vec::with_capacity(layer.out_dim);
            layer.forward_into(activations.last().expect("input recorded"), &mut y);
            activations.push(y);
        }
        Ok(GradientTape {
            shape: self.shape(),
            activations,
        })
    }

    /// Accumulates `dL/dθ` into `grads` given `dL/d(output)` for the recorded pass.
    pub fn backward(
        &self,
        tape: &GradientTape,
        d_output: &[f64],
        grads: &mut Gradients,
    ) -> Result<()> {
        if tape.shape != self.shape() {
            return Err(Error::TapeMismatch);
        }
        if grads.weights.len() != self.layers.len() {
            return Err(Error::Usage("gradient buffer shape differs from network".into()));
        }
        check_dim("output gradient", self.output_dim(), d_output.len())?;

        let mut delta = d_output.to_vec();
        for (idx, layer) in self.layers.iter().enumerate().rev() {
            let y = &tape.activations[idx + 1];
            let x = &tape.activations[idx];
            for (d, &yo) in delta.iter_mut().zip(y) {
                *d *= layer.activation.derivative_from_output(yo);
            }

            let gw = &mut grads.weights[idx];
            let gb = &mut grads.bias[idx];
            for (o, &d) in delta.iter().enumerate() {
                gb[o] += d;
                if d != 0.0 {
                    let row = &mut gw[o * layer.in_dim..(o + 1) * layer.in_dim];
                    for (g, xi) in row.iter_mut().zip(x) {
                        *g += d * xi;
                    }
                }
            }

            if idx > 0 {
                let mut prev = vec![0.0; layer.in_dim];
                for (row, &d) in layer.weights.chunks_exact(layer.in_dim).zip(&delta) {
                    for (p, w) in prev.iter_mut().zip(row) {
                        *p += w * d;
                    }
                }
                delta = prev;
            }
        }
        Ok(())
    }

    /// Convenience wrapper: fresh gradients for a single recorded pass.
    pub fn gradients(&self, tape: &GradientTape, d_output: &[f64]) -> Result<Gradients> {
        let mut grads = Gradients::zeros_like(self);
        self.backward(tape, d_output, &mut grads)?;
        Ok(grads)
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
            .collect()
    }

    pub fn set_flat_params(&mut self, params: &[f64]) -> Result<()> {
        check_dim("flat parameters", self.param_count(), params.len())?;
        let mut it = params.iter().copied();
        for layer in &mut self.layers {
            for w in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
                *w = it.next().expect("length checked");
            }
        }
        Ok(())
    }

    fn shape(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(|l| (l.in_dim, l.out_dim)).collect()
    }
}
