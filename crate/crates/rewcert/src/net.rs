//! Scalar feed-forward networks with exact gradients and sound bounds.
//!
//! [`MlpNet`] is a dense multilayer perceptron with per-layer activations
//! from {relu, tanh, sigmoid, linear}. Besides the usual forward pass and
//! reverse-mode gradient, every network supports two *sound* analyses used
//! during certificate validation:
//!
//! * [`propagate_interval`] — interval bound propagation. Affine layers are
//!   evaluated with min/max corner arithmetic per row; the activations are
//!   monotone, so their image is the image of the endpoints. The result
//!   encloses the network image of the input box.
//! * [`lipschitz_l1`] — a global Lipschitz constant with respect to the L1
//!   norm: the product over layers of the activation's Lipschitz constant
//!   (1 for relu/tanh/linear, 1/4 for sigmoid) and the maximum absolute
//!   column sum of the weight matrix.
//!
//! Gradient conventions: `relu'(0) = 0`, and hinge losses downstream use the
//! same one-sided choice, so finite-difference checks agree away from kinks.
//!
//! The JSON wire format for a layer is `{"w": [[...]], "b": [...], "act":
//! "relu"}` with `w` in row-major output-by-input order; networks embed in
//! policies and certificates with this shape.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::arith::Interval;
use crate::error::{Error, Result};
use crate::space::Rect;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    Linear,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::Linear => z,
        }
    }

    /// Derivative expressed in terms of the pre-activation `z`.
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Sigmoid => {
                let s = 1.0 / (1.0 + (-z).exp());
                s * (1.0 - s)
            }
            Activation::Linear => 1.0,
        }
    }

    fn apply_interval(self, z: Interval) -> Interval {
        match self {
            Activation::Relu => z.relu(),
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => z.sigmoid(),
            Activation::Linear => z,
        }
    }

    /// Global Lipschitz constant of the activation.
    fn lipschitz(self) -> f64 {
        match self {
            Activation::Sigmoid => 0.25,
            _ => 1.0,
        }
    }
}

/// A dense layer: `a' = act(w a + b)` with `w` stored row-major
/// (`w[i][j]` connects input `j` to output `i`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Layer {
    pub w: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub act: Activation,
}

impl Layer {
    pub fn out_dim(&self) -> usize {
        self.b.len()
    }

    pub fn in_dim(&self) -> usize {
        self.w.first().map_or(0, |row| row.len())
    }
}

/// A feed-forward network: a non-empty stack of [`Layer`]s.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MlpNet {
    pub layers: Vec<Layer>,
}

impl MlpNet {
    /// Validates layer shapes: every weight matrix is rectangular, matches
    /// its bias length, and consecutive layers chain.
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::InvalidArgument("network has no layers".into()));
        }
        let mut prev_out = None;
        for (li, layer) in self.layers.iter().enumerate() {
            if layer.w.is_empty() || layer.w[0].is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "layer {li} has an empty weight matrix"
                )));
            }
            let in_dim = layer.w[0].len();
            if layer.w.iter().any(|row| row.len() != in_dim) {
                return Err(Error::InvalidArgument(format!(
                    "layer {li} weight matrix is ragged"
                )));
            }
            if layer.w.len() != layer.b.len() {
                return Err(Error::InvalidArgument(format!(
                    "layer {li} has {} rows but {} biases",
                    layer.w.len(),
                    layer.b.len()
                )));
            }
            if let Some(p) = prev_out {
                if in_dim != p {
                    return Err(Error::Dimension { expected: p, got: in_dim });
                }
            }
            if layer
                .w
                .iter()
                .flatten()
                .chain(layer.b.iter())
                .any(|v| !v.is_finite())
            {
                return Err(Error::InvalidArgument(format!(
                    "layer {li} has a non-finite parameter"
                )));
            }
            prev_out = Some(layer.out_dim());
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim()
    }

    /// Random network with the given hidden widths and hidden activation;
    /// the output layer is linear unless `output_act` says otherwise.
    /// Weights are scaled by `sqrt(2 / fan_in)` for relu and
    /// `sqrt(1 / fan_in)` otherwise; biases start at zero.
    pub fn init(
        input_dim: usize,
        hidden: &[usize],
        hidden_act: Activation,
        output_dim: usize,
        output_act: Activation,
        rng: &mut impl Rng,
    ) -> Self {
        let mut dims = vec![input_dim];
        dims.extend_from_slice(hidden);
        dims.push(output_dim);
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for li in 0..dims.len() - 1 {
            let (fan_in, fan_out) = (dims[li], dims[li + 1]);
            let act = if li + 2 == dims.len() { output_act } else { hidden_act };
            let scale = match hidden_act {
                Activation::Relu => (2.0 / fan_in as f64).sqrt(),
                _ => (1.0 / fan_in as f64).sqrt(),
            };
            let dist = rand_distr::Normal::new(0.0, scale).unwrap();
            let w = (0..fan_out)
                .map(|_| (0..fan_in).map(|_| rng.sample(dist)).collect())
                .collect();
            layers.push(Layer { w, b: vec![0.0; fan_out], act });
        }
        MlpNet { layers }
    }

    /// Forward pass.
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.input_dim());
        let mut a: Vec<f64> = x.to_vec();
        for layer in &self.layers {
            let mut next = Vec::with_capacity(layer.out_dim());
            for (row, bias) in layer.w.iter().zip(&layer.b) {
                let z: f64 = row.iter().zip(&a).map(|(w, ai)| w * ai).sum::<f64>() + bias;
                next.push(layer.act.apply(z));
            }
            a = next;
        }
        a
    }

    /// Forward pass of a scalar-output network.
    pub fn forward_scalar(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(self.output_dim(), 1);
        self.forward(x)[0]
    }

    /// Number of trainable parameters.
    pub fn param_len(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.out_dim() * l.in_dim() + l.out_dim())
            .sum()
    }

    /// All parameters as one flat vector: per layer, weights row-major then
    /// biases.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_len());
        for layer in &self.layers {
            for row in &layer.w {
                out.extend_from_slice(row);
            }
            out.extend_from_slice(&layer.b);
        }
        out
    }

    /// Overwrites all parameters from a flat vector (the inverse of
    /// [`MlpNet::params_flat`]).
    pub fn set_params_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_len());
        let mut k = 0;
        for layer in &mut self.layers {
            for row in &mut layer.w {
                let n = row.len();
                row.copy_from_slice(&flat[k..k + n]);
                k += n;
            }
            let n = layer.b.len();
            layer.b.copy_from_slice(&flat[k..k + n]);
            k += n;
        }
    }

    /// Accumulates `upstream * d(output)/d(theta)` into `grad` (flat layout
    /// as in [`MlpNet::params_flat`]) for a scalar-output network, and
    /// returns the forward value.
    pub fn backprop_scalar_into(&self, x: &[f64], upstream: f64, grad: &mut [f64]) -> f64 {
        debug_assert_eq!(self.output_dim(), 1);
        debug_assert_eq!(grad.len(), self.param_len());

        // Forward pass, caching inputs and pre-activations per layer.
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len() + 1);
        let mut pres: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        acts.push(x.to_vec());
        for layer in &self.layers {
            let a = acts.last().unwrap();
            let mut z = Vec::with_capacity(layer.out_dim());
            for (row, bias) in layer.w.iter().zip(&layer.b) {
                z.push(row.iter().zip(a).map(|(w, ai)| w * ai).sum::<f64>() + bias);
            }
            let post = z.iter().map(|&zi| layer.act.apply(zi)).collect();
            pres.push(z);
            acts.push(post);
        }
        let value = acts.last().unwrap()[0];

        // Backward pass: delta holds d(out)/d(z) for the current layer.
        let mut delta = vec![upstream * self.layers.last().unwrap().act.derivative(pres.last().unwrap()[0])];
        // Parameter offsets per layer, computed up front.
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut k = 0;
        for layer in &self.layers {
            offsets.push(k);
            k += layer.out_dim() * layer.in_dim() + layer.out_dim();
        }
        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let a_in = &acts[li];
            let off = offsets[li];
            let in_dim = layer.in_dim();
            for (i, &d) in delta.iter().enumerate() {
                let row_off = off + i * in_dim;
                for (j, &aj) in a_in.iter().enumerate() {
                    grad[row_off + j] += d * aj;
                }
                grad[off + layer.out_dim() * in_dim + i] += d;
            }
            if li > 0 {
                let prev_layer = &self.layers[li - 1];
                let prev_pre = &pres[li - 1];
                let mut next_delta = vec![0.0; in_dim];
                for (i, &d) in delta.iter().enumerate() {
                    for (j, nd) in next_delta.iter_mut().enumerate() {
                        *nd += d * layer.w[i][j];
                    }
                }
                for (j, nd) in next_delta.iter_mut().enumerate() {
                    *nd *= prev_layer.act.derivative(prev_pre[j]);
                }
                delta = next_delta;
            }
        }
        value
    }

    /// Gradient of the scalar output at `x` (flat layout).
    pub fn backprop_scalar(&self, x: &[f64], upstream: f64) -> Vec<f64> {
        let mut grad = vec![0.0; self.param_len()];
        self.backprop_scalar_into(x, upstream, &mut grad);
        grad
    }
}

/// Interval bound propagation over an input box: the result encloses
/// `{ net(x) : x in rect }`, one interval per output.
pub fn propagate_intervals(net: &MlpNet, rect: &Rect) -> Vec<Interval> {
    debug_assert_eq!(rect.dim(), net.input_dim());
    let mut a: Vec<Interval> = rect.intervals();
    for layer in &net.layers {
        let mut next = Vec::with_capacity(layer.out_dim());
        for (row, bias) in layer.w.iter().zip(&layer.b) {
            let mut lo = *bias;
            let mut hi = *bias;
            for (w, ai) in row.iter().zip(&a) {
                // Min/max corner arithmetic per coefficient sign.
                let (c1, c2) = (w * ai.lo, w * ai.hi);
                lo += c1.min(c2);
                hi += c1.max(c2);
            }
            next.push(layer.act.apply_interval(Interval::new(lo, hi)));
        }
        a = next;
    }
    a
}

/// Interval bound propagation for a scalar-output network.
pub fn propagate_interval(net: &MlpNet, rect: &Rect) -> Interval {
    debug_assert_eq!(net.output_dim(), 1);
    propagate_intervals(net, rect)[0]
}

/// Global L1->L1 Lipschitz bound: the product over layers of the activation
/// constant and the maximum absolute column sum of the weights.
pub fn lipschitz_l1(net: &MlpNet) -> f64 {
    net.layers
        .iter()
        .map(|layer| {
            let in_dim = layer.in_dim();
            let mut best = 0.0f64;
            for j in 0..in_dim {
                let col: f64 = layer.w.iter().map(|row| row[j].abs()).sum();
                best = best.max(col);
            }
            best * layer.act.lipschitz()
        })
        .product()
}
