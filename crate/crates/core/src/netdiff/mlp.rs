use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::DifferentiableMap;
use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Identity,
    Relu,
    Softmax,
}

impl Activation {
    pub fn tag(self) -> &'static str {
        match self {
            Activation::Identity => "id",
            Activation::Relu => "relu",
            Activation::Softmax => "softmax",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "id" => Some(Activation::Identity),
            "relu" => Some(Activation::Relu),
            "softmax" => Some(Activation::Softmax),
            _ => None,
        }
    }

    fn apply(self, z: &[f64]) -> Vec<f64> {
        match self {
            Activation::Identity => z.to_vec(),
            Activation::Relu => z.iter().map(|v| v.max(0.0)).collect(),
            Activation::Softmax => softmax(z),
        }
    }

    /// Pulls `g` back through the activation; `z` is the pre-activation and
    /// `a` the activation output.
    fn pullback(self, z: &[f64], a: &[f64], g: &mut [f64]) {
        match self {
            Activation::Identity => {}
            Activation::Relu => {
                for (gi, zi) in g.iter_mut().zip(z) {
                    if *zi <= 0.0 {
                        *gi = 0.0;
                    }
                }
            }
            Activation::Softmax => {
                let sg: f64 = a.iter().zip(g.iter()).map(|(s, v)| s * v).sum();
                for (gi, si) in g.iter_mut().zip(a) {
                    *gi = si * (*gi - sg);
                }
            }
        }
    }
}

/// Softmax with max subtraction.
pub(crate) fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// One affine layer followed by an activation. Weights are row-major,
/// `out_dim × in_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    in_dim: usize,
    out_dim: usize,
    weights: Vec<f64>,
    biases: Vec<f64>,
    activation: Activation,
}

impl Layer {
    pub fn new(
        in_dim: usize,
        out_dim: usize,
        weights: Vec<f64>,
        biases: Vec<f64>,
        activation: Activation,
    ) -> Result<Self> {
        let bad = |reason: String| Err(Error::Layer { layer: 0, reason });
        if in_dim == 0 || out_dim == 0 {
            return bad("dimensions must be positive".into());
        }
        if weights.len() != in_dim * out_dim {
            return bad(format!(
                "expected {} weights for {out_dim}x{in_dim}, got {}",
                in_dim * out_dim,
                weights.len()
            ));
        }
        if biases.len() != out_dim {
            return bad(format!("expected {out_dim} biases, got {}", biases.len()));
        }
        Ok(Self {
            in_dim,
            out_dim,
            weights,
            biases,
            activation,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }
    pub fn out_dim(&self) -> usize {
        self.out_dim
    }
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
    pub fn biases(&self) -> &[f64] {
        &self.biases
    }
    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }
    pub fn biases_mut(&mut self) -> &mut [f64] {
        &mut self.biases
    }

    fn affine(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.in_dim)
            .zip(&self.biases)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }

    fn affine_transpose(&self, g: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.in_dim];
        for (row, gi) in self.weights.chunks_exact(self.in_dim).zip(g) {
            for (o, w) in out.iter_mut().zip(row) {
                *o += w * gi;
            }
        }
        out
    }
}

/// Parameter gradient of one layer, same layout as the layer itself.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

/// A multilayer perceptron with dense layers.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpNetwork {
    layers: Vec<Layer>,
}

struct Tape {
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
}

impl MlpNetwork {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Layer {
                layer: 0,
                reason: "network has no layers".into(),
            });
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(Error::Layer {
                    layer: i + 1,
                    reason: format!(
                        "input dim {} does not match previous output dim {}",
                        pair[1].in_dim, pair[0].out_dim
                    ),
                });
            }
        }
        Ok(Self { layers })
    }

    /// Random network with the given layer widths; `hidden` is applied on every
    /// layer but the last, which uses `output`. Weights are He-scaled Gaussians.
    pub fn random<R: Rng + ?Sized>(
        widths: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::Config(
                "need at least input and output widths".into(),
            ));
        }
        let mut layers = Vec::with_capacity(widths.len() - 1);
        for (i, pair) in widths.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let w = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
            let b = Normal::new(0.0, 0.1).expect("positive std");
            let weights = (0..fan_in * fan_out).map(|_| w.sample(rng)).collect();
            let biases = (0..fan_out).map(|_| b.sample(rng)).collect();
            let act = if i + 2 == widths.len() {
                output
            } else {
                hidden
            };
            layers.push(
                Layer::new(fan_in, fan_out, weights, biases, act).map_err(|e| relabel(e, i))?,
            );
        }
        Self::new(layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.in_dim(), x.len())?;
        let mut a = x.to_vec();
        for layer in &self.layers {
            a = layer.activation.apply(&layer.affine(&a));
        }
        Ok(a)
    }

    /// Smallest absolute pre-activation over all relu layers at `x`; used to
    /// keep finite-difference probes away from kinks.
    pub fn relu_margin(&self, x: &[f64]) -> Result<f64> {
        let tape = self.record(x)?;
        Ok(self
            .layers
            .iter()
            .zip(&tape.pre)
            .filter(|(l, _)| l.activation == Activation::Relu)
            .flat_map(|(_, z)| z.iter().map(|v| v.abs()))
            .fold(f64::INFINITY, f64::min))
    }

    fn record(&self, x: &[f64]) -> Result<Tape> {
        check_dim(self.in_dim(), x.len())?;
        let mut tape = Tape {
            inputs: Vec::with_capacity(self.layers.len()),
            pre: Vec::with_capacity(self.layers.len()),
            post: Vec::with_capacity(self.layers.len()),
        };
        let mut a = x.to_vec();
        for layer in &self.layers {
            let z = layer.affine(&a);
            let next = layer.activation.apply(&z);
            tape.inputs.push(a);
            tape.pre.push(z);
            a = next.clone();
            tape.post.push(next);
        }
        Ok(tape)
    }

    pub fn vjp(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.out_dim(), u.len())?;
        let tape = self.record(x)?;
        let mut g = u.to_vec();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            layer
                .activation
                .pullback(&tape.pre[i], &tape.post[i], &mut g);
            g = layer.affine_transpose(&g);
        }
        Ok(g)
    }

    /// Output at `x` together with the gradient of `u · net(x)` with respect to
    /// every layer's parameters. Used by the small fitting routines that build
    /// toy surrogates.
    pub fn parameter_gradient(
        &self,
        x: &[f64],
        u: &[f64],
    ) -> Result<(Vec<f64>, Vec<LayerGradient>)> {
        check_dim(self.out_dim(), u.len())?;
        let tape = self.record(x)?;
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut g = u.to_vec();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            layer
                .activation
                .pullback(&tape.pre[i], &tape.post[i], &mut g);
            let input = &tape.inputs[i];
            let mut weights = Vec::with_capacity(layer.weights.len());
            for gi in &g {
                weights.extend(input.iter().map(|v| gi * v));
            }
            grads.push(LayerGradient {
                weights,
                biases: g.clone(),
            });
            g = layer.affine_transpose(&g);
        }
        grads.reverse();
        let out = tape.post.last().cloned().unwrap_or_default();
        Ok((out, grads))
    }
}

fn relabel(err: Error, layer: usize) -> Error {
    match err {
        Error::Layer { reason, .. } => Error::Layer { layer, reason },
        other => other,
    }
}

pub(crate) fn relabel_layer(err: Error, layer: usize) -> Error {
    relabel(err, layer)
}

impl DifferentiableMap for MlpNetwork {
    fn in_dim(&self) -> usize {
        MlpNetwork::in_dim(self)
    }
    fn out_dim(&self) -> usize {
        MlpNetwork::out_dim(self)
    }
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.forward(x)
    }
    fn vjp(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        MlpNetwork::vjp(self, x, u)
    }
}
