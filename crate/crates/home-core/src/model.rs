//! Small dense encoder/projector network with exact reverse-mode gradients.
//!
//! The encoder maps inputs to representation features (used by the linear
//! probe); the projector maps representations to embedding features (used by
//! the loss). Layers are affine with relu or identity activations; the
//! backward pass is hand-derived, with finite differences serving as a test
//! oracle only.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{HomeError, Result};
use crate::matrix::Mat;
use crate::rng::{stream, TAG_INIT};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
}

/// One affine layer: y = act(x W^T + b), weights stored out x in.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Mat,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn new(weights: Mat, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if bias.len() != weights.rows() {
            return Err(HomeError::ShapeMismatch {
                context: "Layer::new",
                expected: (weights.rows(), 1),
                got: (bias.len(), 1),
            });
        }
        if !weights.is_finite() || bias.iter().any(|v| !v.is_finite()) {
            return Err(HomeError::NonFinite { context: "Layer::new" });
        }
        Ok(Self {
            weights,
            bias,
            activation,
        })
    }

    pub fn output_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.weights.cols()
    }
}

/// Network widths: input -> encoder hidden layers (relu, last one is the
/// representation) -> three projector layers of width projector_dim (relu
/// between, identity last).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelDims {
    pub input_dim: usize,
    pub encoder_hidden: Vec<usize>,
    pub projector_dim: usize,
}

impl ModelDims {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.projector_dim == 0 || self.encoder_hidden.is_empty() {
            return Err(HomeError::InvalidConfig {
                message: alloc::format!(
                    "dims need input_dim > 0, projector_dim > 0, and encoder hidden layers"
                ),
            });
        }
        if self.encoder_hidden.iter().any(|&w| w == 0) {
            return Err(HomeError::InvalidConfig {
                message: alloc::format!("encoder hidden widths must be positive"),
            });
        }
        Ok(())
    }

    pub fn representation_dim(&self) -> usize {
        *self.encoder_hidden.last().unwrap_or(&0)
    }
}

/// Encoder followed by projector, stored as one layer chain with the
/// encoder/projector boundary marked.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layers: Vec<Layer>,
    encoder_len: usize,
}

/// Per-layer parameter gradients, shape-matching a model's layer chain.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Mat,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

impl Gradients {
    pub fn zeros_like(model: &MlpModel) -> Self {
        Self {
            layers: model
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weights: Mat::zeros(l.weights.rows(), l.weights.cols()),
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weights.scale(factor);
            for b in &mut l.bias {
                *b *= factor;
            }
        }
    }
}

/// Activations cached by a forward pass: activations[0] is the input,
/// activations[l + 1] the output of layer l.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    activations: Vec<Mat>,
    encoder_len: usize,
}

impl ForwardPass {
    /// Encoder output (probe features).
    pub fn representations(&self) -> &Mat {
        &self.activations[self.encoder_len]
    }

    /// Projector output (loss features).
    pub fn embeddings(&self) -> &Mat {
        self.activations.last().expect("non-empty chain")
    }

    /// All cached activations: entry 0 is the input, entry l + 1 the output
    /// of layer l.
    pub fn activations(&self) -> &[Mat] {
        &self.activations
    }
}

impl MlpModel {
    /// Builds from an explicit layer chain. `encoder_len` marks how many
    /// leading layers form the encoder.
    pub fn from_layers(layers: Vec<Layer>, encoder_len: usize) -> Result<Self> {
        if layers.is_empty() || encoder_len == 0 || encoder_len > layers.len() {
            return Err(HomeError::InvalidConfig {
                message: alloc::format!("layer chain and encoder boundary must be non-trivial"),
            });
        }
        for w in layers.windows(2) {
            if w[1].input_dim() != w[0].output_dim() {
                return Err(HomeError::ShapeMismatch {
                    context: "MlpModel::from_layers",
                    expected: (w[0].output_dim(), 0),
                    got: (w[1].input_dim(), 0),
                });
            }
        }
        Ok(Self { layers, encoder_len })
    }

    /// Seeded init: weights uniform in (-1/sqrt(fan_in), 1/sqrt(fan_in)),
    /// filled row-major per layer from an independent stream, biases zero.
    pub fn init(dims: &ModelDims, seed: u64) -> Result<Self> {
        dims.validate()?;
        let mut widths = vec![dims.input_dim];
        widths.extend_from_slice(&dims.encoder_hidden);
        let encoder_len = dims.encoder_hidden.len();
        let mut activations: Vec<Activation> = vec![Activation::Relu; encoder_len];
        widths.extend_from_slice(&[dims.projector_dim; 3]);
        activations.extend_from_slice(&[Activation::Relu, Activation::Relu, Activation::Identity]);

        let mut layers = Vec::with_capacity(activations.len());
        for (l, act) in activations.iter().enumerate() {
            let (fan_in, fan_out) = (widths[l], widths[l + 1]);
            let bound = 1.0 / crate::math::sqrt(fan_in as f64);
            let mut rng = stream(seed, TAG_INIT, l as u64, 0);
            let mut data = Vec::with_capacity(fan_out * fan_in);
            for _ in 0..fan_out * fan_in {
                data.push(rng.gen_range(-bound..bound));
            }
            layers.push(Layer {
                weights: Mat::from_vec(fan_out, fan_in, data)?,
                bias: vec![0.0; fan_out],
                activation: *act,
            });
        }
        Self::from_layers(layers, encoder_len)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn encoder_len(&self) -> usize {
        self.encoder_len
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn representation_dim(&self) -> usize {
        self.layers[self.encoder_len - 1].output_dim()
    }

    pub fn embedding_dim(&self) -> usize {
        self.layers.last().expect("non-empty").output_dim()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.is_finite() && l.bias.iter().all(|v| v.is_finite()))
    }

    pub fn forward(&self, inputs: &Mat) -> Result<ForwardPass> {
        if inputs.cols() != self.input_dim() {
            return Err(HomeError::ShapeMismatch {
                context: "forward",
                expected: (inputs.rows(), self.input_dim()),
                got: (inputs.rows(), inputs.cols()),
            });
        }
        let n = inputs.rows();
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(inputs.clone());
        for (l, layer) in self.layers.iter().enumerate() {
            let x = activations.last().expect("seeded with input");
            let (out_dim, in_dim) = (layer.output_dim(), layer.input_dim());
            let mut y = Mat::zeros(n, out_dim);
            for row in 0..n {
                let xr = x.row(row);
                let yr = y.row_mut(row);
                for o in 0..out_dim {
                    let wr = layer.weights.row(o);
                    let mut acc = layer.bias[o];
                    for i in 0..in_dim {
                        acc += wr[i] * xr[i];
                    }
                    yr[o] = match layer.activation {
                        Activation::Identity => acc,
                        Activation::Relu => acc.max(0.0),
                    };
                }
            }
            if !y.is_finite() {
                return Err(HomeError::LayerNonFinite { layer: l });
            }
            activations.push(y);
        }
        Ok(ForwardPass {
            activations,
            encoder_len: self.encoder_len,
        })
    }

    /// Accumulates parameter gradients for one view's upstream
    /// dL/d(embeddings) into `grads`. Call once per view to sum gradients
    /// across views.
    pub fn backward_into(
        &self,
        pass: &ForwardPass,
        upstream: &Mat,
        grads: &mut Gradients,
    ) -> Result<()> {
        self.check_cache(pass)?;
        let last = pass.activations.last().expect("non-empty chain");
        if upstream.rows() != last.rows() || upstream.cols() != last.cols() {
            return Err(HomeError::ShapeMismatch {
                context: "backward upstream",
                expected: (last.rows(), last.cols()),
                got: (upstream.rows(), upstream.cols()),
            });
        }
        if grads.layers.len() != self.layers.len() {
            return Err(HomeError::ShapeMismatch {
                context: "backward grads",
                expected: (self.layers.len(), 0),
                got: (grads.layers.len(), 0),
            });
        }
        let n = upstream.rows();
        let mut delta = upstream.clone();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let (out_dim, in_dim) = (layer.output_dim(), layer.input_dim());
            let x = &pass.activations[l];
            let y = &pass.activations[l + 1];
            // Relu derivative from the cached output: zero output means the
            // unit was clamped (the derivative at exactly zero is taken as 0).
            if layer.activation == Activation::Relu {
                for row in 0..n {
                    let yr = y.row(row);
                    let dr = delta.row_mut(row);
                    for o in 0..out_dim {
                        if yr[o] <= 0.0 {
                            dr[o] = 0.0;
                        }
                    }
                }
            }
            let lg = &mut grads.layers[l];
            let mut prev = (l > 0).then(|| Mat::zeros(n, in_dim));
            for row in 0..n {
                let xr = x.row(row);
                let dr = delta.row(row);
                for o in 0..out_dim {
                    let d = dr[o];
                    if d == 0.0 {
                        continue;
                    }
                    lg.bias[o] += d;
                    let gw = lg.weights.row_mut(o);
                    for i in 0..in_dim {
                        gw[i] += d * xr[i];
                    }
                    if let Some(prev) = prev.as_mut() {
                        let pr = prev.row_mut(row);
                        let wr = self.layers[l].weights.row(o);
                        for i in 0..in_dim {
                            pr[i] += d * wr[i];
                        }
                    }
                }
            }
            if let Some(prev) = prev {
                delta = prev;
            }
        }
        Ok(())
    }

    fn check_cache(&self, pass: &ForwardPass) -> Result<()> {
        let matches = pass.activations.len() == self.layers.len() + 1
            && pass.encoder_len == self.encoder_len
            && self
                .layers
                .iter()
                .enumerate()
                .all(|(l, layer)| {
                    pass.activations[l].cols() == layer.input_dim()
                        && pass.activations[l + 1].cols() == layer.output_dim()
                });
        if !matches {
            return Err(HomeError::ShapeMismatch {
                context: "stale forward cache",
                expected: (self.layers.len() + 1, 0),
                got: (pass.activations.len(), 0),
            });
        }
        Ok(())
    }
}
