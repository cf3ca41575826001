//! Small dense networks: ReLU hidden layers, an affine output layer,
//! reverse-mode gradients and an Adam optimizer.
//!
//! Batches are row-major: one sample per row. Layer `i` maps
//! `a_{i+1} = relu(a_i W_i^T + b_i)` with `W_i` of shape `(out, in)`;
//! the last layer skips the ReLU.
//!
//! # Checkpoint format
//!
//! A checkpoint is a JSON object
//! `{"format": "urllc-slicing-mlp", "version": 1, "networks": {name: net}}`
//! where every `net` is `{"layer_sizes": [n0, .., nk], "params": [..]}`.
//! `params` concatenates, layer by layer, the weight matrix in row-major
//! `(out, in)` order followed by the bias vector.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub layer_sizes: Vec<usize>,
}

impl MlpSpec {
    pub fn new(layer_sizes: Vec<usize>) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.iter().any(|&n| n == 0) {
            return Err(Error::Config(format!("invalid layer sizes {layer_sizes:?}")));
        }
        Ok(Self { layer_sizes })
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().expect("at least two layers")
    }

    pub fn param_count(&self) -> usize {
        self.layer_sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weights: Array2::zeros((outputs, inputs)),
            bias: Array1::zeros(outputs),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    spec: MlpSpec,
    layers: Vec<Dense>,
}

/// Per-layer activations of a batched forward pass; `activations[0]` is the
/// input and the last entry the network output.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub activations: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        self.activations.last().expect("non-empty cache")
    }
}

/// Gradients with the same layout as the network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|x| x.is_finite()))
    }

    pub fn flatten(&self) -> Vec<f64> {
        flatten_layers(&self.layers)
    }
}

fn flatten_layers(layers: &[Dense]) -> Vec<f64> {
    let mut out = Vec::new();
    for l in layers {
        out.extend(l.weights.iter().copied());
        out.extend(l.bias.iter().copied());
    }
    out
}

impl Mlp {
    pub fn zeros(spec: MlpSpec) -> Self {
        let layers = spec
            .layer_sizes
            .windows(2)
            .map(|w| Dense::zeros(w[0], w[1]))
            .collect();
        Self { spec, layers }
    }

    /// Uniform Xavier weights in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn init_xavier<R: Rng + ?Sized>(spec: MlpSpec, rng: &mut R) -> Self {
        let mut net = Self::zeros(spec);
        for layer in &mut net.layers {
            let (fan_out, fan_in) = layer.weights.dim();
            let bound = xavier_bound(fan_in, fan_out);
            layer
                .weights
                .mapv_inplace(|_| rng.gen_range(-bound..=bound));
        }
        net
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    /// Single-sample forward pass.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.spec.input_dim() {
            return Err(Error::Usage(format!(
                "input of length {} for a network expecting {}",
                input.len(),
                self.spec.input_dim()
            )));
        }
        let mut x = Array1::from(input.to_vec());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = layer.weights.dot(&x) + &layer.bias;
            if i < last {
                z.mapv_inplace(relu);
            }
            x = z;
        }
        Ok(x.to_vec())
    }

    pub fn forward_batch(&self, inputs: ArrayView2<f64>) -> Result<ForwardCache> {
        if inputs.ncols() != self.spec.input_dim() {
            return Err(Error::Usage(format!(
                "batch with {} columns for a network expecting {}",
                inputs.ncols(),
                self.spec.input_dim()
            )));
        }
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(inputs.to_owned());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let prev = activations.last().expect("input pushed");
            let mut z = prev.dot(&layer.weights.t()) + &layer.bias;
            if i < last {
                z.mapv_inplace(relu);
            }
            activations.push(z);
        }
        Ok(ForwardCache { activations })
    }

    /// Gradient of `sum(output * output_grad)` with respect to every weight
    /// and bias, for the batch recorded in `cache`.
    pub fn backward(&self, cache: &ForwardCache, output_grad: ArrayView2<f64>) -> Result<Gradients> {
        let out = cache.output();
        if output_grad.dim() != out.dim() || cache.activations.len() != self.layers.len() + 1 {
            return Err(Error::Usage(format!(
                "output gradient of shape {:?} for output of shape {:?}",
                output_grad.dim(),
                out.dim()
            )));
        }
        let mut grads: Vec<Dense> = Vec::with_capacity(self.layers.len());
        let mut delta = output_grad.to_owned();
        for i in (0..self.layers.len()).rev() {
            let input = &cache.activations[i];
            let weights = delta.t().dot(input);
            let bias = delta.sum_axis(Axis(0));
            grads.push(Dense { weights, bias });
            if i > 0 {
                let mut back = delta.dot(&self.layers[i].weights);
                // ReLU derivative from the post-activation values
                ndarray::Zip::from(&mut back)
                    .and(input)
                    .for_each(|d, &a| {
                        if a <= 0.0 {
                            *d = 0.0;
                        }
                    });
                delta = back;
            }
        }
        grads.reverse();
        Ok(Gradients { layers: grads })
    }

    /// Convenience single-sample gradient.
    pub fn gradient(&self, input: &[f64], output_grad: &[f64]) -> Result<Gradients> {
        let x = ArrayView2::from_shape((1, input.len()), input)
            .map_err(|e| Error::Usage(e.to_string()))?;
        let g = ArrayView2::from_shape((1, output_grad.len()), output_grad)
            .map_err(|e| Error::Usage(e.to_string()))?;
        let cache = self.forward_batch(x)?;
        self.backward(&cache, g)
    }

    pub fn flat_params(&self) -> Vec<f64> {
        flatten_layers(&self.layers)
    }

    pub fn set_flat_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.spec.param_count() {
            return Err(Error::Config(format!(
                "{} parameters for a network with {}",
                params.len(),
                self.spec.param_count()
            )));
        }
        let mut it = params.iter().copied();
        for layer in &mut self.layers {
            layer.weights.iter_mut().for_each(|w| *w = it.next().expect("length checked"));
            layer.bias.iter_mut().for_each(|b| *b = it.next().expect("length checked"));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.flat_params().iter().all(|x| x.is_finite())
    }

    pub fn to_record(&self) -> NetworkRecord {
        NetworkRecord {
            layer_sizes: self.spec.layer_sizes.clone(),
            params: self.flat_params(),
        }
    }

    pub fn from_record(record: &NetworkRecord) -> Result<Self> {
        let mut net = Self::zeros(MlpSpec::new(record.layer_sizes.clone())?);
        net.set_flat_params(&record.params)?;
        Ok(net)
    }
}

pub fn xavier_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

fn relu(x: f64) -> f64 {
    x.max(0.0)
}

/// Adam with bias-corrected first and second moments.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    steps: i32,
    first: Vec<Dense>,
    second: Vec<Dense>,
}

impl Adam {
    pub fn new(spec: &MlpSpec, learning_rate: f64) -> Self {
        let zeros = Mlp::zeros(spec.clone()).layers;
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            steps: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    /// Descends along `grads`.
    pub fn step(&mut self, net: &mut Mlp, grads: &Gradients) -> Result<()> {
        if grads.layers.len() != net.layers.len() {
            return Err(Error::Usage("gradient layout does not match the network".into()));
        }
        if !grads.is_finite() {
            let bad = grads.flatten().iter().filter(|x| !x.is_finite()).count();
            return Err(Error::Training(format!(
                "{bad} non-finite gradient entries at optimizer step {}",
                self.steps + 1
            )));
        }
        self.steps += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.steps);
        let c2 = 1.0 - b2.powi(self.steps);
        let (lr, eps) = (self.learning_rate, self.epsilon);
        for (((layer, g), m), v) in net
            .layers
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            };
            ndarray::Zip::from(&mut layer.weights)
                .and(&g.weights)
                .and(&mut m.weights)
                .and(&mut v.weights)
                .for_each(|p, &g, m, v| update(p, g, m, v));
            ndarray::Zip::from(&mut layer.bias)
                .and(&g.bias)
                .and(&mut m.bias)
                .and(&mut v.bias)
                .for_each(|p, &g, m, v| update(p, g, m, v));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkRecord {
    pub layer_sizes: Vec<usize>,
    pub params: Vec<f64>,
}

pub const CHECKPOINT_FORMAT: &str = "urllc-slicing-mlp";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub networks: BTreeMap<String, NetworkRecord>,
}

impl Checkpoint {
    pub fn new<'a>(networks: impl IntoIterator<Item = (&'a str, &'a Mlp)>) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            networks: networks
                .into_iter()
                .map(|(name, net)| (name.to_string(), net.to_record()))
                .collect(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_str(&fs::read_to_string(path)?)?;
        if ckpt.format != CHECKPOINT_FORMAT || ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "unsupported checkpoint {} v{}",
                ckpt.format, ckpt.version
            )));
        }
        Ok(ckpt)
    }

    /// Rebuilds network `name`, rejecting it unless its layer sizes equal `expected`.
    pub fn network(&self, name: &str, expected: &MlpSpec) -> Result<Mlp> {
        let record = self
            .networks
            .get(name)
            .ok_or_else(|| Error::Config(format!("checkpoint has no network '{name}'")))?;
        if record.layer_sizes != expected.layer_sizes {
            return Err(Error::Config(format!(
                "network '{name}' has layers {:?}, expected {:?}",
                record.layer_sizes, expected.layer_sizes
            )));
        }
        let net = Mlp::from_record(record)?;
        if !net.is_finite() {
            return Err(Error::Config(format!("network '{name}' holds non-finite parameters")));
        }
        Ok(net)
    }
}
