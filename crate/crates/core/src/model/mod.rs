//! Trainable classifiers built from an [`ArchitectureSpec`].
//!
//! Hidden layers are stride-1, valid-padding 1-D convolutions followed by a
//! flatten and dense layers; a softmax head of `num_classes` units sits on
//! top. Everything is `f64`. Convolutions are cross-correlations (no kernel
//! flip).

mod blob;
mod dataset;
mod gradcheck;
mod train;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::grammar::{check_feasibility, Activation, ArchitectureSpec, Infeasibility, ResourceLimits, Sentence};

pub use blob::{deserialize, model_digest, serialize, BlobError, ModelBlob, BLOB_MAGIC, BLOB_VERSION};
pub use dataset::{
    load_problem, read_dataset_csv, write_dataset_csv, write_problem, xor_problem, stripes_problem,
    two_spirals_problem, Dataset, DatasetError, Metric, Problem, Sample,
};
pub use gradcheck::{gradient_check, GradCheckReport};
pub use train::{evaluate, train, Optimizer, TrainConfig, TrainError, TrainReport, Trainer};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Infeasible(#[from] Infeasibility),
    #[error("input has {got} features, network expects {expected}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("a classifier needs at least two classes")]
    TooFewClasses,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Conv {
        in_channels: usize,
        in_width: usize,
        filters: usize,
        kernel: usize,
    },
    Dense {
        inputs: usize,
        outputs: usize,
    },
}

impl LayerKind {
    pub fn input_len(&self) -> usize {
        match *self {
            LayerKind::Conv {
                in_channels,
                in_width,
                ..
            } => in_channels * in_width,
            LayerKind::Dense { inputs, .. } => inputs,
        }
    }

    pub fn output_len(&self) -> usize {
        match *self {
            LayerKind::Conv {
                in_width,
                filters,
                kernel,
                ..
            } => filters * (in_width - kernel + 1),
            LayerKind::Dense { outputs, .. } => outputs,
        }
    }

    /// Weight count; conv weights are `[filter][channel][tap]`, dense
    /// weights `[output][input]`, both row-major.
    pub fn weight_len(&self) -> usize {
        match *self {
            LayerKind::Conv {
                in_channels,
                filters,
                kernel,
                ..
            } => filters * in_channels * kernel,
            LayerKind::Dense { inputs, outputs } => inputs * outputs,
        }
    }

    pub fn bias_len(&self) -> usize {
        match *self {
            LayerKind::Conv { filters, .. } => filters,
            LayerKind::Dense { outputs, .. } => outputs,
        }
    }

    fn fans(&self) -> (usize, usize) {
        match *self {
            LayerKind::Conv {
                in_channels,
                filters,
                kernel,
                ..
            } => (in_channels * kernel, filters * kernel),
            LayerKind::Dense { inputs, outputs } => (inputs, outputs),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub kind: LayerKind,
    /// `None` for the linear output head.
    pub activation: Option<Activation>,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

fn activate(act: Option<Activation>, z: f64) -> f64 {
    match act {
        None => z,
        Some(Activation::Sigmoid) => 1.0 / (1.0 + (-z).exp()),
        Some(Activation::Tanh) => z.tanh(),
        Some(Activation::Relu) => z.max(0.0),
    }
}

/// Derivative of the activation, from the pre-activation `z` and output `a`.
fn activate_grad(act: Option<Activation>, z: f64, a: f64) -> f64 {
    match act {
        None => 1.0,
        Some(Activation::Sigmoid) => a * (1.0 - a),
        Some(Activation::Tanh) => 1.0 - a * a,
        Some(Activation::Relu) => {
            if z > 0.0 {
                1.0
            } else {
                0.0
            }
        }
    }
}

impl Layer {
    fn forward(&self, x: &[f64], z: &mut [f64], a: &mut [f64]) {
        match self.kind {
            LayerKind::Conv {
                in_channels,
                in_width,
                filters,
                kernel,
            } => {
                let out_w = in_width - kernel + 1;
                for f in 0..filters {
                    let wf = &self.weights[f * in_channels * kernel..(f + 1) * in_channels * kernel];
                    for p in 0..out_w {
                        let mut acc = self.bias[f];
                        for c in 0..in_channels {
                            let xs = &x[c * in_width + p..c * in_width + p + kernel];
                            let ws = &wf[c * kernel..(c + 1) * kernel];
                            for (w, v) in ws.iter().zip(xs) {
                                acc += w * v;
                            }
                        }
                        z[f * out_w + p] = acc;
                    }
                }
            }
            LayerKind::Dense { inputs, outputs } => {
                for o in 0..outputs {
                    let row = &self.weights[o * inputs..(o + 1) * inputs];
                    let mut acc = self.bias[o];
                    for (w, v) in row.iter().zip(x) {
                        acc += w * v;
                    }
                    z[o] = acc;
                }
            }
        }
        for (ai, &zi) in a.iter_mut().zip(z.iter()) {
            *ai = activate(self.activation, zi);
        }
    }

    /// Accumulates parameter gradients for output delta `dz` (gradient of
    /// the loss w.r.t. this layer's pre-activations) and, if `dx` is given,
    /// writes the gradient w.r.t. the layer input.
    fn backward(
        &self,
        x: &[f64],
        dz: &[f64],
        grad_w: &mut [f64],
        grad_b: &mut [f64],
        dx: Option<&mut [f64]>,
    ) {
        match self.kind {
            LayerKind::Conv {
                in_channels,
                in_width,
                filters,
                kernel,
            } => {
                let out_w = in_width - kernel + 1;
                let mut dx = dx;
                if let Some(dx) = dx.as_deref_mut() {
                    dx.fill(0.0);
                }
                for f in 0..filters {
                    let base = f * in_channels * kernel;
                    for p in 0..out_w {
                        let d = dz[f * out_w + p];
                        if d == 0.0 {
                            continue;
                        }
                        grad_b[f] += d;
                        for c in 0..in_channels {
                            let xo = c * in_width + p;
                            let wo = base + c * kernel;
                            for j in 0..kernel {
                                grad_w[wo + j] += d * x[xo + j];
                            }
                            if let Some(dx) = dx.as_deref_mut() {
                                for j in 0..kernel {
                                    dx[xo + j] += d * self.weights[wo + j];
                                }
                            }
                        }
                    }
                }
            }
            LayerKind::Dense { inputs, outputs } => {
                let mut dx = dx;
                if let Some(dx) = dx.as_deref_mut() {
                    dx.fill(0.0);
                }
                for o in 0..outputs {
                    let d = dz[o];
                    if d == 0.0 {
                        continue;
                    }
                    grad_b[o] += d;
                    let row = o * inputs;
                    for (g, v) in grad_w[row..row + inputs].iter_mut().zip(x) {
                        *g += d * v;
                    }
                    if let Some(dx) = dx.as_deref_mut() {
                        for (dxi, w) in dx.iter_mut().zip(&self.weights[row..row + inputs]) {
                            *dxi += d * w;
                        }
                    }
                }
            }
        }
    }
}

/// Scratch buffers for one forward/backward pass.
#[derive(Debug, Clone)]
pub(crate) struct Workspace {
    /// acts[0] is the input, acts[l + 1] the output of layer l (the last one
    /// holds softmax probabilities).
    acts: Vec<Vec<f64>>,
    zs: Vec<Vec<f64>>,
    deltas: Vec<Vec<f64>>,
}

/// Parameter-shaped gradient buffers.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Gradients {
    pub(crate) weights: Vec<Vec<f64>>,
    pub(crate) bias: Vec<Vec<f64>>,
}

impl Gradients {
    fn zeros_like(net: &Network) -> Self {
        Gradients {
            weights: net.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            bias: net.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }

    fn clear(&mut self) {
        self.weights.iter_mut().for_each(|w| w.fill(0.0));
        self.bias.iter_mut().for_each(|b| b.fill(0.0));
    }

    fn flat(&self) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.bias)
            .flat_map(|(w, b)| w.iter().chain(b).copied())
            .collect()
    }
}

/// A classifier: hidden layers from the spec plus a softmax head.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: ArchitectureSpec,
    sentence: Sentence,
    input_width: usize,
    num_classes: usize,
    layers: Vec<Layer>,
}

fn layer_kinds(spec: &ArchitectureSpec, input_width: usize, num_classes: usize) -> Vec<(LayerKind, Option<Activation>)> {
    let mut kinds = Vec::new();
    let mut channels = 1;
    let mut width = input_width;
    for c in &spec.conv_layers {
        let kernel = c.filter_size as usize;
        let filters = c.num_filters as usize;
        kinds.push((
            LayerKind::Conv {
                in_channels: channels,
                in_width: width,
                filters,
                kernel,
            },
            Some(c.activation),
        ));
        channels = filters;
        width = width - kernel + 1;
    }
    let mut inputs = channels * width;
    for f in &spec.fc_layers {
        let outputs = f.num_units as usize;
        kinds.push((LayerKind::Dense { inputs, outputs }, Some(f.activation)));
        inputs = outputs;
    }
    kinds.push((
        LayerKind::Dense {
            inputs,
            outputs: num_classes,
        },
        None,
    ));
    kinds
}

impl Network {
    /// Builds a network for `spec` with seeded Glorot-uniform weights
    /// (`±sqrt(6 / (fan_in + fan_out))`) and zero biases.
    pub fn instantiate(
        spec: &ArchitectureSpec,
        input_width: usize,
        num_classes: usize,
        seed: u64,
        limits: &ResourceLimits,
    ) -> Result<Network, ModelError> {
        check_feasibility(spec, input_width, limits)?;
        if num_classes < 2 {
            return Err(ModelError::TooFewClasses);
        }
        let mut net = Network::zeroed(spec.clone(), spec.to_sentence(), input_width, num_classes);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut net.layers {
            let (fan_in, fan_out) = layer.kind.fans();
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for w in &mut layer.weights {
                *w = rng.gen_range(-limit..limit);
            }
        }
        Ok(net)
    }

    /// Softmax regression with no hidden layers.
    pub fn linear(input_width: usize, num_classes: usize, seed: u64) -> Network {
        let spec = ArchitectureSpec {
            conv_layers: vec![],
            fc_layers: vec![],
        };
        let mut net = Network::zeroed(spec, Sentence::default(), input_width, num_classes);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let limit = (6.0 / (input_width + num_classes) as f64).sqrt();
        for w in &mut net.layers[0].weights {
            *w = rng.gen_range(-limit..limit);
        }
        net
    }

    /// All-zero parameters with shapes fixed by the arguments. The spec must
    /// already be known to fit `input_width`.
    pub(crate) fn zeroed(
        spec: ArchitectureSpec,
        sentence: Sentence,
        input_width: usize,
        num_classes: usize,
    ) -> Network {
        let layers = layer_kinds(&spec, input_width, num_classes)
            .into_iter()
            .map(|(kind, activation)| Layer {
                kind,
                activation,
                weights: vec![0.0; kind.weight_len()],
                bias: vec![0.0; kind.bias_len()],
            })
            .collect();
        Network {
            spec,
            sentence,
            input_width,
            num_classes,
            layers,
        }
    }

    /// Replaces the recorded architecture sentence, e.g. with the exact
    /// derived sentence a miner started from.
    pub fn with_sentence(mut self, sentence: Sentence) -> Network {
        self.sentence = sentence;
        self
    }

    pub fn spec(&self) -> &ArchitectureSpec {
        &self.spec
    }

    pub fn sentence(&self) -> &Sentence {
        &self.sentence
    }

    pub fn input_width(&self) -> usize {
        self.input_width
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    /// Output length of every layer, the last being `num_classes`.
    pub fn layer_output_lens(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.kind.output_len()).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Parameters in serialization order: per layer, weights then biases.
    pub fn parameters(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
    }

    pub(crate) fn parameter_mut(&mut self, mut index: usize) -> &mut f64 {
        for l in &mut self.layers {
            if index < l.weights.len() {
                return &mut l.weights[index];
            }
            index -= l.weights.len();
            if index < l.bias.len() {
                return &mut l.bias[index];
            }
            index -= l.bias.len();
        }
        panic!("parameter index out of range")
    }

    pub fn all_finite(&self) -> bool {
        self.parameters().all(f64::is_finite)
    }

    pub(crate) fn workspace(&self) -> Workspace {
        let mut acts = vec![vec![0.0; self.input_width]];
        let mut zs = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            acts.push(vec![0.0; l.kind.output_len()]);
            zs.push(vec![0.0; l.kind.output_len()]);
        }
        let deltas = self.layers.iter().map(|l| vec![0.0; l.kind.input_len()]).collect();
        Workspace { acts, zs, deltas }
    }

    /// Runs one sample, leaving class probabilities in the last activation
    /// buffer.
    pub(crate) fn forward_into(&self, x: &[f64], ws: &mut Workspace) {
        ws.acts[0].copy_from_slice(x);
        for (l, layer) in self.layers.iter().enumerate() {
            let (before, after) = ws.acts.split_at_mut(l + 1);
            layer.forward(&before[l], &mut ws.zs[l], &mut after[0]);
        }
        let last = self.layers.len();
        softmax_in_place(&ws.zs[last - 1], &mut ws.acts[last]);
    }

    /// Cross-entropy loss of the sample last passed to `forward_into`.
    pub(crate) fn loss_of(&self, ws: &Workspace, label: usize) -> f64 {
        let z = &ws.zs[self.layers.len() - 1];
        let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        lse - z[label]
    }

    /// Adds the gradient of the sample's cross-entropy loss to `grads`.
    /// Requires a preceding `forward_into` on the same workspace.
    pub(crate) fn backward_into(&self, label: usize, ws: &mut Workspace, grads: &mut Gradients) {
        let last = self.layers.len() - 1;
        let mut dz: Vec<f64> = ws.acts[last + 1].clone();
        dz[label] -= 1.0;
        for l in (0..=last).rev() {
            let layer = &self.layers[l];
            let need_dx = l > 0;
            {
                let dx = if need_dx { Some(&mut ws.deltas[l][..]) } else { None };
                layer.backward(&ws.acts[l], &dz, &mut grads.weights[l], &mut grads.bias[l], dx);
            }
            if need_dx {
                let prev = &self.layers[l - 1];
                let mut next_dz = std::mem::take(&mut dz);
                next_dz.clear();
                next_dz.extend(
                    ws.deltas[l]
                        .iter()
                        .zip(ws.zs[l - 1].iter().zip(&ws.acts[l]))
                        .map(|(d, (&z, &a))| d * activate_grad(prev.activation, z, a)),
                );
                dz = next_dz;
            }
        }
    }

    /// Class probabilities for each row of `batch`.
    pub fn forward(&self, batch: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, ModelError> {
        let mut ws = self.workspace();
        batch
            .iter()
            .map(|x| {
                if x.len() != self.input_width {
                    return Err(ModelError::ShapeMismatch {
                        expected: self.input_width,
                        got: x.len(),
                    });
                }
                self.forward_into(x, &mut ws);
                Ok(ws.acts[self.layers.len()].clone())
            })
            .collect()
    }

    /// Index of the most probable class (lowest index on ties).
    pub fn predict(&self, x: &[f64]) -> Result<usize, ModelError> {
        let probs = self.forward(std::slice::from_ref(&x.to_vec()))?;
        Ok(argmax(&probs[0]))
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn softmax_in_place(z: &[f64], out: &mut [f64]) {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &v) in out.iter_mut().zip(z) {
        *o = (v - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}
