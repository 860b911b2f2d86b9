//! A small masked multilayer perceptron with hand-written backprop.
//!
//! In oracle mode (identity activation, no biases, weights in `[0.1, 1.0]`)
//! a weight's gradient is nonzero exactly when a structural path links it to
//! the loss, so gradient support can be checked against walk-set metrics.
//! The same machinery, with leaky ReLU and biases, trains the toy classifier
//! behind [`train_demo`].

use std::io::Write;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::block_mask;
use crate::graph::Topology;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("gradient reach needs identity activation and no biases")]
    NotOracleMode,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, NnError>;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    Identity,
    LeakyRelu(f64),
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::LeakyRelu(a) => {
                if z > 0.0 {
                    z
                } else {
                    a * z
                }
            }
        }
    }

    fn slope(self, z: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::LeakyRelu(a) => {
                if z > 0.0 {
                    1.0
                } else {
                    a
                }
            }
        }
    }
}

/// Fully connected layer `z = a W^T + b` whose weights are held at zero
/// wherever `mask` is zero.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskedLinear {
    pub weight: Array2<f64>,
    pub mask: Array2<f64>,
    pub bias: Option<Array1<f64>>,
}

impl MaskedLinear {
    pub fn in_width(&self) -> usize {
        self.weight.ncols()
    }

    pub fn out_width(&self) -> usize {
        self.weight.nrows()
    }

    /// Largest magnitude stored at a masked-out position.
    pub fn pruned_max_abs(&self) -> f64 {
        self.weight
            .iter()
            .zip(&self.mask)
            .filter(|(_, &m)| m == 0.0)
            .fold(0.0, |acc, (w, _)| acc.max(w.abs()))
    }

    pub fn surviving(&self) -> usize {
        self.mask.iter().filter(|&&m| m != 0.0).count()
    }
}

#[derive(Clone, Debug)]
pub struct ForwardCache {
    /// Pre-activations of each layer.
    pub pre: Vec<Array2<f64>>,
    /// Unit values per layer; `post[0]` is the input.
    pub post: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        self.post.last().unwrap()
    }
}

#[derive(Clone, Debug)]
pub struct Gradients {
    /// Masked weight gradients, one per layer.
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Option<Array1<f64>>>,
    /// Loss gradient with respect to each layer's unit values, input first.
    pub units: Vec<Array2<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub layers: Vec<MaskedLinear>,
    pub activation: Activation,
    /// Apply the activation to the last layer too.
    pub activate_output: bool,
}

impl Mlp {
    fn activated(&self, layer: usize) -> bool {
        self.activate_output || layer + 1 < self.layers.len()
    }

    pub fn forward(&self, x: &Array2<f64>) -> Result<ForwardCache> {
        if x.ncols() != self.layers[0].in_width() {
            return Err(NnError::ShapeMismatch(format!(
                "input width {} for a network expecting {}",
                x.ncols(),
                self.layers[0].in_width()
            )));
        }
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post = vec![x.clone()];
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = post[l].dot(&layer.weight.t());
            if let Some(b) = &layer.bias {
                z += b;
            }
            let a = if self.activated(l) { z.mapv(|v| self.activation.apply(v)) } else { z.clone() };
            pre.push(z);
            post.push(a);
        }
        Ok(ForwardCache { pre, post })
    }

    /// Backpropagates `grad_out = dL/d(output)` through the cached pass.
    pub fn backward(&self, cache: &ForwardCache, grad_out: &Array2<f64>) -> Gradients {
        let depth = self.layers.len();
        let mut weights = vec![Array2::zeros((0, 0)); depth];
        let mut biases = vec![None; depth];
        let mut units = vec![Array2::zeros((0, 0)); depth + 1];
        let mut g = grad_out.clone();
        units[depth] = g.clone();
        for l in (0..depth).rev() {
            let layer = &self.layers[l];
            let dz = if self.activated(l) {
                let mut dz = g;
                dz.zip_mut_with(&cache.pre[l], |d, &z| *d *= self.activation.slope(z));
                dz
            } else {
                g
            };
            weights[l] = dz.t().dot(&cache.post[l]) * &layer.mask;
            biases[l] = layer.bias.as_ref().map(|_| dz.sum_axis(Axis(0)));
            g = dz.dot(&layer.weight);
            units[l] = g.clone();
        }
        Gradients { weights, biases, units }
    }

    /// Plain SGD. Masked weights stay exactly zero.
    pub fn sgd_step(&mut self, grads: &Gradients, lr: f64) {
        for (l, layer) in self.layers.iter_mut().enumerate() {
            layer.weight.scaled_add(-lr, &grads.weights[l]);
            layer.weight *= &layer.mask;
            if let (Some(b), Some(db)) = (layer.bias.as_mut(), grads.biases[l].as_ref()) {
                b.scaled_add(-lr, db);
            }
        }
    }

    pub fn pruned_max_abs(&self) -> f64 {
        self.layers.iter().map(MaskedLinear::pruned_max_abs).fold(0.0, f64::max)
    }
}

/// Equal-width masked MLP: `layers` unit layers of `n*s` units joined by
/// `layers-1` graph-masked transitions.
#[derive(Clone, Debug, PartialEq)]
pub struct TinyMlp {
    pub n: usize,
    pub s: usize,
    pub net: Mlp,
}

/// Per-output-group gradient support.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GradReachReport {
    pub output_group: usize,
    /// Weights with a nonzero loss gradient.
    pub reached: u64,
    /// First backward depth at which every unit of that layer has a nonzero
    /// gradient; `None` if no layer is fully covered.
    pub gr_observed: Option<usize>,
}

impl TinyMlp {
    /// Oracle-mode network: identity activation, no biases, surviving weights
    /// drawn from `U[0.1, 1.0]`.
    pub fn build<G: Topology + ?Sized>(g: &G, layers: usize, s: usize, seed: u64) -> Result<Self> {
        if layers < 2 || s == 0 {
            return Err(NnError::InvalidConfig("need at least 2 layers and a positive group size".into()));
        }
        let n = g.order();
        let mask = block_mask(g, s, s);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net_layers = (0..layers - 1)
            .map(|_| MaskedLinear {
                weight: mask.mapv(|m| if m == 0.0 { 0.0 } else { rng.random_range(0.1..=1.0) }),
                mask: mask.clone(),
                bias: None,
            })
            .collect();
        Ok(Self { n, s, net: Mlp { layers: net_layers, activation: Activation::Identity, activate_output: true } })
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.net.activation = activation;
        self
    }

    pub fn width(&self) -> usize {
        self.n * self.s
    }

    pub fn unit_layers(&self) -> usize {
        self.net.layers.len() + 1
    }

    pub fn surviving_weights(&self) -> usize {
        self.net.layers.iter().map(MaskedLinear::surviving).sum()
    }

    /// Unit values of every layer for a batch of inputs, input first.
    pub fn forward(&self, x: &Array2<f64>) -> Result<Vec<Array2<f64>>> {
        Ok(self.net.forward(x)?.post)
    }

    fn is_oracle_mode(&self) -> bool {
        self.net.activation == Activation::Identity && self.net.layers.iter().all(|l| l.bias.is_none())
    }

    /// Backpropagates `loss = sum of output group j` from an all-ones input
    /// and records which weights and layers the gradient reaches.
    pub fn grad_reach_count(&self, j: usize) -> Result<GradReachReport> {
        if !self.is_oracle_mode() {
            return Err(NnError::NotOracleMode);
        }
        if j >= self.n {
            return Err(NnError::ShapeMismatch(format!("output group {j} of {}", self.n)));
        }
        let width = self.width();
        let x = Array2::ones((1, width));
        let cache = self.net.forward(&x)?;
        let mut seed = Array2::zeros((1, width));
        seed.slice_mut(ndarray::s![0, j * self.s..(j + 1) * self.s]).fill(1.0);
        let grads = self.net.backward(&cache, &seed);

        let reached = grads.weights.iter().flat_map(|w| w.iter()).filter(|&&v| v != 0.0).count() as u64;
        let last = self.unit_layers() - 1;
        let gr_observed = (1..=last).find(|&d| grads.units[last - d].iter().all(|&v| v != 0.0));
        Ok(GradReachReport { output_group: j, reached, gr_observed })
    }

    /// Reach reports for every output group.
    pub fn grad_reach_all(&self) -> Result<Vec<GradReachReport>> {
        (0..self.n).map(|j| self.grad_reach_count(j)).collect()
    }
}

/// Gaussian blob dataset parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlobConfig {
    pub classes: usize,
    pub dims: usize,
    pub points: usize,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub y: Vec<usize>,
    pub classes: usize,
}

/// Unit-variance blobs around centers `5 * (1 + c/(2*dims)) * (+/-)e_(c mod dims)`,
/// in shuffled order.
pub fn blobs(cfg: &BlobConfig) -> Result<Dataset> {
    if cfg.classes < 2 || cfg.dims == 0 || cfg.points < cfg.classes {
        return Err(NnError::InvalidConfig("need >= 2 classes, >= 1 dim, a point per class".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let mut labels: Vec<usize> = (0..cfg.points).map(|i| i % cfg.classes).collect();
    labels.shuffle(&mut rng);
    let mut x = Array2::zeros((cfg.points, cfg.dims));
    for (row, &c) in labels.iter().enumerate() {
        let axis = c % cfg.dims;
        let sign = if (c / cfg.dims).is_multiple_of(2) { 1.0 } else { -1.0 };
        let radius = 5.0 * (1.0 + (c / (2 * cfg.dims)) as f64);
        for d in 0..cfg.dims {
            let center = if d == axis { sign * radius } else { 0.0 };
            x[[row, d]] = center + noise.sample(&mut rng);
        }
    }
    Ok(Dataset { x, y: labels, classes: cfg.classes })
}

#[derive(Clone, Debug, PartialEq)]
pub struct DemoConfig {
    pub epochs: usize,
    /// Unit layers in the masked core (at least 2).
    pub core_layers: usize,
    pub group_size: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Fraction of points held out for validation.
    pub val_fraction: f64,
}

impl Default for DemoConfig {
    fn default() -> Self {
        Self { epochs: 50, core_layers: 3, group_size: 2, lr: 0.05, batch_size: 16, seed: 0, val_fraction: 0.2 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_acc: f64,
    pub val_acc: f64,
}

/// Classifier with a dense input projection, a graph-masked core and a dense
/// output head; leaky ReLU, biases, softmax cross-entropy.
#[derive(Clone, Debug)]
pub struct Classifier {
    pub net: Mlp,
}

fn signed_layer<R: Rng>(mask: Array2<f64>, rng: &mut R) -> MaskedLinear {
    let fan_in = mask.rows().into_iter().map(|r| r.sum()).fold(1.0, f64::max);
    let bound = (6.0 / fan_in).sqrt();
    let weight = mask.mapv(|m| if m == 0.0 { 0.0 } else { rng.random_range(-bound..bound) });
    let bias = Some(Array1::zeros(mask.nrows()));
    MaskedLinear { weight, mask, bias }
}

impl Classifier {
    pub fn new<G: Topology + ?Sized>(g: &G, dims: usize, classes: usize, cfg: &DemoConfig) -> Result<Self> {
        if cfg.core_layers < 2 || cfg.group_size == 0 {
            return Err(NnError::InvalidConfig("core needs >= 2 layers and a positive group size".into()));
        }
        let width = g.order() * cfg.group_size;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let core = block_mask(g, cfg.group_size, cfg.group_size);
        let mut layers = vec![signed_layer(Array2::ones((width, dims)), &mut rng)];
        for _ in 0..cfg.core_layers - 1 {
            layers.push(signed_layer(core.clone(), &mut rng));
        }
        layers.push(signed_layer(Array2::ones((classes, width)), &mut rng));
        Ok(Self { net: Mlp { layers, activation: Activation::LeakyRelu(0.01), activate_output: false } })
    }

    /// Mean cross-entropy gradient step on one minibatch; returns the loss.
    pub fn sgd_step(&mut self, x: &Array2<f64>, y: &[usize], lr: f64) -> Result<f64> {
        let cache = self.net.forward(x)?;
        let (loss, grad) = softmax_xent(cache.output(), y);
        let grads = self.net.backward(&cache, &grad);
        self.net.sgd_step(&grads, lr);
        Ok(loss)
    }

    pub fn accuracy(&self, x: &Array2<f64>, y: &[usize]) -> Result<f64> {
        if y.is_empty() {
            return Ok(0.0);
        }
        let cache = self.net.forward(x)?;
        let hits = cache
            .output()
            .rows()
            .into_iter()
            .zip(y)
            .filter(|(row, &label)| {
                let best = row.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
                best == label
            })
            .count();
        Ok(hits as f64 / y.len() as f64)
    }
}

fn softmax_xent(logits: &Array2<f64>, y: &[usize]) -> (f64, Array2<f64>) {
    let batch = logits.nrows() as f64;
    let mut grad = logits.clone();
    let mut loss = 0.0;
    for (mut row, &label) in grad.rows_mut().into_iter().zip(y) {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
        loss -= row[label].ln();
        row[label] -= 1.0;
    }
    grad /= batch;
    (loss / batch, grad)
}

fn rows(x: &Array2<f64>, idx: &[usize]) -> Array2<f64> {
    x.select(Axis(0), idx)
}

/// Trains a graph-masked classifier with minibatch SGD and reports accuracy
/// after every epoch.
pub fn train_demo<G: Topology + ?Sized>(g: &G, data: &Dataset, cfg: &DemoConfig) -> Result<Vec<EpochRecord>> {
    if cfg.batch_size == 0 || !(0.0..1.0).contains(&cfg.val_fraction) {
        return Err(NnError::InvalidConfig("batch size must be positive, validation fraction in [0,1)".into()));
    }
    let mut model = Classifier::new(g, data.x.ncols(), data.classes, cfg)?;
    let n_val = (data.y.len() as f64 * cfg.val_fraction).round() as usize;
    let n_train = data.y.len() - n_val;
    let train_x = data.x.slice(ndarray::s![..n_train, ..]).to_owned();
    let val_x = data.x.slice(ndarray::s![n_train.., ..]).to_owned();
    let (train_y, val_y) = data.y.split_at(n_train);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
    let mut order: Vec<usize> = (0..n_train).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let bx = rows(&train_x, chunk);
            let by: Vec<usize> = chunk.iter().map(|&i| train_y[i]).collect();
            model.sgd_step(&bx, &by, cfg.lr)?;
        }
        trace.push(EpochRecord {
            epoch,
            train_acc: model.accuracy(&train_x, train_y)?,
            val_acc: model.accuracy(&val_x, val_y)?,
        });
    }
    Ok(trace)
}

/// CSV with header `epoch,train_acc,val_acc`.
pub fn write_accuracy_trace<W: Write>(trace: &[EpochRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for rec in trace {
        w.serialize(rec)?;
    }
    if trace.is_empty() {
        w.write_record(["epoch", "train_acc", "val_acc"])?;
    }
    w.flush()?;
    Ok(())
}
