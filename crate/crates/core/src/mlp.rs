//! Fully-connected ReLU network trained with hand-written backpropagation.
//!
//! Each layer computes `activation(W x + b)` with `W` stored `out × in`.
//! Training minimizes the mean per-sample NMSE
//! `½ ‖y_out − y_des‖² / ‖y_des‖²` plus a coupled L2 penalty
//! `(λ/2) Σ ‖W‖²` on the weight matrices (biases are not decayed), using Adam
//! with bias correction.
//!
//! Batched passes keep samples as rows, so a layer is `Z = X Wᵀ + b`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::{AntennaMask, NormStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    pub activation: Activation,
}

/// ReLU layers of the given hidden widths followed by an identity projection.
pub fn architecture(input_dim: usize, hidden: &[usize], output_dim: usize) -> Vec<LayerSpec> {
    let mut dims = Vec::with_capacity(hidden.len() + 2);
    dims.push(input_dim);
    dims.extend_from_slice(hidden);
    dims.push(output_dim);
    let last = dims.len() - 2;
    dims.windows(2)
        .enumerate()
        .map(|(i, w)| LayerSpec {
            input_dim: w[0],
            output_dim: w[1],
            activation: if i == last {
                Activation::Identity
            } else {
                Activation::Relu
            },
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn spec(&self) -> LayerSpec {
        LayerSpec {
            input_dim: self.weights.ncols(),
            output_dim: self.weights.nrows(),
            activation: self.activation,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layers: Vec<Layer>,
}

impl MlpModel {
    /// He-uniform weights with bound `√(6 / input_dim)`, zero biases.
    pub fn init(specs: &[LayerSpec], seed: u64) -> Result<Self> {
        validate_specs(specs)?;
        if specs.last().map(|s| s.activation) != Some(Activation::Identity) {
            return Err(Error::IncompatibleDims(
                "the output layer must use the identity activation".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = specs
            .iter()
            .map(|s| {
                let bound = (6.0 / s.input_dim as f64).sqrt();
                let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
                let weights = Array2::from_shape_simple_fn((s.output_dim, s.input_dim), || dist.sample(&mut rng));
                Layer {
                    weights,
                    bias: Array1::zeros(s.output_dim),
                    activation: s.activation,
                }
            })
            .collect();
        Ok(Self { layers })
    }

    /// Wraps explicit layers after checking that their dimensions chain.
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        let specs: Vec<LayerSpec> = layers.iter().map(Layer::spec).collect();
        validate_specs(&specs)?;
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.weights.nrows() {
                return Err(Error::IncompatibleDims(format!(
                    "layer {i}: bias length {} != output dim {}",
                    l.bias.len(),
                    l.weights.nrows()
                )));
            }
            if l.weights.iter().chain(l.bias.iter()).any(|v| !v.is_finite()) {
                return Err(Error::IncompatibleDims(format!("layer {i}: non-finite parameter")));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(Layer::spec).collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].weights.nrows()
    }

    pub fn num_parameters(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// `½ Σ ‖W‖²` over weight matrices.
    pub fn l2_penalty(&self) -> f64 {
        0.5 * self
            .layers
            .iter()
            .map(|l| l.weights.iter().map(|w| w * w).sum::<f64>())
            .sum::<f64>()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let batch = ArrayView2::from_shape((1, x.len()), x).expect("row view");
        Ok(self.forward_batch(batch)?.into_raw_vec_and_offset().0)
    }

    /// Forward pass over a batch with one sample per row.
    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(x.ncols())?;
        let mut a = x.to_owned();
        for layer in &self.layers {
            a = layer_forward(layer, a.view());
        }
        Ok(a)
    }

    fn check_input(&self, got: usize) -> Result<()> {
        if got != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got,
            });
        }
        Ok(())
    }
}

fn validate_specs(specs: &[LayerSpec]) -> Result<()> {
    if specs.is_empty() {
        return Err(Error::IncompatibleDims("network needs at least one layer".into()));
    }
    for (i, s) in specs.iter().enumerate() {
        if s.input_dim == 0 || s.output_dim == 0 {
            return Err(Error::IncompatibleDims(format!("layer {i} has a zero dimension")));
        }
    }
    for (i, w) in specs.windows(2).enumerate() {
        if w[0].output_dim != w[1].input_dim {
            return Err(Error::IncompatibleDims(format!(
                "layer {i} outputs {} but layer {} expects {}",
                w[0].output_dim,
                i + 1,
                w[1].input_dim
            )));
        }
    }
    Ok(())
}

fn pre_activation(layer: &Layer, x: ArrayView2<f64>) -> Array2<f64> {
    let mut z = x.dot(&layer.weights.t());
    z += &layer.bias;
    z
}

fn activate(activation: Activation, mut z: Array2<f64>) -> Array2<f64> {
    if activation == Activation::Relu {
        z.mapv_inplace(|v| v.max(0.0));
    }
    z
}

fn layer_forward(layer: &Layer, x: ArrayView2<f64>) -> Array2<f64> {
    activate(layer.activation, pre_activation(layer, x))
}

/// Per-sample loss `½ ‖y_out − y_des‖² / ‖y_des‖²`.
pub fn nmse_loss(y_out: &[f64], y_des: &[f64]) -> Result<f64> {
    if y_out.len() != y_des.len() {
        return Err(Error::DimensionMismatch {
            expected: y_des.len(),
            got: y_out.len(),
        });
    }
    let target: f64 = y_des.iter().map(|v| v * v).sum();
    if target == 0.0 {
        return Err(Error::ZeroTarget);
    }
    let err: f64 = y_out.iter().zip(y_des).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(0.5 * err / target)
}

/// Plain NMSE `‖ĥ − h‖² / ‖h‖²` between complex vectors.
pub fn complex_nmse(estimate: &[Complex64], truth: &[Complex64]) -> Result<f64> {
    if estimate.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            got: estimate.len(),
        });
    }
    let power: f64 = truth.iter().map(|v| v.norm_sqr()).sum();
    if power == 0.0 {
        return Err(Error::ZeroTarget);
    }
    let err: f64 = estimate.iter().zip(truth).map(|(a, b)| (a - b).norm_sqr()).sum();
    Ok(err / power)
}

/// Parameter-shaped gradient (also used for Adam moments).
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Gradients {
    pub fn zeros_like(model: &MlpModel) -> Self {
        Self {
            weights: model
                .layers
                .iter()
                .map(|l| Array2::zeros(l.weights.raw_dim()))
                .collect(),
            biases: model.layers.iter().map(|l| Array1::zeros(l.bias.raw_dim())).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.weights
            .iter()
            .flat_map(|w| w.iter())
            .chain(self.biases.iter().flat_map(|b| b.iter()))
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

fn check_batch(model: &MlpModel, xs: &ArrayView2<f64>, ys: &ArrayView2<f64>) -> Result<()> {
    model.check_input(xs.ncols())?;
    if ys.ncols() != model.output_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.output_dim(),
            got: ys.ncols(),
        });
    }
    if xs.nrows() != ys.nrows() || xs.nrows() == 0 {
        return Err(Error::ShapeMismatch {
            expected: format!("{} target rows", xs.nrows()),
            got: format!("{} target rows", ys.nrows()),
        });
    }
    Ok(())
}

fn row_norms_sqr(ys: &ArrayView2<f64>) -> Result<Array1<f64>> {
    let norms = ys.map_axis(Axis(1), |r| r.dot(&r));
    if norms.iter().any(|&n| n == 0.0) {
        return Err(Error::ZeroTarget);
    }
    Ok(norms)
}

fn mean_nmse(out: &Array2<f64>, ys: &ArrayView2<f64>, norms: &Array1<f64>) -> f64 {
    let total: f64 = out
        .outer_iter()
        .zip(ys.outer_iter())
        .zip(norms.iter())
        .map(|((o, y), n)| {
            let d = &o - &y;
            0.5 * d.dot(&d) / n
        })
        .sum();
    total / out.nrows() as f64
}

/// Training objective on a batch: mean NMSE plus `(λ/2) Σ ‖W‖²`.
pub fn batch_loss(model: &MlpModel, xs: ArrayView2<f64>, ys: ArrayView2<f64>, weight_decay: f64) -> Result<f64> {
    check_batch(model, &xs, &ys)?;
    let norms = row_norms_sqr(&ys)?;
    let out = model.forward_batch(xs)?;
    Ok(mean_nmse(&out, &ys, &norms) + weight_decay * model.l2_penalty())
}

/// Gradient of the batch objective. Returns the mean data loss (without the
/// L2 term) alongside the gradients.
pub fn backward_batch(
    model: &MlpModel,
    xs: ArrayView2<f64>,
    ys: ArrayView2<f64>,
    weight_decay: f64,
) -> Result<(f64, Gradients)> {
    check_batch(model, &xs, &ys)?;
    let norms = row_norms_sqr(&ys)?;
    let batch = xs.nrows() as f64;

    // activations[i] is the input of layer i; pre[i] its pre-activation.
    let mut activations = Vec::with_capacity(model.layers.len() + 1);
    let mut pre = Vec::with_capacity(model.layers.len());
    activations.push(xs.to_owned());
    for layer in &model.layers {
        let z = pre_activation(layer, activations.last().expect("input").view());
        activations.push(activate(layer.activation, z.clone()));
        pre.push(z);
    }
    let out = activations.pop().expect("output");
    let loss = mean_nmse(&out, &ys, &norms);

    let mut delta = &out - &ys;
    for (mut row, n) in delta.outer_iter_mut().zip(norms.iter()) {
        row /= n * batch;
    }

    let mut grads = Gradients::zeros_like(model);
    for i in (0..model.layers.len()).rev() {
        let layer = &model.layers[i];
        if layer.activation == Activation::Relu {
            Zip::from(&mut delta).and(&pre[i]).for_each(|d, &z| {
                if z <= 0.0 {
                    *d = 0.0;
                }
            });
        }
        let mut gw = delta.t().dot(&activations[i]);
        if weight_decay != 0.0 {
            gw.scaled_add(weight_decay, &layer.weights);
        }
        grads.weights[i] = gw;
        grads.biases[i] = delta.sum_axis(Axis(0));
        if i > 0 {
            delta = delta.dot(&layer.weights);
        }
    }
    Ok((loss, grads))
}

/// Single-sample gradient of `nmse_loss(forward(x), y_des) + (λ/2) Σ ‖W‖²`.
pub fn backward(model: &MlpModel, x: &[f64], y_des: &[f64], weight_decay: f64) -> Result<(f64, Gradients)> {
    let xs = ArrayView2::from_shape((1, x.len()), x).expect("row view");
    let ys = ArrayView2::from_shape((1, y_des.len()), y_des).expect("row view");
    backward_batch(model, xs, ys, weight_decay)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            weight_decay: 1e-4,
            epochs: 17,
            batch_size: 128,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::InvalidConfig("weight_decay must be non-negative".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::InvalidConfig("Adam betas must lie in [0, 1)".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidConfig("Adam epsilon must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Gradients,
    pub v: Gradients,
    pub t: u64,
}

impl AdamState {
    pub fn new(model: &MlpModel) -> Self {
        Self {
            m: Gradients::zeros_like(model),
            v: Gradients::zeros_like(model),
            t: 0,
        }
    }
}

/// One bias-corrected Adam update. Weight decay is expected to be in `grads` already.
pub fn adam_step(model: &mut MlpModel, grads: &Gradients, state: &mut AdamState, config: &TrainConfig) -> Result<()> {
    if grads.weights.len() != model.layers.len() || state.m.weights.len() != model.layers.len() {
        return Err(Error::DimensionMismatch {
            expected: model.layers.len(),
            got: grads.weights.len(),
        });
    }
    for (i, l) in model.layers.iter().enumerate() {
        if grads.weights[i].raw_dim() != l.weights.raw_dim() || grads.biases[i].raw_dim() != l.bias.raw_dim() {
            return Err(Error::ShapeMismatch {
                expected: format!("{:?}", l.weights.dim()),
                got: format!("{:?}", grads.weights[i].dim()),
            });
        }
    }
    state.t += 1;
    let (b1, b2, eps) = (config.beta1, config.beta2, config.epsilon);
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    let lr = config.learning_rate;
    let update = |theta: &mut f64, g: &f64, m: &mut f64, v: &mut f64| {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *theta -= lr * m_hat / (v_hat.sqrt() + eps);
    };
    for (i, layer) in model.layers.iter_mut().enumerate() {
        Zip::from(&mut layer.weights)
            .and(&grads.weights[i])
            .and(&mut state.m.weights[i])
            .and(&mut state.v.weights[i])
            .for_each(update);
        Zip::from(&mut layer.bias)
            .and(&grads.biases[i])
            .and(&mut state.m.biases[i])
            .and(&mut state.v.biases[i])
            .for_each(update);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean per-sample NMSE over the epoch, without the L2 term.
    pub mean_loss: f64,
    pub wall_time_s: f64,
}

/// Mini-batch Adam over `epochs` passes with a seeded reshuffle per epoch.
///
/// `on_epoch` sees each epoch's statistics as soon as it finishes.
pub fn train(
    model: &mut MlpModel,
    inputs: ArrayView2<f64>,
    targets: ArrayView2<f64>,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<Vec<EpochStats>> {
    config.validate()?;
    check_batch(model, &inputs, &targets)?;
    let n = inputs.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut state = AdamState::new(model);
    let mut history = Vec::with_capacity(config.epochs);
    let start = Instant::now();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let xs = inputs.select(Axis(0), chunk);
            let ys = targets.select(Axis(0), chunk);
            let (loss, grads) = backward_batch(model, xs.view(), ys.view(), config.weight_decay)?;
            adam_step(model, &grads, &mut state, config)?;
            total += loss * chunk.len() as f64;
        }
        let stats = EpochStats {
            epoch,
            mean_loss: total / n as f64,
            wall_time_s: start.elapsed().as_secs_f64(),
        };
        on_epoch(&stats);
        history.push(stats);
    }
    Ok(history)
}

/// Inference without gradient bookkeeping.
pub fn predict(model: &MlpModel, x: &[f64]) -> Result<Vec<f64>> {
    model.forward(x)
}

pub fn predict_batch(model: &MlpModel, xs: ArrayView2<f64>) -> Result<Array2<f64>> {
    model.forward_batch(xs)
}

/// A trained network with the scaling and antenna mask it was trained under.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub model: MlpModel,
    pub stats: NormStats,
    pub mask: AntennaMask,
}

impl ModelBundle {
    /// Subcarrier count implied by the output width and the mask's antenna count.
    pub fn num_subcarriers(&self) -> usize {
        self.model.output_dim() / (2 * self.mask.num_antennas())
    }
}

pub const MODEL_MAGIC: &[u8; 8] = b"CHMAPMD1";
pub const MODEL_VERSION: u32 = 1;

pub fn save_model(path: impl AsRef<Path>, bundle: &ModelBundle) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_model(&mut w, bundle)?;
    w.flush()?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelBundle> {
    read_model(&mut BufReader::new(File::open(path)?))
}

pub fn write_model<W: Write>(w: &mut W, bundle: &ModelBundle) -> Result<()> {
    let layers = bundle.model.layers();
    w.write_all(MODEL_MAGIC)?;
    w.write_all(&MODEL_VERSION.to_le_bytes())?;
    w.write_all(&(layers.len() as u32).to_le_bytes())?;
    for l in layers {
        let s = l.spec();
        w.write_all(&(s.input_dim as u32).to_le_bytes())?;
        w.write_all(&(s.output_dim as u32).to_le_bytes())?;
        w.write_all(&[match s.activation {
            Activation::Identity => 0u8,
            Activation::Relu => 1u8,
        }])?;
    }
    for l in layers {
        for v in l.weights.iter().chain(l.bias.iter()) {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    for v in [bundle.stats.mean.re, bundle.stats.mean.im, bundle.stats.max_abs] {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&(bundle.mask.num_antennas() as u32).to_le_bytes())?;
    w.write_all(&(bundle.mask.len() as u32).to_le_bytes())?;
    for &m in bundle.mask.selected() {
        w.write_all(&(m as u32).to_le_bytes())?;
    }
    Ok(())
}

pub fn read_model<R: Read>(r: &mut R) -> Result<ModelBundle> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MODEL_MAGIC {
        return Err(Error::Format("not a channel-mapping model file (bad magic)".into()));
    }
    let version = read_u32(r)?;
    if version != MODEL_VERSION {
        return Err(Error::Format(format!("unsupported model version {version}")));
    }
    let count = read_u32(r)? as usize;
    let mut specs = Vec::with_capacity(count);
    for _ in 0..count {
        let input_dim = read_u32(r)? as usize;
        let output_dim = read_u32(r)? as usize;
        let mut tag = [0u8; 1];
        r.read_exact(&mut tag)?;
        let activation = match tag[0] {
            0 => Activation::Identity,
            1 => Activation::Relu,
            t => return Err(Error::Format(format!("unknown activation tag {t}"))),
        };
        specs.push(LayerSpec {
            input_dim,
            output_dim,
            activation,
        });
    }
    validate_specs(&specs)?;
    let mut layers = Vec::with_capacity(count);
    for s in &specs {
        let mut weights = Vec::with_capacity(s.input_dim * s.output_dim);
        for _ in 0..s.input_dim * s.output_dim {
            weights.push(read_f64(r)?);
        }
        let mut bias = Vec::with_capacity(s.output_dim);
        for _ in 0..s.output_dim {
            bias.push(read_f64(r)?);
        }
        layers.push(Layer {
            weights: Array2::from_shape_vec((s.output_dim, s.input_dim), weights).expect("sized"),
            bias: Array1::from(bias),
            activation: s.activation,
        });
    }
    let model = MlpModel::from_layers(layers)?;
    let stats = NormStats {
        mean: Complex64::new(read_f64(r)?, read_f64(r)?),
        max_abs: read_f64(r)?,
    };
    let num_antennas = read_u32(r)? as usize;
    let selected_len = read_u32(r)? as usize;
    let mut selected = Vec::with_capacity(selected_len);
    for _ in 0..selected_len {
        selected.push(read_u32(r)? as usize);
    }
    let mask = AntennaMask::new(num_antennas, selected)?;
    if model.input_dim() != model.output_dim() || model.output_dim() % (2 * num_antennas) != 0 {
        return Err(Error::Format(format!(
            "network dims {} -> {} do not fit {num_antennas} antennas",
            model.input_dim(),
            model.output_dim()
        )));
    }
    Ok(ModelBundle { model, stats, mask })
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}
