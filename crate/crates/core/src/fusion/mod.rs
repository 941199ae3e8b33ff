//! The fusion classifier: a two-hidden-layer ReLU perceptron over the
//! concatenated text, metadata and author representations.
//!
//! ```text
//! h1 = dropout(ReLU(W1·x + b1))
//! h2 = dropout(ReLU(W2·h1 + b2))
//! p  = σ(W3·h2 + b3)          (sigmoid mode, one unit per label)
//! p  = softmax(W3·h2 + b3)    (softmax mode)
//! ```
//!
//! Dropout is inverted (kept units scale by `1 / (1 - p)`) and only active
//! in training mode, so evaluation is deterministic. Training minimizes the
//! mean batch loss with Adam.

mod adam;
mod io;

use std::collections::BTreeSet;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use adam::{AdamConfig, AdamState};
pub use io::{load_model, save_model, MODEL_FORMAT_VERSION};

pub const DEFAULT_HIDDEN: usize = 1024;

/// Probabilities below this floor (or above `1 - floor`) are clamped before
/// taking logarithms in the loss.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputMode {
    #[default]
    Sigmoid,
    Softmax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparams {
    pub batch_size: usize,
    pub dropout_p: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    pub hidden: usize,
    pub output_mode: OutputMode,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            batch_size: 16,
            dropout_p: 0.1,
            learning_rate: 2e-5,
            epochs: 5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
            hidden: DEFAULT_HIDDEN,
            output_mode: OutputMode::Sigmoid,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidInput("batch_size must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidInput("epochs must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::InvalidInput(format!(
                "dropout_p must lie in [0, 1), got {}",
                self.dropout_p
            )));
        }
        if self.hidden == 0 {
            return Err(Error::InvalidInput("hidden width must be at least 1".into()));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }
}

/// Named contiguous blocks of the model input, e.g. `text`, `metadata`,
/// `author`.
pub type InputBlocks = Vec<(String, usize)>;

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub w3: Array2<f64>,
    pub b3: Array1<f64>,
    pub dropout_p: f64,
    pub output_mode: OutputMode,
    pub label_order: Vec<String>,
    pub input_blocks: InputBlocks,
}

/// Gradients with the same shapes as the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub w3: Array2<f64>,
    pub b3: Array1<f64>,
}

impl Gradients {
    pub fn tensors(&self) -> [&[f64]; 6] {
        [
            self.w1.as_slice().expect("standard layout"),
            self.b1.as_slice().expect("standard layout"),
            self.w2.as_slice().expect("standard layout"),
            self.b2.as_slice().expect("standard layout"),
            self.w3.as_slice().expect("standard layout"),
            self.b3.as_slice().expect("standard layout"),
        ]
    }
}

struct Activations {
    a1: Array2<f64>,
    h1: Array2<f64>,
    mask1: Option<Array2<f64>>,
    a2: Array2<f64>,
    h2: Array2<f64>,
    mask2: Option<Array2<f64>>,
    probs: Array2<f64>,
}

fn glorot(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-bound..=bound))
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn relu(a: &Array2<f64>) -> Array2<f64> {
    a.mapv(|x| x.max(0.0))
}

/// Inputs with at most this fraction of nonzeros take the sparse path.
const SPARSE_DENSITY: f64 = 0.25;

fn nonzeros(row: ndarray::ArrayView1<f64>) -> Vec<(usize, f64)> {
    row.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(j, v)| (j, *v)).collect()
}

fn is_sparse(x: ArrayView2<f64>) -> bool {
    let nnz = x.iter().filter(|v| **v != 0.0).count();
    (nnz as f64) <= SPARSE_DENSITY * x.len() as f64
}

/// `x · wᵀ`, skipping zero inputs when `x` is sparse (TF-IDF rows are).
fn input_layer(x: ArrayView2<f64>, w: &Array2<f64>) -> Array2<f64> {
    if !is_sparse(x) {
        return x.dot(&w.t());
    }
    let mut out = Array2::zeros((x.nrows(), w.nrows()));
    for (row, mut out_row) in x.rows().into_iter().zip(out.rows_mut()) {
        let nz = nonzeros(row);
        for (o, w_row) in out_row.iter_mut().zip(w.rows()) {
            *o = nz.iter().map(|&(j, v)| v * w_row[j]).sum();
        }
    }
    out
}

/// `dhᵀ · x`, the first-layer weight gradient.
fn input_layer_grad(dh: ArrayView2<f64>, x: ArrayView2<f64>) -> Array2<f64> {
    if !is_sparse(x) {
        return dh.t().dot(&x);
    }
    let mut out = Array2::zeros((dh.ncols(), x.ncols()));
    for (row, d) in x.rows().into_iter().zip(dh.rows()) {
        let nz = nonzeros(row);
        for (mut g_row, &di) in out.rows_mut().into_iter().zip(d.iter()) {
            if di != 0.0 {
                for &(j, v) in &nz {
                    g_row[j] += di * v;
                }
            }
        }
    }
    out
}

fn dropout_mask(shape: (usize, usize), p: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let keep = 1.0 / (1.0 - p);
    Array2::from_shape_simple_fn(shape, || if rng.random::<f64>() < p { 0.0 } else { keep })
}

/// Glorot-uniform weights and zero biases, deterministic in `hp.seed`.
pub fn init_model(d_in: usize, label_order: Vec<String>, hp: &Hyperparams) -> Result<MlpModel> {
    if d_in == 0 || label_order.is_empty() {
        return Err(Error::InvalidInput(
            "model needs at least one input and one label".into(),
        ));
    }
    hp.validate()?;
    let n_labels = label_order.len();
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    Ok(MlpModel {
        w1: glorot(hp.hidden, d_in, &mut rng),
        b1: Array1::zeros(hp.hidden),
        w2: glorot(hp.hidden, hp.hidden, &mut rng),
        b2: Array1::zeros(hp.hidden),
        w3: glorot(n_labels, hp.hidden, &mut rng),
        b3: Array1::zeros(n_labels),
        dropout_p: hp.dropout_p,
        output_mode: hp.output_mode,
        label_order,
        input_blocks: vec![("input".to_string(), d_in)],
    })
}

/// Per-record loss. `gold` is a 0/1 indicator over labels.
///
/// Sigmoid mode: mean binary cross-entropy over labels. Softmax mode:
/// cross-entropy against the indicator normalized to sum to one, which is
/// undefined for an empty gold set.
pub fn loss(outputs: &[f64], gold: &[f64], mode: OutputMode) -> Result<f64> {
    if outputs.len() != gold.len() {
        return Err(Error::Shape(format!(
            "{} outputs vs {} gold indicators",
            outputs.len(),
            gold.len()
        )));
    }
    let clamp = |p: f64| p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
    match mode {
        OutputMode::Sigmoid => {
            let total: f64 = outputs
                .iter()
                .zip(gold)
                .map(|(&p, &y)| -(y * clamp(p).ln() + (1.0 - y) * (1.0 - clamp(p)).ln()))
                .sum();
            Ok(total / outputs.len() as f64)
        }
        OutputMode::Softmax => {
            let mass: f64 = gold.iter().sum();
            if mass <= 0.0 {
                return Err(Error::InvalidInput(
                    "softmax loss needs at least one gold label".into(),
                ));
            }
            Ok(-outputs
                .iter()
                .zip(gold)
                .map(|(&p, &y)| y / mass * clamp(p).ln())
                .sum::<f64>())
        }
    }
}

/// Labels whose probability strictly exceeds their threshold; the fallback
/// label when none does.
pub fn predict_labels(probs: &[f64], thresholds: &[f64], fallback: usize) -> Vec<usize> {
    let chosen: Vec<usize> = probs
        .iter()
        .zip(thresholds)
        .enumerate()
        .filter(|(_, (p, t))| p > t)
        .map(|(i, _)| i)
        .collect();
    if chosen.is_empty() {
        vec![fallback]
    } else {
        chosen
    }
}

impl MlpModel {
    pub fn d_in(&self) -> usize {
        self.w1.ncols()
    }

    pub fn hidden(&self) -> usize {
        self.w1.nrows()
    }

    pub fn n_labels(&self) -> usize {
        self.w3.nrows()
    }

    pub fn with_input_blocks(mut self, blocks: InputBlocks) -> Result<Self> {
        let width: usize = blocks.iter().map(|(_, w)| w).sum();
        if width != self.d_in() {
            return Err(Error::Shape(format!(
                "input blocks sum to {width}, model expects {}",
                self.d_in()
            )));
        }
        self.input_blocks = blocks;
        Ok(self)
    }

    pub fn param_sizes(&self) -> [usize; 6] {
        [
            self.w1.len(),
            self.b1.len(),
            self.w2.len(),
            self.b2.len(),
            self.w3.len(),
            self.b3.len(),
        ]
    }

    pub fn params_mut(&mut self) -> [&mut [f64]; 6] {
        [
            self.w1.as_slice_mut().expect("standard layout"),
            self.b1.as_slice_mut().expect("standard layout"),
            self.w2.as_slice_mut().expect("standard layout"),
            self.b2.as_slice_mut().expect("standard layout"),
            self.w3.as_slice_mut().expect("standard layout"),
            self.b3.as_slice_mut().expect("standard layout"),
        ]
    }

    /// Fails unless `labels` matches the model's label order exactly.
    pub fn check_label_order(&self, labels: &[String]) -> Result<()> {
        if self.label_order.as_slice() != labels {
            return Err(Error::LabelOrder(format!(
                "model has {} labels, taxonomy has {}{}",
                self.label_order.len(),
                labels.len(),
                if self.label_order.len() == labels.len() {
                    " in a different order"
                } else {
                    ""
                }
            )));
        }
        Ok(())
    }

    fn check_width(&self, width: usize) -> Result<()> {
        if width != self.d_in() {
            return Err(Error::Shape(format!(
                "input width {width}, model expects {}",
                self.d_in()
            )));
        }
        Ok(())
    }

    fn activations(&self, x: ArrayView2<f64>, mut rng: Option<&mut ChaCha8Rng>) -> Activations {
        let p = self.dropout_p;
        let a1 = input_layer(x, &self.w1) + &self.b1;
        let mut h1 = relu(&a1);
        let mask1 = match rng.as_deref_mut() {
            Some(r) if p > 0.0 => Some(dropout_mask(h1.dim(), p, r)),
            _ => None,
        };
        if let Some(m) = &mask1 {
            h1 *= m;
        }
        let a2 = h1.dot(&self.w2.t()) + &self.b2;
        let mut h2 = relu(&a2);
        let mask2 = match rng {
            Some(r) if p > 0.0 => Some(dropout_mask(h2.dim(), p, r)),
            _ => None,
        };
        if let Some(m) = &mask2 {
            h2 *= m;
        }
        let mut probs = h2.dot(&self.w3.t()) + &self.b3;
        match self.output_mode {
            OutputMode::Sigmoid => probs.mapv_inplace(sigmoid),
            OutputMode::Softmax => {
                for mut row in probs.rows_mut() {
                    let max = row.fold(f64::NEG_INFINITY, |m, &z| m.max(z));
                    row.mapv_inplace(|z| (z - max).exp());
                    let sum = row.sum();
                    row /= sum;
                }
            }
        }
        Activations {
            a1,
            h1,
            mask1,
            a2,
            h2,
            mask2,
            probs,
        }
    }

    /// Output probabilities for one input. Dropout is applied only when
    /// `rng` is given (training mode).
    pub fn forward(&self, input: &[f64], rng: Option<&mut ChaCha8Rng>) -> Result<Vec<f64>> {
        self.check_width(input.len())?;
        let x = ArrayView2::from_shape((1, input.len()), input).expect("row vector");
        Ok(self.activations(x, rng).probs.row(0).to_vec())
    }

    /// Eval-mode probabilities for every row of `inputs`.
    pub fn predict_proba(&self, inputs: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_width(inputs.ncols())?;
        let mut out = Array2::zeros((inputs.nrows(), self.n_labels()));
        for (chunk_in, mut chunk_out) in inputs
            .axis_chunks_iter(Axis(0), 256)
            .zip(out.axis_chunks_iter_mut(Axis(0), 256))
        {
            chunk_out.assign(&self.activations(chunk_in, None).probs);
        }
        Ok(out)
    }

    /// Thresholded prediction with fallback; never empty.
    pub fn predict(
        &self,
        input: &[f64],
        thresholds: &[f64],
        fallback_label: &str,
    ) -> Result<BTreeSet<String>> {
        if thresholds.len() != self.n_labels() {
            return Err(Error::Shape(format!(
                "{} thresholds for {} labels",
                thresholds.len(),
                self.n_labels()
            )));
        }
        let fallback = self
            .label_order
            .iter()
            .position(|l| l == fallback_label)
            .ok_or_else(|| Error::InvalidInput(format!("unknown fallback label `{fallback_label}`")))?;
        let probs = self.forward(input, None)?;
        Ok(predict_labels(&probs, thresholds, fallback)
            .into_iter()
            .map(|i| self.label_order[i].clone())
            .collect())
    }

    /// Mean eval-mode loss over a batch.
    pub fn batch_loss(&self, inputs: ArrayView2<f64>, targets: ArrayView2<f64>) -> Result<f64> {
        self.check_width(inputs.ncols())?;
        let probs = self.activations(inputs, None).probs;
        mean_loss(&probs, targets, self.output_mode)
    }

    /// Mean batch loss and its analytic gradients. Dropout is active iff
    /// `rng` is given.
    pub fn backward(
        &self,
        inputs: ArrayView2<f64>,
        targets: ArrayView2<f64>,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(f64, Gradients)> {
        self.check_width(inputs.ncols())?;
        if targets.dim() != (inputs.nrows(), self.n_labels()) {
            return Err(Error::Shape(format!(
                "targets {:?}, expected ({}, {})",
                targets.dim(),
                inputs.nrows(),
                self.n_labels()
            )));
        }
        let batch = inputs.nrows() as f64;
        let act = self.activations(inputs, rng);
        let loss = mean_loss(&act.probs, targets, self.output_mode)?;

        let mut dz = act.probs.clone();
        match self.output_mode {
            OutputMode::Sigmoid => {
                dz -= &targets;
                dz /= batch * self.n_labels() as f64;
            }
            OutputMode::Softmax => {
                // mean_loss has already rejected rows without gold labels.
                for (mut row, gold) in dz.rows_mut().into_iter().zip(targets.rows()) {
                    let mass = gold.sum();
                    row.zip_mut_with(&gold, |d, &y| *d -= y / mass);
                }
                dz /= batch;
            }
        }

        let w3 = dz.t().dot(&act.h2);
        let b3 = dz.sum_axis(Axis(0));
        let mut dh2 = dz.dot(&self.w3);
        if let Some(m) = &act.mask2 {
            dh2 *= m;
        }
        dh2.zip_mut_with(&act.a2, |g, &a| {
            if a <= 0.0 {
                *g = 0.0
            }
        });
        let w2 = dh2.t().dot(&act.h1);
        let b2 = dh2.sum_axis(Axis(0));
        let mut dh1 = dh2.dot(&self.w2);
        if let Some(m) = &act.mask1 {
            dh1 *= m;
        }
        dh1.zip_mut_with(&act.a1, |g, &a| {
            if a <= 0.0 {
                *g = 0.0
            }
        });
        let w1 = input_layer_grad(dh1.view(), inputs);
        let b1 = dh1.sum_axis(Axis(0));

        let grads = Gradients {
            w1: w1.as_standard_layout().into_owned(),
            b1,
            w2: w2.as_standard_layout().into_owned(),
            b2,
            w3: w3.as_standard_layout().into_owned(),
            b3,
        };
        Ok((loss, grads))
    }

    pub fn adam_step(&mut self, grads: &Gradients, state: &mut AdamState, hp: &Hyperparams) -> Result<()> {
        let config = hp.adam();
        let mut params = self.params_mut();
        state.step(&config, &mut params, &grads.tensors())
    }
}

fn mean_loss(probs: &Array2<f64>, targets: ArrayView2<f64>, mode: OutputMode) -> Result<f64> {
    let mut total = 0.0;
    for (p, y) in probs.rows().into_iter().zip(targets.rows()) {
        total += loss(
            p.as_slice().expect("contiguous row"),
            &y.to_vec(),
            mode,
        )?;
    }
    Ok(total / probs.nrows() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean training loss of each epoch (dropout active).
    pub epoch_losses: Vec<f64>,
}

/// Mini-batch Adam over `epochs` seeded shuffles of the training rows.
pub fn train(
    model: &mut MlpModel,
    inputs: ArrayView2<f64>,
    targets: ArrayView2<f64>,
    hp: &Hyperparams,
) -> Result<TrainReport> {
    hp.validate()?;
    let n = inputs.nrows();
    if n == 0 {
        return Err(Error::InvalidInput("empty training set".into()));
    }
    if targets.nrows() != n {
        return Err(Error::Shape(format!(
            "{n} inputs but {} target rows",
            targets.nrows()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    rng.set_stream(1);
    let mut state = AdamState::new(&model.param_sizes());
    let mut order: Vec<usize> = (0..n).collect();
    let mut epoch_losses = Vec::with_capacity(hp.epochs);
    for epoch in 0..hp.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(hp.batch_size) {
            let x = inputs.select(Axis(0), batch);
            let y = targets.select(Axis(0), batch);
            let (loss, grads) = model.backward(x.view(), y.view(), Some(&mut rng))?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("training loss in epoch {}", epoch + 1)));
            }
            model.adam_step(&grads, &mut state, hp)?;
            total += loss * batch.len() as f64;
        }
        let mean = total / n as f64;
        log::info!("epoch {}/{}: loss {mean:.6}", epoch + 1, hp.epochs);
        epoch_losses.push(mean);
    }
    Ok(TrainReport { epoch_losses })
}
