//! Text-only reference system: blurb TF-IDF vectors fed to a chain of
//! L2-regularized logistic regressions, one per label in flat order.
//!
//! Link `k` sees the TF-IDF features plus the 0/1 indicators of labels
//! `0..k`. Training uses the gold indicators; prediction feeds each link the
//! hard decisions of the links before it.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::BookRecord;
use crate::error::{self, Error, Result};
use crate::eval::{micro_prf, EvalReport};
use crate::text::{EncoderConfig, EncoderKind, TextEncoder, TextField};

pub const CHAIN_FORMAT_VERSION: u32 = 1;

/// Sparse feature row as `(column, value)` pairs with increasing columns.
pub type SparseRow = Vec<(usize, f64)>;

pub fn to_sparse(dense: &[f64]) -> SparseRow {
    dense
        .iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(i, v)| (i, *v))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LrConfig {
    pub lambda: f64,
    pub learning_rate: f64,
    pub epochs: usize,
}

impl Default for LrConfig {
    fn default() -> Self {
        LrConfig {
            lambda: 1e-3,
            learning_rate: 0.5,
            epochs: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryLr {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub lambda: f64,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn check_row(row: &[(usize, f64)], width: usize) -> Result<()> {
    match row.last() {
        Some(&(col, _)) if col >= width => Err(Error::Dimension {
            entity: "feature row".into(),
            expected: width,
            found: col + 1,
        }),
        _ => Ok(()),
    }
}

impl BinaryLr {
    pub fn zeros(width: usize, lambda: f64) -> Self {
        BinaryLr {
            weights: vec![0.0; width],
            bias: 0.0,
            lambda,
        }
    }

    pub fn width(&self) -> usize {
        self.weights.len()
    }

    fn logit(&self, row: &[(usize, f64)]) -> f64 {
        self.bias + row.iter().map(|&(i, v)| self.weights[i] * v).sum::<f64>()
    }

    pub fn probability(&self, row: &[(usize, f64)]) -> Result<f64> {
        check_row(row, self.width())?;
        Ok(sigmoid(self.logit(row)))
    }

    /// Mean log-loss plus `λ/2 ‖w‖²`.
    pub fn objective(&self, inputs: &[SparseRow], targets: &[f64]) -> f64 {
        let data: f64 = inputs
            .iter()
            .zip(targets)
            .map(|(row, &y)| {
                let z = self.logit(row);
                softplus(z) - y * z
            })
            .sum::<f64>()
            / inputs.len() as f64;
        let norm2: f64 = self.weights.iter().map(|w| w * w).sum();
        data + 0.5 * self.lambda * norm2
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LrFit {
    pub model: BinaryLr,
    /// Objective before each of the `epochs` updates, then after the last.
    pub loss_trace: Vec<f64>,
}

/// Full-batch gradient descent from zero weights. Deterministic, so no
/// seed is needed.
pub fn train_binary_lr(
    inputs: &[SparseRow],
    width: usize,
    targets: &[f64],
    config: &LrConfig,
) -> Result<LrFit> {
    if inputs.is_empty() {
        return Err(Error::InvalidInput("logistic regression needs at least one example".into()));
    }
    if inputs.len() != targets.len() {
        return Err(Error::Shape(format!(
            "{} rows but {} targets",
            inputs.len(),
            targets.len()
        )));
    }
    for row in inputs {
        check_row(row, width)?;
    }
    let n = inputs.len() as f64;
    let mut model = BinaryLr::zeros(width, config.lambda);
    let mut trace = Vec::with_capacity(config.epochs + 1);
    let mut grad = vec![0.0; width];
    for epoch in 0..=config.epochs {
        let loss = model.objective(inputs, targets);
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("logistic loss at epoch {epoch}")));
        }
        trace.push(loss);
        if epoch == config.epochs {
            break;
        }
        grad.iter_mut().zip(&model.weights).for_each(|(g, w)| *g = config.lambda * w);
        let mut grad_b = 0.0;
        for (row, &y) in inputs.iter().zip(targets) {
            let r = (sigmoid(model.logit(row)) - y) / n;
            grad_b += r;
            for &(i, v) in row {
                grad[i] += r * v;
            }
        }
        for (w, g) in model.weights.iter_mut().zip(&grad) {
            *w -= config.learning_rate * g;
        }
        model.bias -= config.learning_rate * grad_b;
    }
    Ok(LrFit {
        model,
        loss_trace: trace,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainModel {
    pub base_dim: usize,
    pub label_order: Vec<String>,
    pub links: Vec<BinaryLr>,
}

fn augmented(row: &[(usize, f64)], base_dim: usize, previous: &[bool]) -> SparseRow {
    let mut out = row.to_vec();
    out.extend(
        previous
            .iter()
            .enumerate()
            .filter(|(_, on)| **on)
            .map(|(j, _)| (base_dim + j, 1.0)),
    );
    out
}

pub fn train_chain(
    inputs: &[SparseRow],
    base_dim: usize,
    gold: &[BTreeSet<String>],
    label_order: &[String],
    config: &LrConfig,
) -> Result<ChainModel> {
    if inputs.len() != gold.len() {
        return Err(Error::Shape(format!(
            "{} rows but {} gold sets",
            inputs.len(),
            gold.len()
        )));
    }
    let indicators: Vec<Vec<bool>> = gold
        .iter()
        .map(|g| label_order.iter().map(|l| g.contains(l)).collect())
        .collect();
    let mut links = Vec::with_capacity(label_order.len());
    for k in 0..label_order.len() {
        let rows: Vec<SparseRow> = inputs
            .iter()
            .zip(&indicators)
            .map(|(row, ind)| augmented(row, base_dim, &ind[..k]))
            .collect();
        let targets: Vec<f64> = indicators.iter().map(|ind| ind[k] as u8 as f64).collect();
        links.push(train_binary_lr(&rows, base_dim + k, &targets, config)?.model);
        log::debug!("chain link {}/{} trained", k + 1, label_order.len());
    }
    Ok(ChainModel {
        base_dim,
        label_order: label_order.to_vec(),
        links,
    })
}

/// Emits label `k` when its link's probability is strictly above
/// `threshold`. The result may be empty.
pub fn predict_chain(chain: &ChainModel, row: &[(usize, f64)], threshold: f64) -> Result<BTreeSet<String>> {
    check_row(row, chain.base_dim)?;
    let mut decisions = Vec::with_capacity(chain.links.len());
    for link in &chain.links {
        let p = link.probability(&augmented(row, chain.base_dim, &decisions))?;
        decisions.push(p > threshold);
    }
    Ok(chain
        .label_order
        .iter()
        .zip(decisions)
        .filter(|(_, on)| *on)
        .map(|(l, _)| l.clone())
        .collect())
}

#[derive(Serialize, Deserialize)]
struct LinkFile {
    cols: usize,
    weights: Vec<f64>,
    bias: f64,
    lambda: f64,
}

#[derive(Serialize, Deserialize)]
struct ChainFile {
    format_version: u32,
    base_dim: usize,
    #[serde(rename = "L")]
    n_labels: usize,
    label_order: Vec<String>,
    links: Vec<LinkFile>,
}

impl ChainModel {
    pub fn to_json(&self) -> Result<String> {
        let file = ChainFile {
            format_version: CHAIN_FORMAT_VERSION,
            base_dim: self.base_dim,
            n_labels: self.label_order.len(),
            label_order: self.label_order.clone(),
            links: self
                .links
                .iter()
                .map(|l| LinkFile {
                    cols: l.width(),
                    weights: l.weights.clone(),
                    bias: l.bias,
                    lambda: l.lambda,
                })
                .collect(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ChainFile = serde_json::from_str(text)?;
        if file.format_version != CHAIN_FORMAT_VERSION {
            return Err(Error::Version {
                found: file.format_version,
                expected: CHAIN_FORMAT_VERSION,
            });
        }
        if file.label_order.len() != file.n_labels || file.links.len() != file.n_labels {
            return Err(Error::Shape(format!(
                "L = {} with {} labels and {} links",
                file.n_labels,
                file.label_order.len(),
                file.links.len()
            )));
        }
        let mut links = Vec::with_capacity(file.links.len());
        for (k, link) in file.links.into_iter().enumerate() {
            if link.cols != file.base_dim + k || link.weights.len() != link.cols {
                return Err(Error::Shape(format!(
                    "link {k}: {} columns with {} weights, expected {}",
                    link.cols,
                    link.weights.len(),
                    file.base_dim + k
                )));
            }
            links.push(BinaryLr {
                weights: link.weights,
                bias: link.bias,
                lambda: link.lambda,
            });
        }
        Ok(ChainModel {
            base_dim: file.base_dim,
            label_order: file.label_order,
            links,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        error::write_string(path, &self.to_json()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&error::read_to_string(path)?)
    }
}

/// The complete baseline: a blurb-only TF-IDF encoder and a chain over it.
#[derive(Debug, Clone)]
pub struct BaselineSystem {
    pub encoder: TextEncoder,
    pub chain: ChainModel,
}

/// The TF-IDF configuration the baseline uses: `base` with the text field
/// forced to the blurb alone.
pub fn baseline_encoder_config(base: &EncoderConfig) -> EncoderConfig {
    EncoderConfig {
        kind: EncoderKind::Tfidf,
        field: TextField::BlurbOnly,
        ..base.clone()
    }
}

impl BaselineSystem {
    pub fn fit(
        train: &[BookRecord],
        label_order: &[String],
        encoder_config: &EncoderConfig,
        lr: &LrConfig,
    ) -> Result<Self> {
        let encoder = TextEncoder::fit(&baseline_encoder_config(encoder_config), train)?;
        let rows = train
            .iter()
            .map(|r| encoder.encode(r).map(|v| to_sparse(&v)))
            .collect::<Result<Vec<_>>>()?;
        let gold: Vec<BTreeSet<String>> = train.iter().map(|r| r.labels.clone()).collect();
        let chain = train_chain(&rows, encoder.dim(), &gold, label_order, lr)?;
        Ok(BaselineSystem { encoder, chain })
    }

    pub fn predict(&self, record: &BookRecord) -> Result<BTreeSet<String>> {
        predict_chain(&self.chain, &to_sparse(&self.encoder.encode(record)?), 0.5)
    }

    pub fn evaluate(&self, records: &[BookRecord]) -> Result<EvalReport> {
        if records.is_empty() {
            return Err(Error::InvalidInput("no records to evaluate".into()));
        }
        let known: BTreeSet<&String> = self.chain.label_order.iter().collect();
        let gold: Vec<BTreeSet<String>> = records
            .iter()
            .map(|r| r.labels.iter().filter(|l| known.contains(l)).cloned().collect())
            .collect();
        let predicted = records
            .iter()
            .map(|r| self.predict(r))
            .collect::<Result<Vec<_>>>()?;
        micro_prf(&gold, &predicted, &self.chain.label_order)
    }
}
