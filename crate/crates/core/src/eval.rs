//! Micro-averaged multi-label metrics and per-label threshold tuning.

use std::collections::{BTreeMap, BTreeSet};

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::corpus::BookRecord;
use crate::error::{Error, Result};
use crate::fusion::{predict_labels, MlpModel};
use crate::pipeline::FeaturePipeline;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        f1(self.precision(), self.recall())
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub micro_f1: f64,
    pub n_records: usize,
    /// Per-label counts: the given label order first, then any other label
    /// seen in gold or predictions, sorted.
    pub per_label: Vec<(String, Confusion)>,
}

impl EvalReport {
    pub fn totals(&self) -> Confusion {
        self.per_label.iter().fold(Confusion::default(), |acc, (_, c)| Confusion {
            tp: acc.tp + c.tp,
            fp: acc.fp + c.fp,
            fn_: acc.fn_ + c.fn_,
        })
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("micro_precision\t{:.4}\n", self.micro_precision));
        out.push_str(&format!("micro_recall\t{:.4}\n", self.micro_recall));
        out.push_str(&format!("micro_f1\t{:.4}\n", self.micro_f1));
        out.push_str(&format!("n_records\t{}\n", self.n_records));
        out.push_str("label_id\ttp\tfp\tfn\n");
        for (label, c) in &self.per_label {
            out.push_str(&format!("{label}\t{}\t{}\t{}\n", c.tp, c.fp, c.fn_));
        }
        out
    }
}

/// Pools true/false positives and false negatives over all (record, label)
/// pairs.
pub fn micro_prf(
    gold: &[BTreeSet<String>],
    predicted: &[BTreeSet<String>],
    label_order: &[String],
) -> Result<EvalReport> {
    if gold.len() != predicted.len() {
        return Err(Error::Shape(format!(
            "{} gold sets vs {} predicted sets",
            gold.len(),
            predicted.len()
        )));
    }
    let mut counts: BTreeMap<&str, Confusion> = BTreeMap::new();
    for (g, p) in gold.iter().zip(predicted) {
        for label in g.intersection(p) {
            counts.entry(label).or_default().tp += 1;
        }
        for label in p.difference(g) {
            counts.entry(label).or_default().fp += 1;
        }
        for label in g.difference(p) {
            counts.entry(label).or_default().fn_ += 1;
        }
    }
    let mut per_label: Vec<(String, Confusion)> = label_order
        .iter()
        .map(|l| (l.clone(), counts.remove(l.as_str()).unwrap_or_default()))
        .collect();
    per_label.extend(counts.into_iter().map(|(l, c)| (l.to_string(), c)));
    let mut report = EvalReport {
        micro_precision: 0.0,
        micro_recall: 0.0,
        micro_f1: 0.0,
        n_records: gold.len(),
        per_label,
    };
    let total = report.totals();
    report.micro_precision = total.precision();
    report.micro_recall = total.recall();
    report.micro_f1 = total.f1();
    Ok(report)
}

pub const THRESHOLD_STEPS: usize = 10;

/// The 0.0, 0.1, …, 1.0 grid, each value computed as `i / 10`.
pub fn threshold_grid() -> impl Iterator<Item = f64> {
    (0..=THRESHOLD_STEPS).map(|i| i as f64 / THRESHOLD_STEPS as f64)
}

pub fn on_threshold_grid(t: f64) -> bool {
    threshold_grid().any(|g| g == t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdVector(pub Vec<f64>);

impl ThresholdVector {
    pub fn uniform(n: usize, t: f64) -> Self {
        ThresholdVector(vec![t; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Binary F1 of one label column at threshold `t` (strict `p > t`).
pub fn label_f1(probs: impl Iterator<Item = f64>, gold: impl Iterator<Item = f64>, t: f64) -> f64 {
    let mut c = Confusion::default();
    for (p, y) in probs.zip(gold) {
        match (p > t, y > 0.5) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => {}
        }
    }
    c.f1()
}

/// Chooses, independently per label, the grid threshold with the highest
/// binary F1 on the tuning set; ties go to the lowest threshold. No fallback
/// label is involved.
pub fn tune_thresholds(probs: ArrayView2<f64>, gold: ArrayView2<f64>) -> Result<ThresholdVector> {
    if probs.dim() != gold.dim() {
        return Err(Error::Shape(format!(
            "probabilities {:?} vs gold {:?}",
            probs.dim(),
            gold.dim()
        )));
    }
    let thresholds = probs
        .columns()
        .into_iter()
        .zip(gold.columns())
        .map(|(p, y)| {
            let mut best = (f64::NEG_INFINITY, 0.0);
            for t in threshold_grid() {
                let score = label_f1(p.iter().copied(), y.iter().copied(), t);
                if score > best.0 {
                    best = (score, t);
                }
            }
            best.1
        })
        .collect();
    Ok(ThresholdVector(thresholds))
}

/// Which records an evaluation runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RecordFilter {
    #[default]
    All,
    /// Only records with at least one resolvable author embedding.
    AuthorCovered,
}

/// Eval-mode forward, thresholded prediction with fallback, then micro
/// P/R/F1 against the records' gold labels restricted to the model's labels.
pub fn evaluate_model(
    model: &MlpModel,
    thresholds: &ThresholdVector,
    fallback_label: &str,
    records: &[BookRecord],
    pipeline: &FeaturePipeline,
    filter: RecordFilter,
) -> Result<EvalReport> {
    let selected: Vec<&BookRecord> = match filter {
        RecordFilter::All => records.iter().collect(),
        RecordFilter::AuthorCovered => records
            .iter()
            .filter(|r| pipeline.author_available(r))
            .collect(),
    };
    if selected.is_empty() {
        return Err(Error::InvalidInput("no records to evaluate".into()));
    }
    if thresholds.len() != model.n_labels() {
        return Err(Error::Shape(format!(
            "{} thresholds for {} labels",
            thresholds.len(),
            model.n_labels()
        )));
    }
    let fallback = model
        .label_order
        .iter()
        .position(|l| l == fallback_label)
        .ok_or_else(|| Error::InvalidInput(format!("unknown fallback label `{fallback_label}`")))?;
    let inputs = pipeline.matrix(selected.iter().copied())?;
    let probs = model.predict_proba(inputs.view())?;
    let predicted: Vec<BTreeSet<String>> = probs
        .rows()
        .into_iter()
        .map(|row| {
            predict_labels(row.as_slice().expect("contiguous row"), thresholds.as_slice(), fallback)
                .into_iter()
                .map(|i| model.label_order[i].clone())
                .collect()
        })
        .collect();
    let known: BTreeSet<&String> = model.label_order.iter().collect();
    let gold: Vec<BTreeSet<String>> = selected
        .iter()
        .map(|r| r.labels.iter().filter(|l| known.contains(l)).cloned().collect())
        .collect();
    micro_prf(&gold, &predicted, &model.label_order)
}
