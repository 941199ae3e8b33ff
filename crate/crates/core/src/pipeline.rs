//! Turns records into fusion-model inputs and trains a complete system:
//! encoder and scaler fitted on train, MLP trained on train, thresholds
//! tuned on validation.

use std::collections::BTreeMap;
use std::sync::Arc;

use chrono::NaiveDate;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::author_kg::{author_embedding, has_author_embedding, EmbeddingTable, EntityMap};
use crate::corpus::BookRecord;
use crate::error::{Error, Result};
use crate::eval::{tune_thresholds, ThresholdVector};
use crate::fusion::{init_model, train, Hyperparams, InputBlocks, MlpModel, TrainReport};
use crate::metadata::{extract_metadata, FeatureScaler, GenderTable, MetadataVector};
use crate::text::TextEncoder;

pub const TEXT_BLOCK: &str = "text";
pub const METADATA_BLOCK: &str = "metadata";
pub const AUTHOR_BLOCK: &str = "author";

/// Which representations feed the classifier. A switched-off block is left
/// out of the input, not zero-filled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureSwitches {
    pub text: bool,
    pub metadata: bool,
    pub author: bool,
}

impl Default for FeatureSwitches {
    fn default() -> Self {
        FeatureSwitches::ALL
    }
}

impl FeatureSwitches {
    pub const ALL: FeatureSwitches = FeatureSwitches {
        text: true,
        metadata: true,
        author: true,
    };

    pub fn new(text: bool, metadata: bool, author: bool) -> Self {
        FeatureSwitches { text, metadata, author }
    }

    pub fn validate(&self) -> Result<()> {
        if self.text || self.metadata || self.author {
            Ok(())
        } else {
            Err(Error::InvalidInput("at least one feature block must be enabled".into()))
        }
    }

    /// e.g. `text+author`.
    pub fn describe(&self) -> String {
        let mut parts = Vec::new();
        if self.text {
            parts.push(TEXT_BLOCK);
        }
        if self.metadata {
            parts.push(METADATA_BLOCK);
        }
        if self.author {
            parts.push(AUTHOR_BLOCK);
        }
        parts.join("+")
    }
}

/// Lookup tables shared by every pipeline built over one corpus.
#[derive(Debug, Clone, Default)]
pub struct Resources {
    pub gender: GenderTable,
    pub entities: EntityMap,
    pub embeddings: EmbeddingTable,
}

#[derive(Debug, Clone)]
pub struct FeaturePipeline {
    switches: FeatureSwitches,
    encoder: Option<TextEncoder>,
    scaler: Option<FeatureScaler>,
    resources: Arc<Resources>,
    reference_date: NaiveDate,
}

/// Fits the metadata scaler on training records.
pub fn fit_scaler(
    train: &[BookRecord],
    gender: &GenderTable,
    reference_date: NaiveDate,
) -> Result<FeatureScaler> {
    let rows: Vec<Vec<f64>> = train
        .iter()
        .map(|r| extract_metadata(r, gender, reference_date).to_array().to_vec())
        .collect();
    FeatureScaler::fit(&rows)
}

impl FeaturePipeline {
    /// `encoder` is required when text is on; `scaler` is optional and only
    /// used for the metadata block.
    pub fn new(
        switches: FeatureSwitches,
        encoder: Option<TextEncoder>,
        scaler: Option<FeatureScaler>,
        resources: Arc<Resources>,
        reference_date: NaiveDate,
    ) -> Result<Self> {
        switches.validate()?;
        if switches.text && encoder.is_none() {
            return Err(Error::InvalidInput("text features enabled but no encoder given".into()));
        }
        if let Some(s) = &scaler {
            if s.dim() != MetadataVector::DIM {
                return Err(Error::Dimension {
                    entity: "metadata scaler".into(),
                    expected: MetadataVector::DIM,
                    found: s.dim(),
                });
            }
        }
        Ok(FeaturePipeline {
            switches,
            encoder: if switches.text { encoder } else { None },
            scaler: if switches.metadata { scaler } else { None },
            resources,
            reference_date,
        })
    }

    pub fn switches(&self) -> FeatureSwitches {
        self.switches
    }

    pub fn encoder(&self) -> Option<&TextEncoder> {
        self.encoder.as_ref()
    }

    pub fn scaler(&self) -> Option<&FeatureScaler> {
        self.scaler.as_ref()
    }

    pub fn resources(&self) -> &Resources {
        &self.resources
    }

    pub fn input_blocks(&self) -> InputBlocks {
        let mut blocks = Vec::new();
        if let Some(enc) = &self.encoder {
            blocks.push((TEXT_BLOCK.to_string(), enc.dim()));
        }
        if self.switches.metadata {
            blocks.push((METADATA_BLOCK.to_string(), MetadataVector::DIM));
        }
        if self.switches.author {
            blocks.push((AUTHOR_BLOCK.to_string(), self.resources.embeddings.dim()));
        }
        blocks
    }

    pub fn width(&self) -> usize {
        self.input_blocks().iter().map(|(_, w)| w).sum()
    }

    pub fn author_available(&self, record: &BookRecord) -> bool {
        has_author_embedding(record, &self.resources.entities, &self.resources.embeddings)
    }

    /// Concatenation in block order text, metadata, author.
    pub fn input(&self, record: &BookRecord) -> Result<Vec<f64>> {
        let mut x = Vec::with_capacity(self.width());
        if let Some(enc) = &self.encoder {
            x.extend(enc.encode(record)?);
        }
        if self.switches.metadata {
            let raw = extract_metadata(record, &self.resources.gender, self.reference_date).to_array();
            match &self.scaler {
                Some(s) => x.extend(s.apply(&raw)?),
                None => x.extend(raw),
            }
        }
        if self.switches.author {
            let emb = author_embedding(record, &self.resources.entities, &self.resources.embeddings);
            x.extend(emb.vector);
        }
        Ok(x)
    }

    pub fn matrix<'a>(&self, records: impl IntoIterator<Item = &'a BookRecord>) -> Result<Array2<f64>> {
        let width = self.width();
        let mut data = Vec::new();
        let mut n = 0;
        for r in records {
            data.extend(self.input(r)?);
            n += 1;
        }
        Array2::from_shape_vec((n, width), data).map_err(|e| Error::Shape(e.to_string()))
    }

    /// Errors unless the model was trained on exactly this pipeline's blocks.
    pub fn check_model(&self, model: &MlpModel) -> Result<()> {
        let blocks = self.input_blocks();
        if model.input_blocks != blocks {
            return Err(Error::Shape(format!(
                "model expects input blocks {:?}, pipeline produces {:?}",
                model.input_blocks, blocks
            )));
        }
        Ok(())
    }
}

/// n_records × L indicator matrix; labels outside `label_order` are ignored.
pub fn label_matrix(records: &[BookRecord], label_order: &[String]) -> Array2<f64> {
    let index: BTreeMap<&str, usize> = label_order
        .iter()
        .enumerate()
        .map(|(i, l)| (l.as_str(), i))
        .collect();
    let mut y = Array2::zeros((records.len(), label_order.len()));
    for (row, r) in records.iter().enumerate() {
        for l in &r.labels {
            if let Some(&col) = index.get(l.as_str()) {
                y[[row, col]] = 1.0;
            }
        }
    }
    y
}

/// Most frequent label among `records`; ties go to the label earliest in
/// `label_order`.
pub fn most_frequent_label(records: &[BookRecord], label_order: &[String]) -> Result<String> {
    let y = label_matrix(records, label_order);
    let counts = y.sum_axis(ndarray::Axis(0));
    let mut best: Option<(usize, f64)> = None;
    for (i, &c) in counts.iter().enumerate() {
        if c > 0.0 && best.is_none_or(|(_, b)| c > b) {
            best = Some((i, c));
        }
    }
    best.map(|(i, _)| label_order[i].clone())
        .ok_or_else(|| Error::InvalidInput("no training record carries a known label".into()))
}

/// Everything needed to predict: the model, its tuned thresholds and the
/// fallback label.
#[derive(Debug, Clone)]
pub struct FusionSystem {
    pub model: MlpModel,
    pub thresholds: ThresholdVector,
    pub fallback_label: String,
    pub report: TrainReport,
}

/// Trains the MLP on `train`, tunes thresholds on `validation` and picks
/// the fallback label from `train`.
pub fn train_fusion(
    pipeline: &FeaturePipeline,
    train_records: &[BookRecord],
    validation: &[BookRecord],
    label_order: &[String],
    hp: &Hyperparams,
) -> Result<FusionSystem> {
    if validation.is_empty() {
        return Err(Error::InvalidInput("empty validation set for threshold tuning".into()));
    }
    let fallback_label = most_frequent_label(train_records, label_order)?;
    let x = pipeline.matrix(train_records)?;
    let y = label_matrix(train_records, label_order);
    let mut model = init_model(x.ncols(), label_order.to_vec(), hp)?
        .with_input_blocks(pipeline.input_blocks())?;
    let report = train(&mut model, x.view(), y.view(), hp)?;
    let probs = model.predict_proba(pipeline.matrix(validation)?.view())?;
    let thresholds = tune_thresholds(probs.view(), label_matrix(validation, label_order).view())?;
    Ok(FusionSystem {
        model,
        thresholds,
        fallback_label,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::EncoderConfig;

    fn rec(id: &str, blurb: &str, labels: &[&str]) -> BookRecord {
        let mut r = BookRecord::new(id);
        r.title = "A Title".into();
        r.blurb = blurb.into();
        r.authors = vec!["Anna Berg".into()];
        r.labels = labels.iter().map(|s| s.to_string()).collect();
        r
    }

    fn resources() -> Arc<Resources> {
        let mut res = Resources::default();
        res.entities.insert("Anna Berg", "Q1").unwrap();
        res.embeddings.insert("Q1", vec![0.5; 200]).unwrap();
        res.gender.insert("anna", 0.1).unwrap();
        Arc::new(res)
    }

    fn date() -> NaiveDate {
        NaiveDate::from_ymd_opt(2019, 1, 1).unwrap()
    }

    #[test]
    fn width_follows_switches() {
        let records = vec![rec("a", "one two", &["X"]), rec("b", "two three", &["Y"])];
        let enc = TextEncoder::fit(&EncoderConfig::default(), &records).unwrap();
        let text_dim = enc.dim();
        for (t, m, a) in [(true, true, true), (true, false, false), (false, true, false), (false, false, true)] {
            let p = FeaturePipeline::new(FeatureSwitches::new(t, m, a), Some(enc.clone()), None, resources(), date())
                .unwrap();
            let expect = t as usize * text_dim + m as usize * 10 + a as usize * 200;
            assert_eq!(p.width(), expect);
            assert_eq!(p.input(&records[0]).unwrap().len(), expect);
        }
        assert!(FeaturePipeline::new(FeatureSwitches::new(false, false, false), None, None, resources(), date()).is_err());
        assert!(FeaturePipeline::new(FeatureSwitches::ALL, None, None, resources(), date()).is_err());
    }

    #[test]
    fn scaled_metadata_block() {
        let records = vec![rec("a", "one two", &["X"]), rec("b", "two three four", &["Y"])];
        let scaler = fit_scaler(&records, &resources().gender, date()).unwrap();
        let p = FeaturePipeline::new(FeatureSwitches::new(false, true, false), None, Some(scaler), resources(), date())
            .unwrap();
        let m = p.matrix(&records).unwrap();
        // blurb word counts 2 and 3 standardize to -1 and +1
        assert_eq!(m[[0, 3]], -1.0);
        assert_eq!(m[[1, 3]], 1.0);
    }

    #[test]
    fn labels_and_fallback() {
        let order: Vec<String> = ["X", "Y", "Z"].iter().map(|s| s.to_string()).collect();
        let records = vec![rec("a", "", &["Y", "Q"]), rec("b", "", &["Z"]), rec("c", "", &["Z", "Y"])];
        let y = label_matrix(&records, &order);
        assert_eq!(y.row(0).to_vec(), vec![0.0, 1.0, 0.0]);
        assert_eq!(y.row(2).to_vec(), vec![0.0, 1.0, 1.0]);
        assert_eq!(most_frequent_label(&records, &order).unwrap(), "Y");
        assert!(most_frequent_label(&records[..0], &order).is_err());
    }
}
