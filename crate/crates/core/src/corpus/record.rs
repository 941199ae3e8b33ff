use std::collections::{BTreeSet, HashSet};
use std::path::Path;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::LabelTaxonomy;
use crate::error::{self, Error, Result};

/// One book: the bibliographic fields plus its gold label set.
///
/// Labels are taxonomy IDs. Names live only in the taxonomy file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BookRecord {
    pub id: String,
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub authors: Vec<String>,
    #[serde(default)]
    pub blurb: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub isbn: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pub_date: Option<NaiveDate>,
    #[serde(default)]
    pub labels: BTreeSet<String>,
}

impl BookRecord {
    pub fn new(id: impl Into<String>) -> Self {
        BookRecord {
            id: id.into(),
            title: String::new(),
            authors: Vec::new(),
            blurb: String::new(),
            isbn: None,
            url: None,
            pub_date: None,
            labels: BTreeSet::new(),
        }
    }
}

/// Parses line-delimited JSON records. Blank lines are skipped, unknown keys
/// are ignored and ids must be unique.
pub fn parse_records_str(text: &str, source_name: &str) -> Result<Vec<BookRecord>> {
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: BookRecord = serde_json::from_str(line)
            .map_err(|e| Error::parse(source_name, line_no, e.to_string()))?;
        if !seen.insert(record.id.clone()) {
            return Err(Error::DuplicateId {
                id: record.id,
                line: line_no,
            });
        }
        records.push(record);
    }
    Ok(records)
}

pub fn parse_records(path: &Path) -> Result<Vec<BookRecord>> {
    let text = error::read_to_string(path)?;
    parse_records_str(&text, &path.display().to_string())
}

pub fn records_to_string(records: &[BookRecord]) -> Result<String> {
    let mut out = String::new();
    for record in records {
        out.push_str(&serde_json::to_string(record)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_records(path: &Path, records: &[BookRecord]) -> Result<()> {
    error::write_string(path, &records_to_string(records)?)
}

/// Fails on the first record label that the taxonomy does not define.
pub fn validate_labels(records: &[BookRecord], taxonomy: &LabelTaxonomy) -> Result<()> {
    for record in records {
        if let Some(label) = record.labels.iter().find(|l| !taxonomy.contains(l)) {
            return Err(Error::UnknownLabel {
                record: record.id.clone(),
                label: label.clone(),
            });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<BookRecord>,
    pub validation: Vec<BookRecord>,
    pub test: Vec<BookRecord>,
}

impl DatasetSplit {
    /// Builds a split, rejecting any id that appears in more than one part.
    pub fn new(
        train: Vec<BookRecord>,
        validation: Vec<BookRecord>,
        test: Vec<BookRecord>,
    ) -> Result<Self> {
        let mut seen = HashSet::new();
        for record in train.iter().chain(&validation).chain(&test) {
            if !seen.insert(record.id.as_str()) {
                return Err(Error::DuplicateId {
                    id: record.id.clone(),
                    line: 0,
                });
            }
        }
        Ok(DatasetSplit {
            train,
            validation,
            test,
        })
    }

    /// Shuffles `records` with a seeded generator and cuts it into
    /// train/validation/test by the given fractions.
    pub fn from_records(
        mut records: Vec<BookRecord>,
        validation_frac: f64,
        test_frac: f64,
        seed: u64,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&validation_frac)
            || !(0.0..=1.0).contains(&test_frac)
            || validation_frac + test_frac > 1.0
        {
            return Err(Error::InvalidInput(format!(
                "split fractions {validation_frac} + {test_frac} must lie in [0, 1]"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        records.shuffle(&mut rng);
        let n = records.len();
        let n_val = (n as f64 * validation_frac).round() as usize;
        let n_test = ((n as f64 * test_frac).round() as usize).min(n - n_val);
        let test = records.split_off(n - n_test);
        let validation = records.split_off(n - n_test - n_val);
        DatasetSplit::new(records, validation, test)
    }

    pub fn part(&self, part: SplitPart) -> &[BookRecord] {
        match part {
            SplitPart::Train => &self.train,
            SplitPart::Validation => &self.validation,
            SplitPart::Test => &self.test,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitPart {
    Train,
    Validation,
    Test,
}

impl SplitPart {
    pub const ALL: [SplitPart; 3] = [SplitPart::Train, SplitPart::Validation, SplitPart::Test];

    pub fn name(self) -> &'static str {
        match self {
            SplitPart::Train => "train",
            SplitPart::Validation => "validation",
            SplitPart::Test => "test",
        }
    }
}

impl std::str::FromStr for SplitPart {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitPart::Train),
            "validation" => Ok(SplitPart::Validation),
            "test" => Ok(SplitPart::Test),
            other => Err(Error::InvalidInput(format!("unknown split `{other}`"))),
        }
    }
}
