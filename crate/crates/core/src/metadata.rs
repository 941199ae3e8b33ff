//! The ten engineered metadata features and their standardization.
//!
//! Every count uses whitespace tokenization with no punctuation stripping,
//! and word lengths are counted in Unicode scalar values, so `"Anfang."`
//! is one word of length 7.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::corpus::BookRecord;
use crate::error::{self, Error, Result};

/// Tokens ignored when looking for a given name or normalizing author names.
pub const HONORIFICS: [&str; 3] = ["Dr.", "Prof.", "med."];

/// Tokens that set the academic-title flag.
pub const ACADEMIC_TITLES: [&str; 2] = ["Dr.", "Prof."];

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WordStats {
    pub count: usize,
    pub longest: usize,
    pub mean: f64,
    pub median: f64,
}

pub fn word_stats(text: &str) -> WordStats {
    let mut lengths: Vec<usize> = text.split_whitespace().map(|w| w.chars().count()).collect();
    if lengths.is_empty() {
        return WordStats::default();
    }
    lengths.sort_unstable();
    let count = lengths.len();
    let total: usize = lengths.iter().sum();
    let median = if count % 2 == 1 {
        lengths[count / 2] as f64
    } else {
        (lengths[count / 2 - 1] + lengths[count / 2]) as f64 / 2.0
    };
    WordStats {
        count,
        longest: lengths[count - 1],
        mean: total as f64 / count as f64,
        median,
    }
}

pub fn academic_title_flag<S: AsRef<str>>(authors: &[S]) -> bool {
    authors
        .iter()
        .flat_map(|a| a.as_ref().split_whitespace())
        .any(|tok| ACADEMIC_TITLES.contains(&tok))
}

/// First non-honorific token of an author string, lowercased.
pub fn given_name(author: &str) -> Option<String> {
    author
        .split_whitespace()
        .find(|tok| !HONORIFICS.contains(tok))
        .map(str::to_lowercase)
}

/// Lowercase given name → probability of being male.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GenderTable {
    p_male: BTreeMap<String, f64>,
}

impl GenderTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, p_male: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&p_male) {
            return Err(Error::InvalidInput(format!(
                "p_male for `{name}` is {p_male}, outside [0, 1]"
            )));
        }
        if self.p_male.insert(name.to_lowercase(), p_male).is_some() {
            return Err(Error::DuplicateKey(name.to_lowercase()));
        }
        Ok(())
    }

    pub fn get(&self, given_name: &str) -> Option<f64> {
        self.p_male.get(given_name).copied()
    }

    pub fn len(&self) -> usize {
        self.p_male.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p_male.is_empty()
    }

    /// Whether the first author's given name has an entry.
    pub fn covers<S: AsRef<str>>(&self, authors: &[S]) -> bool {
        authors
            .first()
            .and_then(|a| given_name(a.as_ref()))
            .is_some_and(|n| self.p_male.contains_key(&n))
    }

    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let mut table = GenderTable::new();
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == "name,p_male" => {}
            None => return Ok(table),
            Some(_) => return Err(Error::parse(source_name, 1, "expected header `name,p_male`")),
        }
        for (idx, line) in lines {
            let line_no = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let (name, p) = line
                .rsplit_once(',')
                .ok_or_else(|| Error::parse(source_name, line_no, "expected `name,p_male`"))?;
            let p: f64 = p
                .trim()
                .parse()
                .map_err(|_| Error::parse(source_name, line_no, format!("bad probability `{p}`")))?;
            table
                .insert(name.trim(), p)
                .map_err(|e| Error::parse(source_name, line_no, e.to_string()))?;
        }
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&error::read_to_string(path)?, &path.display().to_string())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("name,p_male\n");
        for (name, p) in &self.p_male {
            out.push_str(&format!("{name},{p}\n"));
        }
        out
    }
}

/// `(p_male, p_female)` for the first author; `(0.5, 0.5)` when the name is
/// unknown or there is no author.
pub fn gender_probability(first_author: Option<&str>, table: &GenderTable) -> (f64, f64) {
    match first_author.and_then(given_name).and_then(|n| table.get(&n)) {
        Some(p) => (p, 1.0 - p),
        None => (0.5, 0.5),
    }
}

pub fn age_years(pub_date: Option<NaiveDate>, reference: NaiveDate) -> f64 {
    let Some(date) = pub_date else {
        return 0.0;
    };
    let days = (reference - date).num_days();
    if days < 0 {
        log::warn!("publication date {date} is after reference date {reference}; age clamped to 0");
        return 0.0;
    }
    days as f64 / 365.25
}

/// The ten metadata dimensions, in model input order.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetadataVector {
    pub num_authors: f64,
    pub academic_title: f64,
    pub title_words: f64,
    pub blurb_words: f64,
    pub longest_word_len: f64,
    pub mean_word_len: f64,
    pub median_word_len: f64,
    pub age_years: f64,
    pub p_male: f64,
    pub p_female: f64,
}

impl MetadataVector {
    pub const DIM: usize = 10;

    pub const NAMES: [&'static str; Self::DIM] = [
        "num_authors",
        "academic_title",
        "title_words",
        "blurb_words",
        "longest_word_len",
        "mean_word_len",
        "median_word_len",
        "age_years",
        "p_male",
        "p_female",
    ];

    pub fn to_array(&self) -> [f64; Self::DIM] {
        [
            self.num_authors,
            self.academic_title,
            self.title_words,
            self.blurb_words,
            self.longest_word_len,
            self.mean_word_len,
            self.median_word_len,
            self.age_years,
            self.p_male,
            self.p_female,
        ]
    }
}

pub fn extract_metadata(
    record: &BookRecord,
    gender: &GenderTable,
    reference_date: NaiveDate,
) -> MetadataVector {
    let title = word_stats(&record.title);
    let blurb = word_stats(&record.blurb);
    let (p_male, p_female) =
        gender_probability(record.authors.first().map(String::as_str), gender);
    MetadataVector {
        num_authors: record.authors.len() as f64,
        academic_title: if academic_title_flag(&record.authors) { 1.0 } else { 0.0 },
        title_words: title.count as f64,
        blurb_words: blurb.count as f64,
        longest_word_len: blurb.longest as f64,
        mean_word_len: blurb.mean,
        median_word_len: blurb.median,
        age_years: age_years(record.pub_date, reference_date),
        p_male,
        p_female,
    }
}

/// Per-dimension standardization fitted on training vectors.
///
/// Uses the population standard deviation; zero-variance dimensions store a
/// standard deviation of 1 so that they scale to `x - mean`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureScaler {
    pub fn fit(vectors: &[Vec<f64>]) -> Result<Self> {
        if vectors.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "scaler needs at least 2 training vectors, got {}",
                vectors.len()
            )));
        }
        let dim = vectors[0].len();
        if let Some(v) = vectors.iter().find(|v| v.len() != dim) {
            return Err(Error::Shape(format!(
                "scaler input widths differ: {dim} vs {}",
                v.len()
            )));
        }
        let n = vectors.len() as f64;
        let mut mean = vec![0.0; dim];
        for v in vectors {
            for (m, x) in mean.iter_mut().zip(v) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for v in vectors {
            for ((s, x), m) in var.iter_mut().zip(v).zip(&mean) {
                *s += (x - m) * (x - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(FeatureScaler { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        Ok(x.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((x, m), s)| (x - m) / s)
            .collect())
    }

    pub fn invert(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check(z)?;
        Ok(z.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((z, m), s)| z * s + m)
            .collect())
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Shape(format!(
                "scaler fitted on width {}, got {}",
                self.dim(),
                x.len()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn date(y: i32, m: u32, d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, d).unwrap()
    }

    #[test]
    fn word_stats_examples() {
        let s = word_stats("Das Grab ist erst der Anfang");
        assert_eq!(s.count, 6);
        assert_eq!(s.longest, 6);
        assert_eq!(s.mean, 23.0 / 6.0);
        assert_eq!(s.median, 3.5);
        assert_eq!(word_stats(""), WordStats::default());
        assert_eq!(word_stats("   \t\n"), WordStats::default());
        let s = word_stats("ab abc a");
        assert_eq!((s.count, s.longest, s.mean, s.median), (3, 3, 2.0, 2.0));
    }

    #[test]
    fn word_lengths_count_scalar_values() {
        let s = word_stats("Ernährung Künste");
        assert_eq!(s.longest, 9);
        assert_eq!(s.count, 2);
    }

    #[test]
    fn academic_titles() {
        assert!(academic_title_flag(&["Dr. med. Gisela Rauch-Petz"]));
        assert!(!academic_title_flag(&["Kathy Reichs"]));
        assert!(!academic_title_flag::<&str>(&[]));
        assert!(academic_title_flag(&["Anna Schmidt", "Prof. Max Muster"]));
        assert!(!academic_title_flag(&["Dr Anna", "prof. Max"]));
    }

    #[test]
    fn gender_lookup() {
        let mut table = GenderTable::new();
        table.insert("kathy", 0.02).unwrap();
        table.insert("Anna", 0.01).unwrap();
        assert_eq!(gender_probability(Some("Kathy Reichs"), &table), (0.02, 0.98));
        assert_eq!(gender_probability(Some("Dr. Anna Schmidt"), &table), (0.01, 0.99));
        assert_eq!(gender_probability(Some("Klaus Siblewski"), &table), (0.5, 0.5));
        assert_eq!(gender_probability(None, &table), (0.5, 0.5));
        assert_eq!(gender_probability(Some("Dr. med."), &table), (0.5, 0.5));
    }

    #[test]
    fn gender_table_file() {
        let t = GenderTable::parse("name,p_male\nKathy,0.02\nklaus,0.99\n", "g").unwrap();
        assert_eq!(t.get("kathy"), Some(0.02));
        assert_eq!(GenderTable::parse(&t.to_csv(), "g").unwrap(), t);
        assert!(GenderTable::parse("name,p_male\nx,1.5\n", "g").is_err());
        assert!(GenderTable::parse("name,p_male\nx,0.5\nX,0.4\n", "g").is_err());
        assert!(GenderTable::parse("", "g").unwrap().is_empty());
    }

    #[test]
    fn age_examples() {
        let age = age_years(Some(date(2018, 6, 1)), date(2019, 6, 1));
        assert!((age - 365.0 / 365.25).abs() < 1e-12);
        assert!((age - 0.99932).abs() < 1e-5);
        assert_eq!(age_years(Some(date(2019, 6, 1)), date(2019, 6, 1)), 0.0);
        assert_eq!(age_years(None, date(2019, 6, 1)), 0.0);
        assert_eq!(age_years(Some(date(2020, 1, 1)), date(2019, 6, 1)), 0.0);
    }

    #[test]
    fn extract_examples() {
        let mut r = BookRecord::new("x");
        r.title = "Coenzym Q10".into();
        r.authors = vec!["Hanns-Josef Ortheil".into(), "Klaus Siblewski".into()];
        let m = extract_metadata(&r, &GenderTable::new(), date(2019, 6, 1));
        assert_eq!(m.num_authors, 2.0);
        assert_eq!(m.academic_title, 0.0);
        assert_eq!(m.title_words, 2.0);
        assert_eq!(
            (m.blurb_words, m.longest_word_len, m.mean_word_len, m.median_word_len),
            (0.0, 0.0, 0.0, 0.0)
        );
        assert_eq!(m.p_male + m.p_female, 1.0);
    }

    #[test]
    fn scaler_examples() {
        assert!(FeatureScaler::fit(&[vec![1.0]]).is_err());
        assert!(FeatureScaler::fit(&[]).is_err());
        let s = FeatureScaler::fit(&[vec![0.0, 4.0], vec![2.0, 4.0]]).unwrap();
        assert_eq!(s.apply(&[0.0, 4.0]).unwrap(), vec![-1.0, 0.0]);
        assert_eq!(s.apply(&[2.0, 4.0]).unwrap(), vec![1.0, 0.0]);
        assert_eq!(s.std[1], 1.0);
        assert!(s.apply(&[1.0]).is_err());
    }

    proptest! {
        #[test]
        fn mean_times_count_is_total_chars(words in proptest::collection::vec("[a-zäöüß]{1,12}", 0..40)) {
            let text = words.join(" ");
            let s = word_stats(&text);
            let total: usize = words.iter().map(|w| w.chars().count()).sum();
            prop_assert!((s.mean * s.count as f64 - total as f64).abs() < 1e-9);
            if s.count > 0 {
                prop_assert!(s.mean <= s.longest as f64);
                prop_assert!(s.median <= s.longest as f64);
            }
        }

        #[test]
        fn gender_dims_sum_to_one(name in "[A-Za-z. ]{0,20}", p in 0.0f64..=1.0) {
            let mut table = GenderTable::new();
            table.insert("anna", p).unwrap();
            let (m, f) = gender_probability(Some(&name), &table);
            prop_assert_eq!(m + f, 1.0);
            let (m, f) = gender_probability(Some("Anna X"), &table);
            prop_assert_eq!(m + f, 1.0);
        }

        #[test]
        fn scale_then_invert(rows in proptest::collection::vec(proptest::collection::vec(-1e3f64..1e3, 4), 2..20)) {
            let s = FeatureScaler::fit(&rows).unwrap();
            for row in &rows {
                let back = s.invert(&s.apply(row).unwrap()).unwrap();
                for (a, b) in back.iter().zip(row) {
                    prop_assert!((a - b).abs() < 1e-9);
                }
            }
        }
    }
}
