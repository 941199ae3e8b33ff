//! Text encoders: fixed-width dense vectors from title and blurb.
//!
//! Three interchangeable encoders share one token stream (whitespace tokens,
//! lowercased, truncated to `max_tokens`):
//!
//! * TF-IDF over a vocabulary fitted on training records;
//! * feature hashing with FNV-1a 64 into `dim` buckets;
//! * precomputed vectors keyed by record id, for externally produced
//!   contextual embeddings.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::BookRecord;
use crate::error::{self, Error, Result};

pub const DEFAULT_MAX_TOKENS: usize = 300;
pub const DEFAULT_PRECOMPUTED_DIM: usize = 768;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    Tfidf,
    Hashed,
    Precomputed,
}

/// Which record fields feed the token stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextField {
    #[default]
    TitleAndBlurb,
    BlurbOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    pub max_tokens: usize,
    /// Output width for the hashed and precomputed encoders.
    pub dim: usize,
    /// Minimum document frequency for a TF-IDF vocabulary term.
    pub min_df: usize,
    /// Cap on the TF-IDF vocabulary size; `None` keeps every eligible term.
    pub max_features: Option<usize>,
    pub field: TextField,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            kind: EncoderKind::Tfidf,
            max_tokens: DEFAULT_MAX_TOKENS,
            dim: DEFAULT_PRECOMPUTED_DIM,
            min_df: 1,
            max_features: None,
            field: TextField::TitleAndBlurb,
        }
    }
}

fn push_tokens(out: &mut Vec<String>, text: &str, max_tokens: usize) {
    for tok in text.split_whitespace() {
        if out.len() >= max_tokens {
            return;
        }
        out.push(tok.to_lowercase());
    }
}

/// Title tokens then blurb tokens, lowercased, cut to the first
/// `max_tokens`.
pub fn concat_title_blurb(record: &BookRecord, max_tokens: usize) -> Vec<String> {
    tokens(record, TextField::TitleAndBlurb, max_tokens)
}

pub fn tokens(record: &BookRecord, field: TextField, max_tokens: usize) -> Vec<String> {
    let mut out = Vec::new();
    if field == TextField::TitleAndBlurb {
        push_tokens(&mut out, &record.title, max_tokens);
    }
    push_tokens(&mut out, &record.blurb, max_tokens);
    out
}

/// 64-bit FNV-1a over the UTF-8 bytes of `s`.
pub fn fnv1a64(s: &str) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    s.bytes()
        .fold(OFFSET, |h, b| (h ^ u64::from(b)).wrapping_mul(PRIME))
}

fn l2_normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfidfEncoder {
    pub max_tokens: usize,
    pub field: TextField,
    /// Vocabulary terms in lexicographic order; position is the output index.
    pub terms: Vec<String>,
    pub idf: Vec<f64>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl TfidfEncoder {
    /// Keeps terms with document frequency ≥ `min_df`, capped at
    /// `max_features` by highest document frequency (ties lexicographic),
    /// with smoothed idf `ln((1 + N) / (1 + df)) + 1`.
    pub fn fit(config: &EncoderConfig, records: &[BookRecord]) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::InvalidInput(
                "cannot fit a TF-IDF encoder on an empty corpus".into(),
            ));
        }
        let mut df: HashMap<String, usize> = HashMap::new();
        for record in records {
            let mut toks = tokens(record, config.field, config.max_tokens);
            toks.sort_unstable();
            toks.dedup();
            for t in toks {
                *df.entry(t).or_default() += 1;
            }
        }
        let mut kept: Vec<(String, usize)> =
            df.into_iter().filter(|(_, d)| *d >= config.min_df).collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        if let Some(cap) = config.max_features {
            kept.truncate(cap);
        }
        kept.sort_by(|a, b| a.0.cmp(&b.0));
        let n = records.len() as f64;
        let idf = kept
            .iter()
            .map(|(_, d)| ((1.0 + n) / (1.0 + *d as f64)).ln() + 1.0)
            .collect();
        let terms: Vec<String> = kept.into_iter().map(|(t, _)| t).collect();
        Ok(TfidfEncoder {
            max_tokens: config.max_tokens,
            field: config.field,
            index: build_index(&terms),
            terms,
            idf,
        })
    }

    pub fn dim(&self) -> usize {
        self.terms.len()
    }

    pub fn encode(&self, record: &BookRecord) -> Vec<f64> {
        let mut v = vec![0.0; self.dim()];
        for tok in tokens(record, self.field, self.max_tokens) {
            if let Some(&i) = self.index.get(&tok) {
                v[i] += 1.0;
            }
        }
        for (x, idf) in v.iter_mut().zip(&self.idf) {
            *x *= idf;
        }
        l2_normalize(&mut v);
        v
    }

    fn rebuild_index(&mut self) {
        self.index = build_index(&self.terms);
    }
}

fn build_index(terms: &[String]) -> HashMap<String, usize> {
    terms.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HashedEncoder {
    pub max_tokens: usize,
    pub field: TextField,
    pub dim: usize,
}

impl HashedEncoder {
    pub fn encode(&self, record: &BookRecord) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for tok in tokens(record, self.field, self.max_tokens) {
            v[(fnv1a64(&tok) % self.dim as u64) as usize] += 1.0;
        }
        l2_normalize(&mut v);
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecomputedEncoder {
    pub dim: usize,
    pub vectors: BTreeMap<String, Vec<f64>>,
}

impl PrecomputedEncoder {
    /// Parses a `#dim=<n>` header followed by `record_id<TAB>v1<TAB>…` rows.
    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let dim = match lines.next() {
            Some((_, h)) => h
                .trim()
                .strip_prefix("#dim=")
                .and_then(|d| d.parse::<usize>().ok())
                .filter(|&d| d > 0),
            None => None,
        }
        .ok_or_else(|| Error::parse(source_name, 1, "expected header `#dim=<n>`"))?;
        let mut vectors = BTreeMap::new();
        for (idx, line) in lines {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let mut cols = line.split('\t');
            let id = cols.next().unwrap_or_default().trim().to_string();
            let values = cols
                .map(|c| c.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::parse(source_name, idx + 1, e.to_string()))?;
            if values.len() != dim {
                return Err(Error::parse(
                    source_name,
                    idx + 1,
                    format!("record `{id}` has {} values, expected {dim}", values.len()),
                ));
            }
            if vectors.insert(id.clone(), values).is_some() {
                return Err(Error::parse(source_name, idx + 1, format!("duplicate record `{id}`")));
            }
        }
        Ok(PrecomputedEncoder { dim, vectors })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&error::read_to_string(path)?, &path.display().to_string())
    }

    pub fn encode(&self, record: &BookRecord) -> Result<Vec<f64>> {
        self.vectors
            .get(&record.id)
            .cloned()
            .ok_or_else(|| Error::MissingVector(record.id.clone()))
    }
}

/// A fitted text encoder of any kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TextEncoder {
    Tfidf(TfidfEncoder),
    Hashed(HashedEncoder),
    Precomputed(PrecomputedEncoder),
}

impl TextEncoder {
    /// Fits a TF-IDF encoder on `records`, or builds a fit-free hashed
    /// encoder. Precomputed encoders come from
    /// [`from_precomputed`](Self::from_precomputed).
    pub fn fit(config: &EncoderConfig, records: &[BookRecord]) -> Result<Self> {
        if config.max_tokens == 0 {
            return Err(Error::InvalidInput("max_tokens must be at least 1".into()));
        }
        match config.kind {
            EncoderKind::Tfidf => Ok(TextEncoder::Tfidf(TfidfEncoder::fit(config, records)?)),
            EncoderKind::Hashed => {
                if config.dim == 0 {
                    return Err(Error::InvalidInput("hashed encoder needs dim ≥ 1".into()));
                }
                Ok(TextEncoder::Hashed(HashedEncoder {
                    max_tokens: config.max_tokens,
                    field: config.field,
                    dim: config.dim,
                }))
            }
            EncoderKind::Precomputed => Err(Error::InvalidInput(
                "precomputed encoders are loaded from a vector file, not fitted".into(),
            )),
        }
    }

    pub fn from_precomputed(encoder: PrecomputedEncoder) -> Self {
        TextEncoder::Precomputed(encoder)
    }

    pub fn kind(&self) -> EncoderKind {
        match self {
            TextEncoder::Tfidf(_) => EncoderKind::Tfidf,
            TextEncoder::Hashed(_) => EncoderKind::Hashed,
            TextEncoder::Precomputed(_) => EncoderKind::Precomputed,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            TextEncoder::Tfidf(e) => e.dim(),
            TextEncoder::Hashed(e) => e.dim,
            TextEncoder::Precomputed(e) => e.dim,
        }
    }

    pub fn encode(&self, record: &BookRecord) -> Result<Vec<f64>> {
        match self {
            TextEncoder::Tfidf(e) => Ok(e.encode(record)),
            TextEncoder::Hashed(e) => Ok(e.encode(record)),
            TextEncoder::Precomputed(e) => e.encode(record),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut enc: TextEncoder = serde_json::from_str(text)?;
        if let TextEncoder::Tfidf(t) = &mut enc {
            if t.terms.len() != t.idf.len() {
                return Err(Error::Shape(format!(
                    "encoder has {} terms but {} idf values",
                    t.terms.len(),
                    t.idf.len()
                )));
            }
            t.rebuild_index();
        }
        Ok(enc)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        error::write_string(path, &self.to_json()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&error::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(id: &str, title: &str, blurb: &str) -> BookRecord {
        let mut r = BookRecord::new(id);
        r.title = title.into();
        r.blurb = blurb.into();
        r
    }

    fn cfg(kind: EncoderKind) -> EncoderConfig {
        EncoderConfig {
            kind,
            dim: 16,
            ..EncoderConfig::default()
        }
    }

    #[test]
    fn truncation_and_concat() {
        let blurb: Vec<String> = (0..301).map(|i| format!("w{i}")).collect();
        let r = rec("a", "", &blurb.join(" "));
        let toks = concat_title_blurb(&r, 300);
        assert_eq!(toks.len(), 300);
        assert_eq!(toks[299], "w299");

        let r = rec("b", "Das Grab ist", &vec!["x"; 95].join(" "));
        assert_eq!(concat_title_blurb(&r, 300).len(), 98);
        assert_eq!(concat_title_blurb(&r, 300)[0], "das");
        assert!(concat_title_blurb(&rec("c", "", ""), 300).is_empty());
        assert_eq!(tokens(&r, TextField::BlurbOnly, 300).len(), 95);
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64("a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64("foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn tfidf_single_doc() {
        let enc = TfidfEncoder::fit(&cfg(EncoderKind::Tfidf), &[rec("a", "", "abc")]).unwrap();
        assert_eq!(enc.idf, vec![1.0]);
        assert_eq!(enc.encode(&rec("a", "", "abc")), vec![1.0]);
        assert_eq!(enc.encode(&rec("z", "", "zzz")), vec![0.0]);
    }

    #[test]
    fn tfidf_vocabulary_cap() {
        let docs = [rec("1", "", "a b c"), rec("2", "", "a b"), rec("3", "", "a")];
        let config = EncoderConfig {
            max_features: Some(2),
            ..cfg(EncoderKind::Tfidf)
        };
        let enc = TfidfEncoder::fit(&config, &docs).unwrap();
        assert_eq!(enc.terms, vec!["a", "b"]);
        // df(a) = 3, df(b) = 2, N = 3.
        assert_eq!(enc.idf[0], 1.0);
        assert_eq!(enc.idf[1], (4.0f64 / 3.0).ln() + 1.0);

        let min_df = EncoderConfig {
            min_df: 2,
            ..cfg(EncoderKind::Tfidf)
        };
        assert_eq!(TfidfEncoder::fit(&min_df, &docs).unwrap().terms, vec!["a", "b"]);
        let ties = EncoderConfig {
            max_features: Some(1),
            ..cfg(EncoderKind::Tfidf)
        };
        let enc = TfidfEncoder::fit(&ties, &[rec("1", "", "zeta alpha")]).unwrap();
        assert_eq!(enc.terms, vec!["alpha"]);
    }

    #[test]
    fn tfidf_empty_corpus_rejected() {
        assert!(TextEncoder::fit(&cfg(EncoderKind::Tfidf), &[]).is_err());
        assert!(TextEncoder::fit(&cfg(EncoderKind::Hashed), &[]).is_ok());
    }

    #[test]
    fn hashed_is_fit_free_and_normalized() {
        let enc = TextEncoder::fit(&cfg(EncoderKind::Hashed), &[rec("x", "", "ignored")]).unwrap();
        let v = enc.encode(&rec("a", "Some Title", "some blurb text text")).unwrap();
        assert_eq!(v.len(), 16);
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
        let zero = enc.encode(&rec("b", "", "")).unwrap();
        assert!(zero.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn precomputed_lookup() {
        let enc = PrecomputedEncoder::parse("#dim=2\na\t0.5\t-1\nb\t1\t2\n", "p").unwrap();
        let enc = TextEncoder::from_precomputed(enc);
        assert_eq!(enc.dim(), 2);
        assert_eq!(enc.encode(&rec("a", "", "")).unwrap(), vec![0.5, -1.0]);
        let err = enc.encode(&rec("zz", "", "")).unwrap_err();
        assert!(err.to_string().contains("zz"));
        assert!(PrecomputedEncoder::parse("a\t1\n", "p").is_err());
        assert!(PrecomputedEncoder::parse("#dim=2\na\t1\n", "p").is_err());
    }

    #[test]
    fn encoder_json_round_trip() {
        let docs = [rec("1", "T", "a b c"), rec("2", "", "a b")];
        let enc = TextEncoder::fit(&cfg(EncoderKind::Tfidf), &docs).unwrap();
        let back = TextEncoder::from_json(&enc.to_json().unwrap()).unwrap();
        assert_eq!(back.encode(&docs[0]).unwrap(), enc.encode(&docs[0]).unwrap());
    }

    proptest! {
        #[test]
        fn hashed_bag_semantics(mut words in proptest::collection::vec("[a-z]{1,6}", 1..30), seed in any::<u64>()) {
            let enc = HashedEncoder { max_tokens: 300, field: TextField::BlurbOnly, dim: 32 };
            let a = enc.encode(&rec("a", "", &words.join(" ")));
            // Deterministic rotation stands in for an arbitrary permutation.
            let k = (seed % words.len() as u64) as usize;
            words.rotate_left(k);
            words.reverse();
            let b = enc.encode(&rec("a", "", &words.join(" ")));
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn encode_depends_only_on_prefix(words in proptest::collection::vec("[a-z]{1,4}", 0..40), extra in "[a-z ]{0,30}", max in 1usize..20) {
            let docs: Vec<BookRecord> = vec![rec("a", "", &words.join(" ")), rec("b", "", "x y z")];
            let config = EncoderConfig { max_tokens: max, ..cfg(EncoderKind::Tfidf) };
            let tfidf = TextEncoder::fit(&config, &docs).unwrap();
            let hashed = TextEncoder::fit(&EncoderConfig { max_tokens: max, ..cfg(EncoderKind::Hashed) }, &docs).unwrap();
            let truncated = concat_title_blurb(&docs[0], max).join(" ");
            let longer = if words.len() >= max { format!("{} {extra}", words.join(" ")) } else { words.join(" ") };
            for enc in [&tfidf, &hashed] {
                let a = enc.encode(&rec("a", "", &truncated)).unwrap();
                let b = enc.encode(&rec("a", "", &longer)).unwrap();
                prop_assert_eq!(&a, &b);
                let norm: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
                prop_assert!(norm == 0.0 || (norm - 1.0).abs() < 1e-12);
                prop_assert_eq!(a.len(), enc.dim());
            }
        }
    }
}
