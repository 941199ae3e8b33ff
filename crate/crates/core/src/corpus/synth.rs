//! Seeded synthetic corpora with controllable signal channels.
//!
//! Each record has a primary top-level label and carries that label's
//! signal through at most one channel, drawn per record with the configured
//! probabilities:
//!
//! * **text**: label- and leaf-specific vocabulary tokens in the blurb;
//! * **metadata**: a per-label signature of title length, publication age
//!   and academic title;
//! * **author**: the first author comes from the label's author pool, whose
//!   graph embeddings cluster around a label centroid and whose given names
//!   follow a label-specific gender prior.
//!
//! Records with no signal channel are pure noise. Everything is a function
//! of `(SynthSpec, seed)`.

use std::collections::{BTreeSet, HashSet};
use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDate};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::author_kg::{EmbeddingTable, EntityMap, EMBEDDING_DIM};
use crate::corpus::{write_records, BookRecord, DatasetSplit, LabelTaxonomy, TaxonomyNode};
use crate::error::{self, Error, Result};
use crate::metadata::GenderTable;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    /// Number of top-level labels.
    pub labels: usize,
    pub level2_per_label: usize,
    pub level3_per_level2: usize,
    pub train_per_label: usize,
    pub validation_per_label: usize,
    pub test_per_label: usize,
    pub text_signal: f64,
    pub metadata_signal: f64,
    pub author_signal: f64,
    /// Size of the label-independent vocabulary.
    pub vocab_size: usize,
    /// Vocabulary tokens owned by each label and by each leaf.
    pub label_vocab: usize,
    /// Signal tokens planted in a text-informative blurb.
    pub signal_tokens: usize,
    pub min_blurb_words: usize,
    pub max_blurb_words: usize,
    pub author_pool_size: usize,
    /// Fraction of authors present in the entity map.
    pub author_coverage: f64,
    /// Fraction of given names present in the gender table.
    pub gender_coverage: f64,
    /// Probability that a record also carries a second top-level label.
    pub multi_label_rate: f64,
    pub reference_date: NaiveDate,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            labels: 8,
            level2_per_label: 2,
            level3_per_level2: 2,
            train_per_label: 250,
            validation_per_label: 60,
            test_per_label: 60,
            text_signal: 0.5,
            metadata_signal: 0.25,
            author_signal: 0.25,
            vocab_size: 1500,
            label_vocab: 12,
            signal_tokens: 4,
            min_blurb_words: 30,
            max_blurb_words: 80,
            author_pool_size: 400,
            author_coverage: 0.72,
            gender_coverage: 0.87,
            multi_label_rate: 0.1,
            reference_date: NaiveDate::from_ymd_opt(2019, 6, 1).expect("valid date"),
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let invalid = |msg: String| Err(Error::InvalidInput(msg));
        let fractions = [
            ("text_signal", self.text_signal),
            ("metadata_signal", self.metadata_signal),
            ("author_signal", self.author_signal),
            ("author_coverage", self.author_coverage),
            ("gender_coverage", self.gender_coverage),
            ("multi_label_rate", self.multi_label_rate),
        ];
        for (name, value) in fractions {
            if !(0.0..=1.0).contains(&value) {
                return invalid(format!("{name} = {value} must lie in [0, 1]"));
            }
        }
        let signal = self.text_signal + self.metadata_signal + self.author_signal;
        if signal > 1.0 + 1e-9 {
            return invalid(format!("signal fractions sum to {signal}, must be at most 1"));
        }
        if self.labels == 0 {
            return invalid("labels must be at least 1".into());
        }
        if self.level2_per_label == 0 && self.level3_per_level2 > 0 {
            return invalid("level3_per_level2 requires level2_per_label > 0".into());
        }
        if self.vocab_size == 0 || self.min_blurb_words == 0 || self.min_blurb_words > self.max_blurb_words {
            return invalid("vocabulary and blurb length bounds must be positive and ordered".into());
        }
        if self.author_pool_size < 2 * self.labels {
            return invalid(format!(
                "author_pool_size must be at least {} (two per label)",
                2 * self.labels
            ));
        }
        if self.multi_label_rate > 0.0 && self.labels < 2 {
            return invalid("multi-label records need at least two labels".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub split: DatasetSplit,
    pub taxonomy: LabelTaxonomy,
    pub entities: EntityMap,
    pub embeddings: EmbeddingTable,
    pub gender: GenderTable,
}

/// File names written by [`SynthCorpus::write_dir`].
#[derive(Debug, Clone, PartialEq)]
pub struct SynthFiles {
    pub train: PathBuf,
    pub validation: PathBuf,
    pub test: PathBuf,
    pub taxonomy: PathBuf,
    pub entities: PathBuf,
    pub embeddings: PathBuf,
    pub gender: PathBuf,
}

impl SynthFiles {
    pub fn in_dir(dir: &Path) -> Self {
        SynthFiles {
            train: dir.join("train.jsonl"),
            validation: dir.join("validation.jsonl"),
            test: dir.join("test.jsonl"),
            taxonomy: dir.join("taxonomy.tsv"),
            entities: dir.join("entities.tsv"),
            embeddings: dir.join("embeddings.tsv"),
            gender: dir.join("gender.csv"),
        }
    }
}

impl SynthCorpus {
    pub fn write_dir(&self, dir: &Path) -> Result<SynthFiles> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let files = SynthFiles::in_dir(dir);
        write_records(&files.train, &self.split.train)?;
        write_records(&files.validation, &self.split.validation)?;
        write_records(&files.test, &self.split.test)?;
        error::write_string(&files.taxonomy, &self.taxonomy.to_tsv())?;
        error::write_string(&files.entities, &self.entities.to_tsv())?;
        error::write_string(&files.embeddings, &self.embeddings.to_tsv())?;
        error::write_string(&files.gender, &self.gender.to_csv())?;
        Ok(files)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Channel {
    Text,
    Metadata,
    Author,
    None,
}

struct Author {
    name: String,
}

struct Leaf {
    top: usize,
    path: Vec<String>,
    vocab: Vec<String>,
}

struct World {
    spec: SynthSpec,
    generic_vocab: Vec<String>,
    label_vocab: Vec<Vec<String>>,
    leaves: Vec<Leaf>,
    leaves_by_label: Vec<Vec<usize>>,
    label_pools: Vec<Vec<Author>>,
    generic_pool: Vec<Author>,
}

const SYLLABLES: [&str; 24] = [
    "ka", "ro", "mi", "ten", "sa", "lu", "ber", "no", "vi", "ga", "dor", "el", "fi", "stu", "ran",
    "he", "zo", "pel", "wa", "ti", "mun", "se", "ko", "ar",
];

fn pseudo_word(rng: &mut ChaCha8Rng, min_syl: usize, max_syl: usize) -> String {
    let n = rng.random_range(min_syl..=max_syl);
    (0..n).map(|_| *SYLLABLES.choose(rng).expect("nonempty")).collect()
}

fn unique_words(
    rng: &mut ChaCha8Rng,
    count: usize,
    seen: &mut HashSet<String>,
    prefix: &str,
) -> Vec<String> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let mut w = format!("{prefix}{}", pseudo_word(rng, 1, 4));
        if seen.contains(&w) {
            // Pseudo-words collide often for small syllable counts; a numeric
            // suffix keeps the loop bounded.
            w.push_str(&seen.len().to_string());
        }
        if seen.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// Age in years (from the reference date) planted by a metadata-informative
/// record of label `k`.
fn signature_age_band(k: usize) -> (f64, f64) {
    let lo = 2.5 * k as f64;
    (lo + 0.2, lo + 1.2)
}

fn signature_title_len(k: usize) -> usize {
    2 + k % 8
}

fn build_taxonomy(spec: &SynthSpec) -> Result<LabelTaxonomy> {
    let mut level1 = Vec::new();
    let mut level2 = Vec::new();
    let mut level3 = Vec::new();
    for k in 0..spec.labels {
        let top = format!("L{k}");
        level1.push(TaxonomyNode {
            label_id: top.clone(),
            name: format!("Genre {k}"),
            level: 1,
            parent: None,
        });
        for j in 0..spec.level2_per_label {
            let mid = format!("L{k}.{j}");
            level2.push(TaxonomyNode {
                label_id: mid.clone(),
                name: format!("Genre {k} topic {j}"),
                level: 2,
                parent: Some(top.clone()),
            });
            for m in 0..spec.level3_per_level2 {
                level3.push(TaxonomyNode {
                    label_id: format!("L{k}.{j}.{m}"),
                    name: format!("Genre {k} topic {j} niche {m}"),
                    level: 3,
                    parent: Some(mid.clone()),
                });
            }
        }
    }
    level1.extend(level2);
    level1.extend(level3);
    LabelTaxonomy::new(level1)
}

pub fn synth_corpus(spec: &SynthSpec, seed: u64) -> Result<SynthCorpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let taxonomy = build_taxonomy(spec)?;

    let mut seen = HashSet::new();
    let generic_vocab = unique_words(&mut rng, spec.vocab_size, &mut seen, "");
    let label_vocab: Vec<Vec<String>> = (0..spec.labels)
        .map(|_| unique_words(&mut rng, spec.label_vocab, &mut seen, ""))
        .collect();

    let mut leaves = Vec::new();
    let mut leaves_by_label = vec![Vec::new(); spec.labels];
    for (k, by_label) in leaves_by_label.iter_mut().enumerate() {
        let top = format!("L{k}");
        let mut paths = Vec::new();
        if spec.level2_per_label == 0 {
            paths.push(vec![top.clone()]);
        }
        for j in 0..spec.level2_per_label {
            let mid = format!("L{k}.{j}");
            if spec.level3_per_level2 == 0 {
                paths.push(vec![top.clone(), mid.clone()]);
            }
            for m in 0..spec.level3_per_level2 {
                paths.push(vec![top.clone(), mid.clone(), format!("L{k}.{j}.{m}")]);
            }
        }
        for path in paths {
            let vocab = if path.len() > 1 {
                unique_words(&mut rng, spec.label_vocab, &mut seen, "")
            } else {
                Vec::new()
            };
            by_label.push(leaves.len());
            leaves.push(Leaf { top: k, path, vocab });
        }
    }

    // Given names: the first half lean male, the second half lean female.
    let mut name_seen = HashSet::new();
    let given_names: Vec<String> = unique_words(&mut rng, 120, &mut name_seen, "")
        .into_iter()
        .map(|w| capitalize(&w))
        .collect();
    let (male_names, female_names) = given_names.split_at(given_names.len() / 2);
    let surnames: Vec<String> = unique_words(&mut rng, spec.author_pool_size, &mut name_seen, "")
        .into_iter()
        .map(|w| capitalize(&w))
        .collect();
    let mut gender = GenderTable::new();
    for (i, name) in given_names.iter().enumerate() {
        let p_male = if i < male_names.len() {
            rng.random_range(0.85..=1.0)
        } else {
            rng.random_range(0.0..=0.15)
        };
        if rng.random_bool(spec.gender_coverage) {
            gender.insert(name, p_male)?;
        }
    }

    let per_label_pool = spec.author_pool_size / (2 * spec.labels);
    let generic_size = spec.author_pool_size - per_label_pool * spec.labels;
    let mut surname_iter = surnames.into_iter();
    let mut make_author = |rng: &mut ChaCha8Rng, p_male: f64| {
        let names = if rng.random_bool(p_male) {
            male_names
        } else {
            female_names
        };
        let given = names.choose(rng).expect("nonempty").clone();
        Author {
            name: format!("{given} {}", surname_iter.next().expect("pool sized to surnames")),
        }
    };
    let label_pools: Vec<Vec<Author>> = (0..spec.labels)
        .map(|k| {
            let p_male = (k as f64 + 0.5) / spec.labels as f64;
            (0..per_label_pool).map(|_| make_author(&mut rng, p_male)).collect()
        })
        .collect();
    let generic_pool: Vec<Author> = (0..generic_size).map(|_| make_author(&mut rng, 0.5)).collect();

    // Graph embeddings: label-pool authors cluster around a label centroid.
    let unit = Normal::new(0.0, 1.0).expect("valid normal");
    let scale = 1.0 / (EMBEDDING_DIM as f64).sqrt();
    let centroids: Vec<Vec<f64>> = (0..spec.labels)
        .map(|_| (0..EMBEDDING_DIM).map(|_| 2.0 * scale * unit.sample(&mut rng)).collect())
        .collect();
    let mut entities = EntityMap::new();
    let mut embeddings = EmbeddingTable::default();
    let mut next_entity = 1000usize;
    let pooled = label_pools
        .iter()
        .enumerate()
        .flat_map(|(k, pool)| pool.iter().map(move |a| (Some(k), a)))
        .chain(generic_pool.iter().map(|a| (None, a)));
    for (label, author) in pooled {
        let vector: Vec<f64> = (0..EMBEDDING_DIM)
            .map(|d| {
                let noise = scale * unit.sample(&mut rng);
                match label {
                    Some(k) => centroids[k][d] + noise,
                    None => 2.0 * noise,
                }
            })
            .collect();
        if rng.random_bool(spec.author_coverage) {
            let id = format!("Q{next_entity}");
            next_entity += 1;
            entities.insert(&author.name, &id)?;
            embeddings.insert(&id, vector)?;
        }
    }

    let world = World {
        spec: spec.clone(),
        generic_vocab,
        label_vocab,
        leaves,
        leaves_by_label,
        label_pools,
        generic_pool,
    };

    let make_part = |prefix: &str, per_label: usize, rng: &mut ChaCha8Rng| {
        let mut records = Vec::with_capacity(per_label * spec.labels);
        for k in 0..spec.labels {
            for _ in 0..per_label {
                records.push(world.record(k, rng));
            }
        }
        records.shuffle(rng);
        for (i, r) in records.iter_mut().enumerate() {
            r.id = format!("{prefix}{i:06}");
        }
        records
    };
    let train = make_part("tr", spec.train_per_label, &mut rng);
    let validation = make_part("va", spec.validation_per_label, &mut rng);
    let test = make_part("te", spec.test_per_label, &mut rng);

    Ok(SynthCorpus {
        split: DatasetSplit::new(train, validation, test)?,
        taxonomy,
        entities,
        embeddings,
        gender,
    })
}

impl World {
    fn channel(&self, rng: &mut ChaCha8Rng) -> Channel {
        let u: f64 = rng.random();
        let s = &self.spec;
        if u < s.text_signal {
            Channel::Text
        } else if u < s.text_signal + s.metadata_signal {
            Channel::Metadata
        } else if u < s.text_signal + s.metadata_signal + s.author_signal {
            Channel::Author
        } else {
            Channel::None
        }
    }

    fn generic_words(&self, n: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
        (0..n)
            .map(|_| self.generic_vocab.choose(rng).expect("nonempty").clone())
            .collect()
    }

    fn plant(&self, words: &mut [String], leaf: &Leaf, n: usize, rng: &mut ChaCha8Rng) {
        for i in 0..n {
            let pos = rng.random_range(0..words.len());
            // Alternate between label-wide and leaf-specific tokens.
            let source = if i % 2 == 0 || leaf.vocab.is_empty() {
                &self.label_vocab[leaf.top]
            } else {
                &leaf.vocab
            };
            words[pos] = source.choose(rng).expect("nonempty").clone();
        }
    }

    fn record(&self, k: usize, rng: &mut ChaCha8Rng) -> BookRecord {
        let s = &self.spec;
        let channel = self.channel(rng);
        let leaf = &self.leaves[*self.leaves_by_label[k].choose(rng).expect("nonempty")];
        let second = (rng.random_bool(s.multi_label_rate)).then(|| {
            let mut k2 = rng.random_range(0..s.labels - 1);
            if k2 >= k {
                k2 += 1;
            }
            &self.leaves[*self.leaves_by_label[k2].choose(rng).expect("nonempty")]
        });

        let mut labels: BTreeSet<String> = leaf.path.iter().cloned().collect();
        if let Some(l2) = second {
            labels.extend(l2.path.iter().cloned());
        }

        let n_blurb = rng.random_range(s.min_blurb_words..=s.max_blurb_words);
        let mut blurb = self.generic_words(n_blurb, rng);
        if channel == Channel::Text {
            self.plant(&mut blurb, leaf, s.signal_tokens, rng);
            if let Some(l2) = second {
                self.plant(&mut blurb, l2, s.signal_tokens.div_ceil(2), rng);
            }
        }

        let informative_meta = channel == Channel::Metadata;
        let title_len = if informative_meta {
            signature_title_len(k)
        } else {
            rng.random_range(2..=9)
        };
        let title: Vec<String> = self
            .generic_words(title_len, rng)
            .into_iter()
            .map(|w| capitalize(&w))
            .collect();
        let age = if informative_meta {
            let (lo, hi) = signature_age_band(k);
            rng.random_range(lo..hi)
        } else {
            rng.random_range(0.0..2.5 * s.labels.max(4) as f64)
        };
        let academic = if informative_meta {
            k % 2 == 1
        } else {
            rng.random_bool(0.15)
        };

        let first = if channel == Channel::Author {
            self.label_pools[k].choose(rng)
        } else {
            self.generic_pool.choose(rng)
        }
        .expect("nonempty pool");
        let mut authors = vec![if academic {
            format!("Dr. {}", first.name)
        } else {
            first.name.clone()
        }];
        if rng.random_bool(0.12) {
            authors.push(self.generic_pool.choose(rng).expect("nonempty").name.clone());
        }

        let pub_date = s.reference_date - Duration::days((age * 365.25).round() as i64);
        BookRecord {
            id: String::new(),
            title: title.join(" "),
            authors,
            blurb: blurb.join(" "),
            isbn: None,
            url: None,
            pub_date: Some(pub_date),
            labels,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthSpec {
        SynthSpec {
            labels: 3,
            train_per_label: 10,
            validation_per_label: 4,
            test_per_label: 2,
            vocab_size: 100,
            author_pool_size: 40,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn sizes_follow_spec() {
        let c = synth_corpus(&SynthSpec { train_per_label: 250, ..SynthSpec::default() }, 7).unwrap();
        assert_eq!(c.split.train.len(), 2000);
        assert_eq!(c.split.validation.len(), 480);
        assert_eq!(c.taxonomy.level_counts(), [8, 16, 32]);
    }

    #[test]
    fn deterministic_in_seed() {
        let a = synth_corpus(&small(), 7).unwrap();
        let b = synth_corpus(&small(), 7).unwrap();
        assert_eq!(a, b);
        let c = synth_corpus(&small(), 8).unwrap();
        assert_ne!(a.split.train, c.split.train);
    }

    #[test]
    fn invalid_fractions_rejected() {
        let spec = SynthSpec {
            text_signal: 0.6,
            metadata_signal: 0.3,
            author_signal: 0.2,
            ..small()
        };
        assert!(matches!(synth_corpus(&spec, 1), Err(Error::InvalidInput(_))));
        let spec = SynthSpec { text_signal: -0.1, ..small() };
        assert!(synth_corpus(&spec, 1).is_err());
    }

    #[test]
    fn labels_are_in_taxonomy_and_paths_complete() {
        let c = synth_corpus(&small(), 3).unwrap();
        crate::corpus::validate_labels(&c.split.train, &c.taxonomy).unwrap();
        for r in &c.split.train {
            let tops = r.labels.iter().filter(|l| !l.contains('.')).count();
            assert!(tops == 1 || tops == 2);
            assert_eq!(r.labels.len(), tops * 3);
        }
    }

    #[test]
    fn flat_taxonomy_when_no_sublevels() {
        let spec = SynthSpec {
            level2_per_label: 0,
            level3_per_level2: 0,
            ..small()
        };
        let c = synth_corpus(&spec, 3).unwrap();
        assert_eq!(c.taxonomy.len(), 3);
        assert!(c.split.train.iter().all(|r| r.labels.iter().all(|l| !l.contains('.'))));
    }
}
