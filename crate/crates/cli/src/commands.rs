use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use genrefuse::author_kg::{EmbeddingTable, EntityMap};
use genrefuse::baseline::BaselineSystem;
use genrefuse::corpus::{
    label_stats, load_taxonomy, parse_records, synth_corpus, validate_labels, BookRecord,
    DatasetSplit, LabelStats, LabelTaxonomy, SplitPart, SynthSpec,
};
use genrefuse::eval::{evaluate_model, EvalReport, RecordFilter, ThresholdVector};
use genrefuse::fusion::{load_model, save_model, MlpModel};
use genrefuse::metadata::{FeatureScaler, GenderTable};
use genrefuse::pipeline::{
    fit_scaler, train_fusion, FeaturePipeline, FeatureSwitches, FusionSystem, Resources,
};
use genrefuse::text::{EncoderConfig, EncoderKind, PrecomputedEncoder, TextEncoder};

use crate::config::{Paths, RunConfig};

pub const THRESHOLD_FORMAT_VERSION: u32 = 1;

/// Records, labels and lookup tables for one run.
pub struct Corpus {
    pub split: DatasetSplit,
    /// The taxonomy cut to the configured task level.
    pub taxonomy: LabelTaxonomy,
    pub label_order: Vec<String>,
    pub resources: Arc<Resources>,
}

fn load_optional<T: Default>(
    path: Option<&Path>,
    load: impl FnOnce(&Path) -> genrefuse::Result<T>,
) -> Result<T> {
    match path {
        Some(p) => Ok(load(p)?),
        None => Ok(T::default()),
    }
}

pub fn load_corpus(config: &RunConfig) -> Result<Corpus> {
    let paths = &config.paths;
    let full = load_taxonomy(&paths.taxonomy)?;
    let read = |p: &Path| -> Result<Vec<BookRecord>> {
        let records = parse_records(p)?;
        validate_labels(&records, &full)?;
        Ok(records)
    };
    let test = match &paths.test {
        Some(p) => read(p)?,
        None => Vec::new(),
    };
    let split = DatasetSplit::new(read(&paths.train)?, read(&paths.validation)?, test)?;
    let taxonomy = full.restrict_to_level(config.task_level);
    let label_order = taxonomy.flat_order();
    let resources = Resources {
        gender: load_optional(paths.gender.as_deref(), GenderTable::load)?,
        entities: load_optional(paths.entities.as_deref(), EntityMap::load)?,
        embeddings: load_optional(paths.embeddings.as_deref(), EmbeddingTable::load)?,
    };
    Ok(Corpus {
        split,
        taxonomy,
        label_order,
        resources: Arc::new(resources),
    })
}

pub fn fit_encoder(
    encoder: &EncoderConfig,
    precomputed: Option<&Path>,
    train: &[BookRecord],
) -> Result<TextEncoder> {
    match encoder.kind {
        EncoderKind::Precomputed => {
            let path = precomputed
                .ok_or_else(|| anyhow!("the precomputed encoder needs paths.precomputed"))?;
            let vectors = PrecomputedEncoder::load(path)?;
            if vectors.dim != encoder.dim {
                bail!(
                    "{} holds {}-dimensional vectors, config says {}",
                    path.display(),
                    vectors.dim,
                    encoder.dim
                );
            }
            Ok(TextEncoder::from_precomputed(vectors))
        }
        _ => Ok(TextEncoder::fit(encoder, train)?),
    }
}

/// Builds the pipeline for `switches`; the scaler is fitted on train.
pub fn build_pipeline(
    config: &RunConfig,
    corpus: &Corpus,
    switches: FeatureSwitches,
    encoder: Option<TextEncoder>,
) -> Result<FeaturePipeline> {
    let scaler = if config.scale_metadata && switches.metadata {
        Some(fit_scaler(&corpus.split.train, &corpus.resources.gender, config.reference_date)?)
    } else {
        None
    };
    Ok(FeaturePipeline::new(
        switches,
        encoder,
        scaler,
        corpus.resources.clone(),
        config.reference_date,
    )?)
}

/// Fits the pipeline and trains, tunes and picks the fallback for one
/// feature combination.
pub fn train_system(
    config: &RunConfig,
    corpus: &Corpus,
    switches: FeatureSwitches,
    encoder: Option<TextEncoder>,
) -> Result<(FeaturePipeline, FusionSystem)> {
    let pipeline = build_pipeline(config, corpus, switches, encoder)?;
    log::info!(
        "training {} model: {} inputs, {} labels",
        switches.describe(),
        pipeline.width(),
        corpus.label_order.len()
    );
    let system = train_fusion(
        &pipeline,
        &corpus.split.train,
        &corpus.split.validation,
        &corpus.label_order,
        &config.hyperparams(),
    )?;
    Ok((pipeline, system))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArtifactPaths {
    pub model: PathBuf,
    pub scaler: PathBuf,
    pub encoder: PathBuf,
    pub thresholds: PathBuf,
}

impl ArtifactPaths {
    pub fn in_dir(dir: &Path) -> Self {
        ArtifactPaths {
            model: dir.join("model.json"),
            scaler: dir.join("scaler.json"),
            encoder: dir.join("encoder.json"),
            thresholds: dir.join("thresholds.json"),
        }
    }
}

/// Tuned thresholds plus what prediction needs besides the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdFile {
    pub format_version: u32,
    pub task_level: u8,
    pub reference_date: NaiveDate,
    pub label_order: Vec<String>,
    pub thresholds: Vec<f64>,
    pub fallback_label: String,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string(value)?;
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub artifacts: ArtifactPaths,
    pub epoch_losses: Vec<f64>,
    pub thresholds: ThresholdVector,
    pub fallback_label: String,
    pub validation: EvalReport,
}

/// Fits encoder and scaler on train, trains the MLP, tunes thresholds on
/// validation and writes the four artifact files.
pub fn cmd_train(config: &RunConfig) -> Result<TrainSummary> {
    config.validate()?;
    let corpus = load_corpus(config)?;
    let encoder = if config.features.text {
        Some(fit_encoder(&config.encoder, config.paths.precomputed.as_deref(), &corpus.split.train)?)
    } else {
        None
    };
    let (pipeline, system) = train_system(config, &corpus, config.features, encoder)?;
    let validation = evaluate_model(
        &system.model,
        &system.thresholds,
        &system.fallback_label,
        &corpus.split.validation,
        &pipeline,
        RecordFilter::All,
    )?;

    let dir = &config.paths.artifacts;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let artifacts = ArtifactPaths::in_dir(dir);
    save_model(&system.model, &artifacts.model)?;
    write_json(&artifacts.scaler, &pipeline.scaler())?;
    match pipeline.encoder() {
        Some(enc) => enc.save(&artifacts.encoder)?,
        None => write_json(&artifacts.encoder, &None::<()>)?,
    }
    write_json(
        &artifacts.thresholds,
        &ThresholdFile {
            format_version: THRESHOLD_FORMAT_VERSION,
            task_level: config.task_level,
            reference_date: config.reference_date,
            label_order: system.model.label_order.clone(),
            thresholds: system.thresholds.0.clone(),
            fallback_label: system.fallback_label.clone(),
        },
    )?;
    Ok(TrainSummary {
        artifacts,
        epoch_losses: system.report.epoch_losses,
        thresholds: system.thresholds,
        fallback_label: system.fallback_label,
        validation,
    })
}

/// A trained system read back from its artifact files.
pub struct LoadedSystem {
    pub model: MlpModel,
    pub thresholds: ThresholdVector,
    pub fallback_label: String,
    pub pipeline: FeaturePipeline,
}

fn switches_of(model: &MlpModel) -> FeatureSwitches {
    let has = |name: &str| model.input_blocks.iter().any(|(b, _)| b == name);
    FeatureSwitches::new(
        has(genrefuse::pipeline::TEXT_BLOCK),
        has(genrefuse::pipeline::METADATA_BLOCK),
        has(genrefuse::pipeline::AUTHOR_BLOCK),
    )
}

/// Loads the artifacts and checks them against the configured taxonomy.
pub fn load_system(config: &RunConfig, corpus_labels: &[String], resources: Arc<Resources>) -> Result<LoadedSystem> {
    let artifacts = ArtifactPaths::in_dir(&config.paths.artifacts);
    let model = load_model(&artifacts.model)?;
    let file: ThresholdFile = read_json(&artifacts.thresholds)?;
    if file.format_version != THRESHOLD_FORMAT_VERSION {
        bail!("unsupported threshold file version {}", file.format_version);
    }
    if file.label_order != model.label_order || file.thresholds.len() != model.n_labels() {
        bail!("threshold file does not match the model's labels");
    }
    model.check_label_order(corpus_labels)?;
    let scaler: Option<FeatureScaler> = read_json(&artifacts.scaler)?;
    let encoder_text = std::fs::read_to_string(&artifacts.encoder)
        .with_context(|| format!("reading {}", artifacts.encoder.display()))?;
    let encoder = if encoder_text.trim() == "null" {
        None
    } else {
        Some(TextEncoder::from_json(&encoder_text)?)
    };
    let pipeline = FeaturePipeline::new(
        switches_of(&model),
        encoder,
        scaler,
        resources,
        file.reference_date,
    )?;
    pipeline.check_model(&model)?;
    Ok(LoadedSystem {
        model,
        thresholds: ThresholdVector(file.thresholds),
        fallback_label: file.fallback_label,
        pipeline,
    })
}

pub fn cmd_evaluate(config: &RunConfig, split: SplitPart, author_covered_only: bool) -> Result<EvalReport> {
    let corpus = load_corpus(config)?;
    if split == SplitPart::Test && config.paths.test.is_none() {
        bail!("no test split configured (paths.test)");
    }
    let system = load_system(config, &corpus.label_order, corpus.resources.clone())?;
    let filter = if author_covered_only {
        RecordFilter::AuthorCovered
    } else {
        RecordFilter::All
    };
    Ok(evaluate_model(
        &system.model,
        &system.thresholds,
        &system.fallback_label,
        corpus.split.part(split),
        &system.pipeline,
        filter,
    )?)
}

/// `(record id, predicted labels)` for every record in `input`.
pub fn cmd_predict(config: &RunConfig, input: &Path) -> Result<Vec<(String, BTreeSet<String>)>> {
    let full = load_taxonomy(&config.paths.taxonomy)?;
    let label_order = full.restrict_to_level(config.task_level).flat_order();
    let resources = Resources {
        gender: load_optional(config.paths.gender.as_deref(), GenderTable::load)?,
        entities: load_optional(config.paths.entities.as_deref(), EntityMap::load)?,
        embeddings: load_optional(config.paths.embeddings.as_deref(), EmbeddingTable::load)?,
    };
    let system = load_system(config, &label_order, Arc::new(resources))?;
    let records = parse_records(input)?;
    records
        .iter()
        .map(|r| {
            let x = system.pipeline.input(r)?;
            let labels = system
                .model
                .predict(&x, system.thresholds.as_slice(), &system.fallback_label)?;
            Ok((r.id.clone(), labels))
        })
        .collect()
}

/// One `id<TAB>label,label` line per record, labels sorted.
pub fn format_predictions(predictions: &[(String, BTreeSet<String>)]) -> String {
    let mut out = String::new();
    for (id, labels) in predictions {
        let joined: Vec<&str> = labels.iter().map(String::as_str).collect();
        writeln!(out, "{id}\t{}", joined.join(",")).expect("write to string");
    }
    out
}

pub fn cmd_stats(config: &RunConfig) -> Result<LabelStats> {
    let corpus = load_corpus(config)?;
    let r = &corpus.resources;
    Ok(label_stats(&corpus.split, &corpus.taxonomy, &r.gender, &r.entities, &r.embeddings))
}

/// Settings written into the config of a synthetic corpus; they differ
/// from the library defaults where those do not converge on it.
pub fn synth_run_config(dir: &Path, spec: &SynthSpec, seed: u64) -> RunConfig {
    let mut config = RunConfig::new(spec.reference_date, Paths::in_dir(dir));
    config.seed = seed;
    config.hyperparams.seed = seed;
    config.hyperparams.learning_rate = 1e-3;
    config.baseline.learning_rate = 4.0;
    config.baseline.epochs = 500;
    config
}

/// Writes a synthetic corpus and a `config.toml` for it into `out_dir`;
/// returns the config path.
pub fn cmd_synth(spec: &SynthSpec, seed: u64, out_dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let corpus = synth_corpus(spec, seed)?;
    corpus.write_dir(out_dir)?;
    let config = synth_run_config(Path::new(""), spec, seed);
    let path = out_dir.join("config.toml");
    std::fs::write(&path, config.to_toml()?).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowModel {
    Mlp(FeatureSwitches),
    /// Text-only MLP over the other text encoder.
    AlternateEncoder(EncoderKind),
    Baseline,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub model: RowModel,
    pub evaluated_on: RecordFilter,
    pub report: EvalReport,
}

impl CompareRow {
    pub fn name(&self) -> String {
        match self.model {
            RowModel::Mlp(s) => format!("mlp:{}", s.describe()),
            RowModel::AlternateEncoder(kind) => format!("mlp:text({})", kind_name(kind)),
            RowModel::Baseline => "baseline:tfidf-chain".to_string(),
        }
    }
}

fn kind_name(kind: EncoderKind) -> &'static str {
    match kind {
        EncoderKind::Tfidf => "tfidf",
        EncoderKind::Hashed => "hashed",
        EncoderKind::Precomputed => "precomputed",
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareTable {
    pub rows: Vec<CompareRow>,
}

impl CompareTable {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("row\tmodel\tevaluated_on\tn_records\tf1\tprecision\trecall\n");
        for (i, row) in self.rows.iter().enumerate() {
            let on = match row.evaluated_on {
                RecordFilter::All => "all",
                RecordFilter::AuthorCovered => "author-covered",
            };
            writeln!(
                out,
                "({})\t{}\t{on}\t{}\t{:.4}\t{:.4}\t{:.4}",
                i + 1,
                row.name(),
                row.report.n_records,
                row.report.micro_f1,
                row.report.micro_precision,
                row.report.micro_recall
            )
            .expect("write to string");
        }
        out
    }

    pub fn f1(&self, model: RowModel) -> Option<f64> {
        self.rows.iter().find(|r| r.model == model).map(|r| r.report.micro_f1)
    }
}

/// The seven comparison rows: text with every subset of the other two
/// blocks (largest first), text through the alternate encoder, the author
/// block alone, and the baseline.
pub fn ablation_rows(encoder: EncoderKind) -> Vec<(RowModel, RecordFilter)> {
    let mut extras: Vec<(bool, bool)> = [(true, true), (true, false), (false, true), (false, false)].to_vec();
    extras.sort_by_key(|&(m, a)| std::cmp::Reverse(m as u8 + a as u8));
    let mut rows: Vec<_> = extras
        .into_iter()
        .map(|(m, a)| (RowModel::Mlp(FeatureSwitches::new(true, m, a)), RecordFilter::All))
        .collect();
    rows.push((RowModel::AlternateEncoder(alternate_kind(encoder)), RecordFilter::All));
    rows.push((
        RowModel::Mlp(FeatureSwitches::new(false, false, true)),
        RecordFilter::AuthorCovered,
    ));
    rows.push((RowModel::Baseline, RecordFilter::All));
    rows
}

fn alternate_kind(kind: EncoderKind) -> EncoderKind {
    match kind {
        EncoderKind::Tfidf => EncoderKind::Hashed,
        EncoderKind::Hashed | EncoderKind::Precomputed => EncoderKind::Tfidf,
    }
}

/// Trains and scores every ablation row on the validation split.
pub fn cmd_compare(config: &RunConfig) -> Result<CompareTable> {
    let mut config = config.clone();
    config.features = FeatureSwitches::ALL;
    config.validate()?;
    let corpus = load_corpus(&config)?;
    let train = &corpus.split.train;
    let validation = &corpus.split.validation;
    let encoder = fit_encoder(&config.encoder, config.paths.precomputed.as_deref(), train)?;
    let mut rows = Vec::new();
    for (model, filter) in ablation_rows(config.encoder.kind) {
        let report = match model {
            RowModel::Mlp(switches) => {
                let (pipeline, sys) = train_system(&config, &corpus, switches, Some(encoder.clone()))?;
                evaluate_model(&sys.model, &sys.thresholds, &sys.fallback_label, validation, &pipeline, filter)?
            }
            RowModel::AlternateEncoder(kind) => {
                let alt = EncoderConfig {
                    kind,
                    ..config.encoder.clone()
                };
                let alt_encoder = fit_encoder(&alt, config.paths.precomputed.as_deref(), train)?;
                let (pipeline, sys) =
                    train_system(&config, &corpus, FeatureSwitches::new(true, false, false), Some(alt_encoder))?;
                evaluate_model(&sys.model, &sys.thresholds, &sys.fallback_label, validation, &pipeline, filter)?
            }
            RowModel::Baseline => {
                log::info!("training baseline chain over {} labels", corpus.label_order.len());
                BaselineSystem::fit(train, &corpus.label_order, &config.encoder, &config.baseline)?
                    .evaluate(validation)?
            }
        };
        log::info!("{:?}: F1 {:.4}", model, report.micro_f1);
        rows.push(CompareRow {
            model,
            evaluated_on: filter,
            report,
        });
    }
    Ok(CompareTable { rows })
}
