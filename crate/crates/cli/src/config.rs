//! The run configuration: one TOML file, with relative paths resolved
//! against the file's directory.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use genrefuse::baseline::LrConfig;
use genrefuse::fusion::Hyperparams;
use genrefuse::pipeline::FeatureSwitches;
use genrefuse::text::EncoderConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub train: PathBuf,
    pub validation: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<PathBuf>,
    pub taxonomy: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entities: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gender: Option<PathBuf>,
    /// Vectors for the precomputed text encoder.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precomputed: Option<PathBuf>,
    /// Directory for the trained artifacts.
    pub artifacts: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// 1 for the top-level labels only, 3 for the flattened hierarchy.
    #[serde(default = "default_task_level")]
    pub task_level: u8,
    /// Seeds the MLP; overrides any seed under `[hyperparams]`.
    #[serde(default)]
    pub seed: u64,
    /// Date against which publication age is measured.
    pub reference_date: NaiveDate,
    /// Standardize the metadata block with statistics from the train split.
    #[serde(default = "default_true")]
    pub scale_metadata: bool,
    pub paths: Paths,
    #[serde(default)]
    pub features: FeatureSwitches,
    #[serde(default)]
    pub encoder: EncoderConfig,
    #[serde(default)]
    pub hyperparams: Hyperparams,
    #[serde(default)]
    pub baseline: LrConfig,
}

fn default_task_level() -> u8 {
    1
}

fn default_true() -> bool {
    true
}

impl RunConfig {
    pub fn new(reference_date: NaiveDate, paths: Paths) -> Self {
        RunConfig {
            task_level: 1,
            seed: 0,
            reference_date,
            scale_metadata: true,
            paths,
            features: FeatureSwitches::ALL,
            encoder: EncoderConfig::default(),
            hyperparams: Hyperparams::default(),
            baseline: LrConfig::default(),
        }
    }

    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut config: RunConfig = toml::from_str(text)?;
        config.paths.resolve(base_dir);
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        RunConfig::from_toml(&text, base).with_context(|| format!("in config {}", path.display()))
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if !matches!(self.task_level, 1 | 3) {
            bail!("task_level must be 1 or 3, got {}", self.task_level);
        }
        self.features.validate()?;
        self.hyperparams().validate()?;
        if self.features.author
            && (self.paths.entities.is_none() || self.paths.embeddings.is_none())
        {
            bail!("author features need both paths.entities and paths.embeddings");
        }
        Ok(())
    }

    /// Hyperparameters with the run seed applied.
    pub fn hyperparams(&self) -> Hyperparams {
        Hyperparams {
            seed: self.seed,
            ..self.hyperparams.clone()
        }
    }
}

impl Paths {
    /// Paths under `dir` with the file names `synth` writes.
    pub fn in_dir(dir: &Path) -> Self {
        Paths {
            train: dir.join("train.jsonl"),
            validation: dir.join("validation.jsonl"),
            test: Some(dir.join("test.jsonl")),
            taxonomy: dir.join("taxonomy.tsv"),
            entities: Some(dir.join("entities.tsv")),
            embeddings: Some(dir.join("embeddings.tsv")),
            gender: Some(dir.join("gender.csv")),
            precomputed: None,
            artifacts: dir.join("artifacts"),
        }
    }

    fn resolve(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        join(&mut self.train);
        join(&mut self.validation);
        join(&mut self.taxonomy);
        join(&mut self.artifacts);
        for p in [
            &mut self.test,
            &mut self.entities,
            &mut self.embeddings,
            &mut self.gender,
            &mut self.precomputed,
        ]
        .into_iter()
        .flatten()
        {
            join(p);
        }
    }
}
