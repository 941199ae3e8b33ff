#![allow(dead_code)]

use std::path::Path;

use genrefuse::corpus::SynthSpec;
use genrefuse::pipeline::FeatureSwitches;
use genrefuse_cli::commands::synth_run_config;
use genrefuse_cli::{cmd_synth, RunConfig};

/// Four labels, ten training records each, every short blurb carrying
/// eight of its label's tokens.
pub fn toy_spec() -> SynthSpec {
    SynthSpec {
        labels: 4,
        train_per_label: 10,
        validation_per_label: 5,
        test_per_label: 5,
        text_signal: 1.0,
        metadata_signal: 0.0,
        author_signal: 0.0,
        vocab_size: 200,
        signal_tokens: 8,
        min_blurb_words: 10,
        max_blurb_words: 20,
        author_pool_size: 40,
        multi_label_rate: 0.0,
        ..SynthSpec::default()
    }
}

/// Writes `spec` into `dir` and returns its config with the training
/// budget of the memorization runs. Only text features are on: with forty
/// records the dense metadata and author blocks let the network memorize
/// records without learning anything that transfers to the validation
/// split, which then tunes useless thresholds.
pub fn toy_config(dir: &Path, spec: &SynthSpec, seed: u64) -> RunConfig {
    let path = cmd_synth(spec, seed, dir).unwrap();
    let mut config = RunConfig::load(&path).unwrap();
    config.features = FeatureSwitches::new(true, false, false);
    config.hyperparams.epochs = 50;
    config.hyperparams.learning_rate = 1e-3;
    config
}

/// The generated config for `spec`, with paths under `dir`, without
/// touching the disk.
pub fn config_for(dir: &Path, spec: &SynthSpec, seed: u64) -> RunConfig {
    synth_run_config(dir, spec, seed)
}
