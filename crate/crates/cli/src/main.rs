use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use genrefuse::corpus::{SplitPart, SynthSpec};
use genrefuse_cli::{
    cmd_compare, cmd_evaluate, cmd_predict, cmd_stats, cmd_synth, cmd_train, format_predictions,
    RunConfig,
};

#[derive(Parser)]
#[command(name = "genrefuse", version, about = "Multi-label book genre classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_parser = ["1", "3"])]
    task_level: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    no_text: bool,
    #[arg(long)]
    no_metadata: bool,
    #[arg(long)]
    no_author: bool,
}

impl RunArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut config = RunConfig::load(&self.config)?;
        if let Some(level) = &self.task_level {
            config.task_level = level.parse()?;
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        config.features.text &= !self.no_text;
        config.features.metadata &= !self.no_metadata;
        config.features.author &= !self.no_author;
        config.validate()?;
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic corpus and a config for it.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// TOML file overriding generator settings.
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// Label frequencies and coverage per split.
    Stats(RunArgs),
    /// Train the fusion model and write its artifacts.
    Train(RunArgs),
    /// Score saved artifacts on one split.
    Evaluate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value = "validation")]
        split: SplitPart,
        #[arg(long)]
        author_covered_only: bool,
    },
    /// Predict labels for the records in a JSONL file.
    Predict {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        input: PathBuf,
    },
    /// Train and score the seven ablation configurations.
    Compare(RunArgs),
}

fn load_spec(path: &Path) -> Result<SynthSpec> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(toml::from_str(&text)?)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { out, seed, spec } => {
            let spec = match spec {
                Some(p) => load_spec(&p)?,
                None => SynthSpec::default(),
            };
            let config = cmd_synth(&spec, seed, &out)?;
            println!("{}", config.display());
        }
        Command::Stats(args) => print!("{}", cmd_stats(&args.load()?)?.to_tsv()),
        Command::Train(args) => {
            let summary = cmd_train(&args.load()?)?;
            eprintln!("artifacts written to {}", summary.artifacts.model.parent().unwrap_or(Path::new(".")).display());
            print!("{}", summary.validation.to_tsv());
        }
        Command::Evaluate {
            run,
            split,
            author_covered_only,
        } => print!("{}", cmd_evaluate(&run.load()?, split, author_covered_only)?.to_tsv()),
        Command::Predict { run, input } => {
            print!("{}", format_predictions(&cmd_predict(&run.load()?, &input)?))
        }
        Command::Compare(args) => print!("{}", cmd_compare(&args.load()?)?.to_tsv()),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ERROR: {e:#}");
            ExitCode::FAILURE
        }
    }
}
