//! Command-line front end: one subcommand per pipeline stage.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] relvm::error::Error),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(relvm::error::Error::Divergence { .. }) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML run configuration; omitted sections use defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Parser)]
#[command(name = "relvm", version, about = "Latent-variable relation representations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic corpus with planted relations.
    GenSynthetic {
        #[command(flatten)]
        common: Common,
    },
    /// Build vocabularies, encode contexts and split pairs.
    PrepareData {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        corpus: PathBuf,
        /// Pair dataset; without it no pair splits are written.
        #[arg(long)]
        pairs: Option<PathBuf>,
    },
    /// Train the representation model on a prepared directory.
    TrainRepr {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
    },
    /// Train the mention classifier, fine-tuning the representation model.
    TrainMention {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        mentions: PathBuf,
    },
    /// Cross-validate the mention classifier.
    EvalMention {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        mentions: PathBuf,
    },
    /// Train the pair classifier on a frozen representation model.
    TrainPair {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Pick the decision threshold on the validation pairs.
    TuneThreshold {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        pair_head: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Train the attention baseline.
    TrainAttention {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
    },
    /// Score the latent model and the baselines on the test pairs.
    EvalPair {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        pair_head: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Tuned threshold; tuned on validation when omitted.
        #[arg(long)]
        threshold: Option<PathBuf>,
        #[arg(long)]
        attention: Option<PathBuf>,
    },
    /// Label entity pairs read from a tab-separated file.
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        pair_head: PathBuf,
        #[arg(long)]
        threshold: PathBuf,
        #[arg(long)]
        pairs: PathBuf,
    },
    /// Print the parameter manifest of a checkpoint.
    InspectCheckpoint {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    use commands::*;
    match cli.command {
        Command::GenSynthetic { common } => gen_synthetic(&common),
        Command::PrepareData { common, corpus, pairs } => prepare_data(&common, &corpus, pairs.as_deref()),
        Command::TrainRepr { common, data } => train_repr(&common, &data),
        Command::TrainMention { common, checkpoint, mentions } => train_mention(&common, &checkpoint, &mentions),
        Command::EvalMention { common, checkpoint, mentions } => eval_mention(&common, &checkpoint, &mentions),
        Command::TrainPair { common, checkpoint, data } => train_pair(&common, &checkpoint, &data),
        Command::TuneThreshold { common, checkpoint, pair_head, data } => tune_threshold(&common, &checkpoint, &pair_head, &data),
        Command::TrainAttention { common, data } => train_attention(&common, &data),
        Command::EvalPair { common, checkpoint, pair_head, data, threshold, attention } => eval_pair(
            &common,
            &EvalPairInputs {
                checkpoint: &checkpoint,
                pair_head: &pair_head,
                data: &data,
                threshold: threshold.as_deref(),
                attention: attention.as_deref(),
            },
        ),
        Command::Predict { common, checkpoint, pair_head, threshold, pairs } => {
            predict(&common, &checkpoint, &pair_head, &threshold, &pairs)
        }
        Command::InspectCheckpoint { common, checkpoint } => inspect_checkpoint(&common, &checkpoint),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
