//! `hetlink` command-line interface.
//!
//! Exit codes: 0 success, 2 usage or config error, 3 numerical failure,
//! 4 data or format error.

mod commands;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hetlink::nn::EncoderKind;
use hetlink::split::NegativeRegime;

#[derive(Debug, Parser)]
#[command(name = "hetlink", version, about = "Drug-drug interaction type prediction on heterogeneous graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every command.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Random seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Dataset directory holding `nodes.tsv`, `edges.tsv` and `features.tsv`.
#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Dataset directory.
    #[arg(long)]
    pub data: PathBuf,
    /// Additional edge files (e.g. the output of `hetlink sim`).
    #[arg(long = "extra-edges")]
    pub extra_edges: Vec<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a planted-cluster dataset.
    Synth(SynthArgs),
    /// Build thresholded similarity edges from fingerprints.
    Sim(SimArgs),
    /// Print node, edge and class counts.
    Stats(StatsArgs),
    /// Train a model and evaluate it on the held-out split.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a split under a negative-sampling regime.
    Eval(EvalArgs),
    /// Render confusion.svg and summary.txt for a run directory.
    Report(ReportArgs),
    /// Print the class distribution for one drug pair.
    Predict(PredictArgs),
    /// Train once, then evaluate under several test-negative regimes.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub n_drugs: Option<usize>,
    #[arg(long)]
    pub n_proteins: Option<usize>,
    /// Interaction classes, not counting class 0.
    #[arg(long)]
    pub classes: Option<usize>,
    /// Standard deviation of the feature noise around cluster centers.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Probability that a pair with a non-zero class becomes a DDI edge.
    #[arg(long)]
    pub edge_density: Option<f64>,
    /// Probability that an edge label is swapped for its sibling class.
    #[arg(long)]
    pub sibling_noise: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SimArgs {
    #[command(flatten)]
    pub common: Common,
    /// Fingerprint file (`id<TAB>bitstring`).
    #[arg(long, required_unless_present = "cosine")]
    pub fingerprints: Option<PathBuf>,
    /// Use cosine similarity of drug embeddings from this dataset directory
    /// instead of fingerprint Tanimoto similarity.
    #[arg(long, conflicts_with = "fingerprints")]
    pub cosine: Option<PathBuf>,
    #[arg(long, default_value_t = 0.7)]
    pub tau: f64,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: DataArgs,
}

/// Training flags; each overrides the matching field of `--config`.
#[derive(Debug, Clone, Args)]
pub struct TrainFlags {
    /// `hgcn` or `hgat`.
    #[arg(long)]
    pub encoder: Option<EncoderKind>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Adam learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Embedding width of every encoder layer.
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Attention heads (hgat only).
    #[arg(long)]
    pub heads: Option<usize>,
    /// Share of each class's DDI edges held out for testing.
    #[arg(long)]
    pub test_fraction: Option<f64>,
    /// Non-edges added to training, as a fraction of the training set.
    #[arg(long)]
    pub train_neg_ratio: Option<f64>,
    /// Test negatives: `none`, `frac:<rho>` or `all`.
    #[arg(long)]
    pub neg_regime: Option<NegativeRegime>,
    /// Number of interaction classes (default: largest label in the data).
    #[arg(long)]
    pub class_count: Option<usize>,
    /// `class<TAB>group` file for grouped metrics.
    #[arg(long)]
    pub grouping: Option<PathBuf>,
    /// Evaluate on the test split every N epochs.
    #[arg(long)]
    pub eval_every: Option<usize>,
    /// Leave class 0 out of the weighted metrics.
    #[arg(long)]
    pub exclude_class0: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub flags: TrainFlags,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// `split.tsv` from a training run; its test positives are evaluated.
    #[arg(long)]
    pub split: PathBuf,
    #[arg(long, default_value = "frac:0.1")]
    pub neg_regime: NegativeRegime,
    #[arg(long)]
    pub grouping: Option<PathBuf>,
    #[arg(long)]
    pub exclude_class0: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub common: Common,
    /// Directory holding `confusion.tsv` (a train, eval or experiment run).
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub exclude_class0: bool,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Hide the test positives of this split from message passing.
    #[arg(long)]
    pub split: Option<PathBuf>,
    pub drug_a: String,
    pub drug_b: String,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub flags: TrainFlags,
    /// Test-negative regimes to compare.
    #[arg(long, value_delimiter = ',', default_value = "none,frac:0.1,all")]
    pub regimes: Vec<NegativeRegime>,
}

/// A command failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }

    pub fn numeric(message: impl Into<String>) -> Self {
        Self { code: 3, message: message.into() }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self { code: 4, message: message.into() }
    }
}

fn init_threads() {
    let Ok(raw) = std::env::var("HETLINK_THREADS") else {
        return;
    };
    match raw.trim().parse::<usize>() {
        Ok(n) if n > 0 => {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                log::warn!("HETLINK_THREADS ignored: {e}");
            }
        }
        _ => log::warn!("HETLINK_THREADS must be a positive integer, got `{raw}`"),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    init_threads();
    let result = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Sim(a) => commands::sim(a),
        Command::Stats(a) => commands::stats(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Report(a) => commands::report(a),
        Command::Predict(a) => commands::predict(a),
        Command::Experiment(a) => commands::experiment(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
