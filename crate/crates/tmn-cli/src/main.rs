//! `tmn`: train and inspect joint topic-memory text classifiers.

mod commands;
mod failure;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "tmn",
    version,
    about = "Topic-aware short-text classification: prepare corpora, train, evaluate, inspect"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse `label<TAB>text` lines into a prepared corpus directory.
    Prepare(PrepareArgs),
    /// Train a model on a prepared corpus.
    Train(TrainArgs),
    /// Score a checkpoint on one split and measure topic coherence.
    Eval(EvalArgs),
    /// List each topic's top words; optionally export one document's
    /// topic-memory heatmap.
    Topics(TopicsArgs),
    /// Train across a grid of hop and topic counts.
    Sweep(SweepArgs),
    /// Classify raw text with a trained checkpoint.
    Classify(ClassifyArgs),
}

#[derive(Args)]
struct PrepareArgs {
    /// Labeled input file, one `label<TAB>text` line per document.
    #[arg(long)]
    input: PathBuf,
    /// Directory to write the prepared corpus into.
    #[arg(long)]
    out: PathBuf,
    /// Flat `key=value` settings file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Stop-word list, one word per line.
    #[arg(long)]
    stopwords: Option<PathBuf>,
    /// Minimum training document frequency for vocabulary words.
    #[arg(long)]
    min_count: Option<usize>,
    /// Sequence length cap (default: 95th percentile of training lengths).
    #[arg(long)]
    l_max: Option<usize>,
    /// Lowercase all text.
    #[arg(long)]
    lowercase: Option<bool>,
    /// Record word presence instead of counts in the bag-of-words view.
    #[arg(long)]
    binary_bow: Option<bool>,
    #[arg(long)]
    seed: Option<u64>,
}

/// Training knobs shared by `train` and `sweep`.
#[derive(Args, Clone)]
struct TrainKnobs {
    /// Classification-loss weight in the combined objective.
    #[arg(long)]
    lambda: Option<f64>,
    /// Matched-topic weight in the mixture update.
    #[arg(long)]
    gamma: Option<f64>,
    /// Word/topic embedding width.
    #[arg(long)]
    e: Option<usize>,
    /// Encoder hidden width.
    #[arg(long)]
    h_e: Option<usize>,
    /// Total convolution feature maps across all filter widths.
    #[arg(long)]
    cnn_features: Option<usize>,
    /// Comma-separated convolution filter widths, e.g. 1,2,3.
    #[arg(long)]
    filter_widths: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Early-stopping patience in epochs.
    #[arg(long)]
    patience: Option<usize>,
    /// Epochs over which the divergence weight ramps from zero to one.
    #[arg(long)]
    kl_warmup_epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    /// joint or separate.
    #[arg(long)]
    mode: Option<String>,
    /// topic_memory or theta_concat.
    #[arg(long)]
    arch: Option<String>,
    /// Whether the topic-word decoder carries a bias vector.
    #[arg(long)]
    decoder_bias: Option<bool>,
    /// Pre-trained embedding file, `word v1 v2 ... vE` per line.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct TrainArgs {
    /// Prepared corpus directory.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Directory for the checkpoint, log, and topic list.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Flat `key=value` settings file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Topic count.
    #[arg(long)]
    k: Option<usize>,
    /// Memory hop count.
    #[arg(long)]
    hops: Option<usize>,
    #[command(flatten)]
    knobs: TrainKnobs,
}

#[derive(Args)]
struct EvalArgs {
    /// Trained checkpoint file.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Prepared corpus directory.
    #[arg(long)]
    corpus: PathBuf,
    /// Directory for metrics.json and coherence.tsv.
    #[arg(long)]
    out: PathBuf,
    /// Split to score: train, dev, or test.
    #[arg(long, default_value = "test")]
    split: String,
}

#[derive(Args)]
struct TopicsArgs {
    /// Trained checkpoint file.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Directory for topics.txt and heatmaps.
    #[arg(long)]
    out: PathBuf,
    /// Document index to visualize (needs --corpus).
    #[arg(long)]
    inspect: Option<usize>,
    /// Prepared corpus directory holding the inspected document.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Which hop's match matrix to export (default: the last hop).
    #[arg(long)]
    hop: Option<usize>,
}

#[derive(Args)]
struct SweepArgs {
    /// Prepared corpus directory.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Directory for sweep.csv.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Flat `key=value` settings file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated hop counts, e.g. 1,2,3,4,5,6.
    #[arg(long)]
    hops: Option<String>,
    /// Comma-separated topic counts, e.g. 10,30,50.
    #[arg(long)]
    topics: Option<String>,
    /// Run up to this many trainings concurrently.
    #[arg(long, default_value_t = 1)]
    parallel: usize,
    #[command(flatten)]
    knobs: TrainKnobs,
}

#[derive(Args)]
struct ClassifyArgs {
    /// Trained checkpoint file.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Classify this one text.
    #[arg(long)]
    text: Option<String>,
    /// Classify every line of this file.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Append the class distribution to each line.
    #[arg(long)]
    probs: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Prepare(args) => commands::prepare(args),
        Command::Train(args) => commands::train(args),
        Command::Eval(args) => commands::eval(args),
        Command::Topics(args) => commands::topics(args),
        Command::Sweep(args) => commands::sweep(args),
        Command::Classify(args) => commands::classify(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}
