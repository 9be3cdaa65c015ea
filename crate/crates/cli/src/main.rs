//! `ramn`: prepare statistics, train the autoencoder, tune and apply the
//! reranker, and score rankings.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "ramn", version, about = "Unsupervised question retrieval")]
struct Cli {
    /// Log progress (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build the vocabulary and term statistics from an unlabeled corpus.
    Prepare(PrepareArgs),
    /// Train the attention autoencoder.
    Train(TrainArgs),
    /// Grid-search the rank weight on labeled development queries.
    TuneAlpha(TuneArgs),
    /// Score and rerank the candidates of every query.
    Rank(RankArgs),
    /// Compute MAP and MRR of a predictions file.
    Evaluate(EvaluateArgs),
    /// Greedily reconstruct questions with a trained model.
    Reconstruct(ReconstructArgs),
}

#[derive(Args, Debug)]
struct PrepareArgs {
    /// Unlabeled questions, one `{"id","subject","body"}` object per line.
    #[arg(long)]
    corpus: PathBuf,
    /// Output directory for vocab.tsv, termstats.tsv and manifest.json.
    #[arg(long)]
    out: PathBuf,
    /// Minimum corpus count for a word to enter the vocabulary.
    #[arg(long, default_value_t = 1)]
    min_count: u64,
}

#[derive(Args, Debug)]
struct ModelInputs {
    /// Checkpoint written by `train`.
    #[arg(long)]
    model: PathBuf,
    /// Directory written by `prepare`.
    #[arg(long)]
    stats: PathBuf,
    /// Maximum tokens kept per question.
    #[arg(long, default_value_t = ramn::text::DEFAULT_MAX_LEN)]
    max_len: usize,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Training questions (corpus JSONL).
    #[arg(long)]
    corpus: PathBuf,
    /// Held-out questions for early stopping, same format as the corpus.
    #[arg(long)]
    dev: PathBuf,
    /// Directory written by `prepare`.
    #[arg(long)]
    stats: PathBuf,
    /// Checkpoint path; the training log and manifest are written beside it.
    #[arg(long)]
    out: PathBuf,
    /// Optional `word v1 ... vd` text file used to initialise embeddings.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 48)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.0004)]
    lr: f64,
    #[arg(long, default_value_t = 3)]
    patience: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = ramn::autoencoder::ModelConfig::D_MODEL)]
    d_model: usize,
    #[arg(long, default_value_t = ramn::autoencoder::ModelConfig::D_FF)]
    d_ff: usize,
    #[arg(long, default_value_t = ramn::autoencoder::ModelConfig::LAYERS)]
    layers: usize,
    /// Disable sinusoidal positional encodings.
    #[arg(long)]
    no_positional: bool,
    #[arg(long, default_value_t = ramn::text::DEFAULT_MAX_LEN)]
    max_len: usize,
}

#[derive(Args, Debug)]
struct TuneArgs {
    #[command(flatten)]
    inputs: ModelInputs,
    /// Labeled development queries (JSONL).
    #[arg(long)]
    dev: PathBuf,
    /// Score with unit mismatch weights.
    #[arg(long)]
    no_mismatch: bool,
    /// Write the per-alpha MAP table here.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct RankArgs {
    #[command(flatten)]
    inputs: ModelInputs,
    /// Queries with candidates (JSONL).
    #[arg(long)]
    queries: PathBuf,
    /// Rank weight; 0 disables the rank factor.
    #[arg(long, default_value_t = ramn::matcher::DEFAULT_ALPHA)]
    alpha: f64,
    /// Score with unit mismatch weights.
    #[arg(long)]
    no_mismatch: bool,
    /// Predictions TSV.
    #[arg(long)]
    out: PathBuf,
    /// Also write the labels carried by the query file as a gold TSV.
    #[arg(long)]
    gold_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Predictions TSV written by `rank`.
    #[arg(long)]
    pred: PathBuf,
    /// Gold TSV: query_id, cand_id, label.
    #[arg(long, required_unless_present = "queries", conflicts_with = "queries")]
    gold: Option<PathBuf>,
    /// Labeled queries JSONL, as an alternative gold source.
    #[arg(long)]
    queries: Option<PathBuf>,
    /// Also write the report (and a manifest) here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Include per-query AP and RR in the report.
    #[arg(long)]
    per_query: bool,
}

#[derive(Args, Debug)]
struct ReconstructArgs {
    #[command(flatten)]
    inputs: ModelInputs,
    /// Questions to reconstruct (corpus JSONL).
    #[arg(long)]
    input: PathBuf,
    /// TSV of id, input text and reconstruction.
    #[arg(long)]
    out: PathBuf,
    /// Reconstruct at most this many questions.
    #[arg(long)]
    limit: Option<usize>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .format_timestamp(None)
        .init();

    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            for line in &failure.messages {
                eprintln!("error: {line}");
            }
            ExitCode::from(failure.code)
        }
    }
}
