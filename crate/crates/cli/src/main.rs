//! `ragev`: ingest documents, build indexes, ask questions and run
//! benchmark sweeps from the command line.

mod ask;
mod commands;
mod settings;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ragev_core::Error;

use settings::Settings;

#[derive(Debug, Parser)]
#[command(name = "ragev", version, about = "Retrieval-augmented QA engine and evaluation harness")]
struct Cli {
    #[command(flatten)]
    options: Options,
    #[command(subcommand)]
    command: Command,
}

/// Settings shared by every command. Each can also be set in the
/// `--config` file.
#[derive(Debug, Default, Clone, Args)]
pub struct Options {
    /// TOML file with defaults for any of these flags
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Where ingested collections and cached indexes live [default: ragev-data]
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    /// Output directory for run records and reports [default: ragev-out]
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Collection name, or a path to a collection directory, manifest or JSONL file
    #[arg(long, global = true)]
    pub collection: Option<String>,
    /// Collection kind: relevant, some_noise, noise_only, contrafactual
    #[arg(long, global = true)]
    pub kind: Option<String>,
    /// vanilla | vector | fulltext | hybrid | shy
    #[arg(long, global = true)]
    pub pipeline: Option<String>,
    #[arg(long, global = true)]
    pub top_k: Option<usize>,
    /// Chunks kept per document by shy
    #[arg(long, global = true)]
    pub per_doc_m: Option<usize>,
    #[arg(long, global = true)]
    pub rrf_k: Option<f64>,
    /// Interleave hybrid candidates instead of fusing them
    #[arg(long, global = true)]
    pub no_rerank: bool,
    /// Drop retrieved chunks scoring below this
    #[arg(long, global = true)]
    pub min_score: Option<f64>,
    /// shy: drop chunks that match no query term
    #[arg(long, global = true)]
    pub shy_drop_zero: bool,
    /// Chunk size in tokens
    #[arg(long, global = true)]
    pub chunk_size: Option<usize>,
    /// Chunk overlap in tokens [default: chunk size / 8]
    #[arg(long, global = true)]
    pub overlap: Option<usize>,
    /// hashed | remote
    #[arg(long, global = true)]
    pub provider: Option<String>,
    #[arg(long, global = true)]
    pub embedding_model: Option<String>,
    /// Dimension of hashed embeddings
    #[arg(long, global = true)]
    pub embedding_dim: Option<usize>,
    /// Base URL of an OpenAI-compatible endpoint
    #[arg(long, global = true, env = "RAGEV_BASE_URL")]
    pub endpoint: Option<String>,
    /// echo | corrupt | contradict | grounded | remote
    #[arg(long, global = true)]
    pub generator: Option<String>,
    /// Chat model name (remote generator)
    #[arg(long, global = true)]
    pub model: Option<String>,
    #[arg(long, global = true)]
    pub corrupt_level: Option<f64>,
    #[arg(long, global = true)]
    pub temperature: Option<f64>,
    #[arg(long, global = true)]
    pub max_tokens: Option<u32>,
    /// Concurrent requests to remote endpoints
    #[arg(long, global = true)]
    pub max_in_flight: Option<usize>,
    /// Seed for all stubbed randomness [default: 42]
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Add text files, document JSONL files or directories to a collection
    Ingest {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        /// Replace an existing collection of the same name
        #[arg(long)]
        force: bool,
    },
    /// Build and cache the indexes for a collection
    Index {
        #[arg(long)]
        force: bool,
    },
    /// Answer a question, or read questions from stdin with --repl
    Ask {
        question: Option<String>,
        #[arg(long)]
        repl: bool,
        /// Reference short answer for stub generators
        #[arg(long)]
        gold_short: Option<String>,
        /// Reference long answer for stub generators
        #[arg(long)]
        gold_long: Option<String>,
    },
    /// Run every cell of a factors file over a question set
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        factors: PathBuf,
        /// Redo runs that are already complete
        #[arg(long)]
        force: bool,
        /// Factor codes to group the report by, comma separated
        #[arg(long, default_value = "PIP")]
        group_by: String,
    },
    /// Summarize the run records under --out
    Report {
        #[arg(long, default_value = "PIP")]
        group_by: String,
    },
    /// Pearson correlation between human scores and a per-item metric
    Correlate {
        #[arg(long)]
        judgments: PathBuf,
        #[arg(long, default_value = "bert_f1")]
        metric: String,
        /// Only this run mnemonic
        #[arg(long)]
        run: Option<String>,
    },
}

/// Stable exit codes.
fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Conflict(_) => 3,
        Error::RunAborted { .. } => 4,
        e if e.is_transport() => 4,
        Error::Io { source, .. } if source.kind() != std::io::ErrorKind::NotFound => 1,
        _ => 2,
    }
}

fn run(cli: Cli) -> ragev_core::Result<u8> {
    let settings = Settings::resolve(&cli.options)?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let code = match cli.command {
        Command::Ingest { paths, force } => commands::ingest(&settings, &paths, force, &mut out)?,
        Command::Index { force } => commands::index(&settings, force, &mut out)?,
        Command::Ask { question, repl, gold_short, gold_long } => {
            let gold = ask::GoldFlags { short: gold_short, long: gold_long };
            if repl {
                ask::repl(&settings, &gold, std::io::stdin().lock(), &mut out)?
            } else {
                let question = question
                    .ok_or_else(|| Error::InvalidArgument("ask needs a question or --repl".into()))?;
                ask::ask_once(&settings, &question, &gold, &mut out)?
            }
        }
        Command::Eval { dataset, factors, force, group_by } => {
            commands::eval(&settings, &dataset, &factors, force, &group_by, &mut out)?
        }
        Command::Report { group_by } => commands::report(&settings, &group_by, &mut out)?,
        Command::Correlate { judgments, metric, run } => {
            commands::correlate(&settings, &judgments, &metric, run.as_deref(), &mut out)?
        }
    };
    out.flush().map_err(|e| Error::Io { path: "<stdout>".into(), source: e })?;
    Ok(code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
