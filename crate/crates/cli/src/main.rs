//! `aqa`: batch command-line front end for answerability classification,
//! IOB answer extraction and their analyses.

mod commands;
mod resources;

use std::ffi::OsString;
use std::path::PathBuf;

use aqa_core::features::{FeatureSet, DEFAULT_BOW_SIZE};
use aqa_core::tagger::LegalityConfig;
use aqa_core::Language;
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Exit status for a rejected invocation.
const EXIT_INVALID: i32 = 1;
/// Exit status for a failure while running a valid invocation.
const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Runtime(#[from] anyhow::Error),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => EXIT_INVALID,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Shorthand for a validation failure.
pub fn invalid<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Invalid(msg.into()))
}

#[derive(Debug, Parser)]
#[command(
    name = "aqa",
    version,
    about = "Answerability classification and IOB answer extraction"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Upper bound on worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// JSONL dataset.
    #[arg(long)]
    pub data: PathBuf,
    /// Languages to keep, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "en,fi,ja")]
    pub lang: Vec<Language>,
    /// Fail on the first inconsistent sample instead of skipping it.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Args)]
pub struct FeatureArgs {
    /// Context vectors (CVEC), needed by the `cvec` feature set.
    #[arg(long)]
    pub cvec: Option<PathBuf>,
    /// Subword vocabulary, one token per line.
    #[arg(long)]
    pub bpe_vocab: Option<PathBuf>,
    /// Subword merge table.
    #[arg(long)]
    pub bpe_merges: Option<PathBuf>,
    /// Subword embeddings in word2vec text format.
    #[arg(long)]
    pub bpe_emb: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    /// Beam width; 1 is greedy.
    #[arg(long, default_value_t = 1)]
    pub beam_k: usize,
    /// Legality rules to enforce: a subset of `a,b,c` or `none`.
    #[arg(long, default_value = "none")]
    pub constraints: LegalityConfig,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SplitArg {
    Train,
    Validation,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ReportFormat {
    Text,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a dataset and write it back as normalized JSONL.
    Ingest {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// First and last question-token frequencies.
    Stats {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum, default_value = "train")]
        split: SplitArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the feedforward answerability classifier.
    TrainAnswerability {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        res: FeatureArgs,
        #[arg(long, default_value = "combo")]
        features: FeatureSet,
        /// Separate validation set; otherwise a seeded split of `--data`.
        #[arg(long)]
        val_data: Option<PathBuf>,
        #[arg(long, default_value_t = 0.2)]
        val_fraction: f64,
        #[arg(long, default_value_t = DEFAULT_BOW_SIZE)]
        bow_size: usize,
        #[arg(long, default_value_t = 20)]
        epochs: usize,
        #[arg(long, default_value_t = 512)]
        batch_size: usize,
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        #[arg(long, default_value_t = 5)]
        patience: usize,
        /// Checkpoint path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Accuracy and average precision of a classifier checkpoint.
    EvalAnswerability {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        res: FeatureArgs,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        /// Per-sample probabilities as JSONL.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Precision-recall curve of a classifier checkpoint as CSV.
    PrCurve {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        res: FeatureArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the BiLSTM IOB tagger on context vectors.
    TrainTagger {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        cvec: PathBuf,
        #[arg(long, requires = "val_cvec")]
        val_data: Option<PathBuf>,
        #[arg(long, requires = "val_data")]
        val_cvec: Option<PathBuf>,
        /// Share of samples held out when no validation files are given.
        #[arg(long, default_value_t = 0.1)]
        val_fraction: f64,
        #[arg(long, default_value_t = 300)]
        hidden: usize,
        #[arg(long, default_value_t = 2)]
        layers: usize,
        #[arg(long, default_value_t = 0.1)]
        dropout: f64,
        #[arg(long, default_value_t = 10)]
        epochs: usize,
        #[arg(long, default_value_t = 16)]
        batch_size: usize,
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        #[arg(long, default_value_t = 1e-5)]
        lr_end: f64,
        /// Loss weights for O, B, I.
        #[arg(long, value_delimiter = ',', default_value = "0.01,1,1")]
        class_weights: Vec<f64>,
        /// Checkpoint path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Token-level F1 and confusion matrix of a tagger checkpoint.
    EvalTagger {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        cvec: PathBuf,
        #[command(flatten)]
        decode: DecodeArgs,
    },
    /// Extract one answer (or none) per sample as JSONL.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        cvec: PathBuf,
        #[command(flatten)]
        decode: DecodeArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Integrated Gradients attributions of a classifier checkpoint.
    Ig {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        res: FeatureArgs,
        /// Riemann steps.
        #[arg(long, default_value_t = aqa_core::interpret::DEFAULT_STEPS)]
        steps: usize,
        #[arg(long, default_value_t = 10)]
        top_n: usize,
        /// Per-sample attribution JSONL.
        #[arg(long)]
        out: PathBuf,
    },
    /// Punctuation substitution attack on correctly predicted answerable samples.
    Attack {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        res: FeatureArgs,
        /// Substitutions as `<from><to>` pairs; defaults to `.?` and `,-`.
        #[arg(long = "map")]
        map: Vec<String>,
        /// Report JSON.
        #[arg(long)]
        out: PathBuf,
        /// Confidence histogram CSV.
        #[arg(long)]
        histogram: Option<PathBuf>,
    },
    /// Zero-shot evaluation of one trained system on several languages.
    Crosslingual {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        train_lang: Language,
        /// Samples per language.
        #[arg(long, default_value_t = 200)]
        n: usize,
        /// Classifier checkpoint; without it a seeded coin flip is scored.
        #[arg(long)]
        model: Option<PathBuf>,
        #[command(flatten)]
        res: FeatureArgs,
        /// Tagger checkpoint for answer extraction; uses `--cvec`.
        #[arg(long, requires = "cvec")]
        tagger: Option<PathBuf>,
        #[command(flatten)]
        decode: DecodeArgs,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[arg(long, value_enum, default_value = "text")]
        format: ReportFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or("AQA_LOG", "warn");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

/// Parses `argv` and runs one subcommand, returning the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_INVALID,
            };
        }
    };
    init_logging();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return EXIT_INVALID;
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return EXIT_RUNTIME;
        }
    }
    match commands::execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            match &e {
                CliError::Invalid(msg) => eprintln!("error: {msg}"),
                CliError::Runtime(err) => eprintln!("error: {err:#}"),
            }
            e.exit_code()
        }
    }
}

fn main() {
    std::process::exit(run(std::env::args_os()));
}
