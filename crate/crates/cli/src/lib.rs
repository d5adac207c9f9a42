//! Command-line pipeline: ingest → fetch → train → tune → retrieve → eval →
//! makesquad.
//!
//! Every command reads an optional JSON config (`--config`, schema in
//! [`config::RunConfig`]), lets flags override it, writes its outputs
//! atomically into `--out` and finishes with `<command>.manifest.json`.
//! Failures print `ERROR <CODE>: message` on standard error and exit with 1
//! for invalid input or 2 for runtime failures.

pub mod commands;
pub mod config;
pub mod manifest;

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use topiq::corpus::QuestionType;
use topiq::textprep::Stemmer;

pub use config::RunConfig;
pub use manifest::Manifest;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config or input paths; reported with its own code.
    Usage { code: &'static str, message: String },
    Validation(String),
    Core(topiq::Error),
}

impl CliError {
    pub fn usage(code: &'static str, message: impl Into<String>) -> Self {
        CliError::Usage { code, message: message.into() }
    }

    pub fn code(&self) -> &'static str {
        use topiq::Error as E;
        match self {
            CliError::Usage { code, .. } => code,
            CliError::Validation(_) => "CONFIG",
            CliError::Core(e) => match e {
                E::Io { .. } => "IO",
                E::MalformedDataset(_) => "MALFORMED_DATASET",
                E::MalformedLexicon { .. } => "MALFORMED_LEXICON",
                E::MalformedModel(_) => "MALFORMED_MODEL",
                E::Network(_) => "NETWORK",
                E::Precondition(_) => "PRECONDITION",
                E::EmptyVocabulary => "EMPTY_VOCABULARY",
                E::InvalidHyperParams(_) => "INVALID_HYPERPARAMS",
                E::EmptyCorpus => "EMPTY_CORPUS",
                E::DimensionMismatch(_) => "DIMENSION_MISMATCH",
                E::EmptyIndex => "EMPTY_INDEX",
                E::DegenerateCovariance => "DEGENERATE_COVARIANCE",
                E::InsufficientData(_) => "INSUFFICIENT_DATA",
                E::EmptyInput => "EMPTY_INPUT",
            },
        }
    }

    /// 1 for input the caller can fix, 2 for failures while running.
    pub fn exit_code(&self) -> i32 {
        use topiq::Error as E;
        match self {
            CliError::Usage { .. } | CliError::Validation(_) => 1,
            CliError::Core(
                E::MalformedDataset(_)
                | E::MalformedLexicon { .. }
                | E::MalformedModel(_)
                | E::Precondition(_)
                | E::InvalidHyperParams(_)
                | E::DimensionMismatch(_),
            ) => 1,
            CliError::Core(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage { message, .. } | CliError::Validation(message) => f.write_str(message),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<topiq::Error> for CliError {
    fn from(e: topiq::Error) -> Self {
        CliError::Core(e)
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "topiq",
    version,
    about = "Topic-model retrieval, hyperparameter tuning and answer evaluation over PubMed abstracts",
    after_help = "Environment:\n  NCBI_API_KEY  optional E-utilities API key, sent by `fetch` when set"
)]
pub struct Cli {
    /// JSON config file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Cap on worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a BioASQ dump into questions.json and store.ndjson.
    Ingest(IngestArgs),
    /// Fill missing abstracts from PubMed into a new store.ndjson.
    Fetch(FetchArgs),
    /// Train an LDA model on the stored abstracts.
    Train(TrainArgs),
    /// Search LDA hyperparameters with BIPOP CMA-ES against retrieval F1.
    Tune(TuneArgs),
    /// Rank stored abstracts for every question.
    Retrieve(RetrieveArgs),
    /// Score a run file and/or answer predictions against the golden data.
    Eval(EvalArgs),
    /// Export span-annotated records in SQuAD v2 layout.
    Makesquad(MakesquadArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Ingest(_) => "ingest",
            Command::Fetch(_) => "fetch",
            Command::Train(_) => "train",
            Command::Tune(_) => "tune",
            Command::Retrieve(_) => "retrieve",
            Command::Eval(_) => "eval",
            Command::Makesquad(_) => "makesquad",
        }
    }
}

// Flag structs serialize under the config-file key names so that flags can
// be laid over the file as JSON.

#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct OutArgs {
    /// Output directory, created if missing.
    #[arg(long = "out")]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct PrepArgs {
    #[arg(long, value_parser = parse_stemmer)]
    pub stemmer: Option<Stemmer>,
    /// Stopword list, one word per line; replaces the built-in list.
    #[arg(long)]
    pub stopwords: Option<PathBuf>,
    /// Minimum document frequency of a vocabulary term.
    #[arg(long)]
    pub min_df: Option<u32>,
    /// Maximum document frequency as a fraction of the corpus.
    #[arg(long)]
    pub max_df: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct LdaArgs {
    #[arg(long)]
    pub num_topics: Option<usize>,
    #[arg(long)]
    pub chunksize: Option<usize>,
    #[arg(long)]
    pub passes: Option<usize>,
    #[arg(long)]
    pub decay: Option<f64>,
    #[arg(long)]
    pub eval_every: Option<usize>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub offset: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub gamma_threshold: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct IngestArgs {
    /// BioASQ JSON dump.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Question types to keep, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub question_types: Option<Vec<QuestionType>>,
    #[command(flatten)]
    #[serde(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct FetchArgs {
    /// Store whose stub entries are fetched; it is not modified.
    #[arg(long)]
    pub store: Option<PathBuf>,
    /// efetch endpoint URL.
    #[arg(long)]
    pub endpoint: Option<String>,
    /// IDs per request, at most 200.
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Pause between requests in milliseconds.
    #[arg(long)]
    pub delay_ms: Option<u64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub store: Option<PathBuf>,
    /// Seed for the topic-word initialisation; required.
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub prep: PrepArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub lda: LdaArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct TuneArgs {
    #[arg(long)]
    pub questions: Option<PathBuf>,
    #[arg(long)]
    pub store: Option<PathBuf>,
    /// Seed for the search and every trained model; required.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Objective evaluations.
    #[arg(long)]
    pub budget: Option<usize>,
    /// Range override `name=low:high`; repeatable.
    #[arg(long)]
    pub space: Option<Vec<String>>,
    /// Cutoff for the F1@k objective.
    #[arg(long)]
    pub k: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub prep: PrepArgs,
    /// Fixed values for the parameters outside the search space.
    #[command(flatten)]
    #[serde(flatten)]
    pub lda: LdaArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct RetrieveArgs {
    #[arg(long)]
    pub questions: Option<PathBuf>,
    #[arg(long)]
    pub store: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Rank only the document IDs listed in this file, one per line.
    #[arg(long)]
    pub doc_filter: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub question_types: Option<Vec<QuestionType>>,
    /// Used only when no pipeline.json sits next to the vocabulary.
    #[command(flatten)]
    #[serde(flatten)]
    pub prep: PrepArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub questions: Option<PathBuf>,
    /// Run file from `retrieve`.
    #[arg(long)]
    pub run: Option<PathBuf>,
    /// Answer predictions JSON.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    /// Synonym lexicon TSV for lenient answer matching.
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub question_types: Option<Vec<QuestionType>>,
    /// Run name in the CSV summary.
    #[arg(long)]
    pub name: Option<String>,
    #[command(flatten)]
    #[serde(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct MakesquadArgs {
    #[arg(long)]
    pub questions: Option<PathBuf>,
    #[arg(long)]
    pub store: Option<PathBuf>,
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub out: OutArgs,
}

fn parse_stemmer(s: &str) -> Result<Stemmer, String> {
    match s {
        "porter" => Ok(Stemmer::Porter),
        "none" => Ok(Stemmer::None),
        other => Err(format!("unknown stemmer `{other}`, expected porter or none")),
    }
}

/// Lays the non-null flag values over the config file.
pub fn resolve<A: Serialize>(file: Option<RunConfig>, flags: &A, threads: Option<usize>) -> Result<RunConfig, CliError> {
    let to_value = |v: serde_json::Result<serde_json::Value>| v.map_err(|e| CliError::Validation(e.to_string()));
    let mut merged = to_value(serde_json::to_value(file.unwrap_or_default()))?;
    let overlay = to_value(serde_json::to_value(flags))?;
    let (Some(base), Some(top)) = (merged.as_object_mut(), overlay.as_object()) else {
        return Err(CliError::Validation("config is not a JSON object".into()));
    };
    for (k, v) in top {
        if !v.is_null() {
            base.insert(k.clone(), v.clone());
        }
    }
    if let Some(t) = threads {
        base.insert("threads".into(), t.into());
    }
    serde_json::from_value(merged).map_err(|e| CliError::Validation(e.to_string()))
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand) {
                print!("{e}");
                return 0;
            }
            let msg = e.to_string();
            let msg = msg.trim().trim_start_matches("error: ");
            eprintln!("ERROR USAGE: {msg}");
            return 1;
        }
    };
    match commands::execute(&cli) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("ERROR {}: {e}", e.code());
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let file = RunConfig {
            seed: Some(1),
            num_topics: Some(5),
            passes: Some(3),
            ..Default::default()
        };
        let flags = TrainArgs {
            seed: Some(9),
            lda: LdaArgs {
                num_topics: Some(7),
                ..Default::default()
            },
            ..Default::default()
        };
        let c = resolve(Some(file), &flags, Some(2)).unwrap();
        assert_eq!(c.seed, Some(9));
        assert_eq!(c.num_topics, Some(7));
        assert_eq!(c.passes, Some(3));
        assert_eq!(c.threads, Some(2));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::from(topiq::Error::MalformedDataset("x".into())).exit_code(), 1);
        assert_eq!(CliError::from(topiq::Error::Network("x".into())).exit_code(), 2);
        assert_eq!(CliError::from(topiq::Error::EmptyCorpus).code(), "EMPTY_CORPUS");
        assert_eq!(CliError::usage("INPUT_NOT_FOUND", "x").exit_code(), 1);
    }

    #[test]
    fn clap_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
