//! JSON run configuration. Every key is optional and command-line flags win
//! over file values.
//!
//! ```json
//! {
//!   "questions": "out/questions.json",
//!   "store": "out/store.ndjson",
//!   "out_dir": "runs/tuned",
//!   "seed": 7,
//!   "budget": 200,
//!   "space": ["num_topics=20:400"],
//!   "k": 10,
//!   "num_topics": 50,
//!   "stemmer": "porter"
//! }
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use topiq::corpus::QuestionType;
use topiq::textprep::Stemmer;

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub questions: Option<PathBuf>,
    pub store: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub run: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub name: Option<String>,

    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub budget: Option<usize>,
    pub space: Option<Vec<String>>,
    pub k: Option<usize>,
    pub doc_filter: Option<PathBuf>,
    pub question_types: Option<Vec<QuestionType>>,

    pub num_topics: Option<usize>,
    pub chunksize: Option<usize>,
    pub passes: Option<usize>,
    pub decay: Option<f64>,
    pub eval_every: Option<usize>,
    pub iterations: Option<usize>,
    pub offset: Option<f64>,
    pub alpha: Option<f64>,
    pub eta: Option<f64>,
    pub gamma_threshold: Option<f64>,

    pub stemmer: Option<Stemmer>,
    pub stopwords: Option<PathBuf>,
    pub min_df: Option<u32>,
    pub max_df: Option<f64>,

    pub endpoint: Option<String>,
    pub batch_size: Option<usize>,
    pub delay_ms: Option<u64>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))
    }
}
