//! Topic-model retrieval and answer evaluation for biomedical abstracts.
//!
//! The crate covers the offline half of a question answering pipeline over
//! PubMed abstracts:
//!
//! * [`corpus`]: BioASQ dataset ingestion, abstract fetching and the document store
//! * [`textprep`] and [`vocab`]: normalization, stemming, bag-of-words vectors
//! * [`lda`]: online variational Bayes LDA
//! * [`retrieval`]: cosine ranking over per-document topic distributions
//! * [`cmaes`]: BIPOP CMA-ES and the hyperparameter search space
//! * [`tuning`]: the retrieval-F1 objective that couples the two
//! * [`evalmetrics`]: precision/recall/F1, strict and lenient accuracy, MRR
//! * [`squadgen`]: span-annotated training records in SQuAD v2 layout

pub mod cmaes;
pub mod corpus;
pub mod error;
pub mod evalmetrics;
pub mod io;
pub mod lda;
pub mod retrieval;
pub mod squadgen;
pub mod textprep;
pub mod tuning;
pub mod vocab;

pub use error::{Error, Result};

/// Library version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
