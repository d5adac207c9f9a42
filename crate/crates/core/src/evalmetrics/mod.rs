//! Retrieval and answer metrics with synonym-aware string matching.
//!
//! Answer strings are compared after [`normalize`]: lowercase, runs of
//! whitespace collapsed to one space, ends trimmed. A candidate matches a
//! golden group when its normalized form is one of the group's variants or a
//! lexicon synonym of one.

mod lexicon;
mod report;

pub use lexicon::SynonymLexicon;
pub use report::{evaluate, load_predictions, AnswerCandidate, Aggregates, EvalReport, Excluded, Prediction, Predictions, QuestionScores};

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::corpus::AnswerVariantGroup;
use crate::error::{Error, Result};

/// Number of factoid candidates that are scored.
pub const MAX_FACTOID_CANDIDATES: usize = 5;

pub fn normalize(s: &str) -> String {
    s.split_whitespace().map(str::to_lowercase).collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    fn from_counts(tp: usize, predicted: usize, golden: usize) -> Self {
        let precision = if predicted == 0 { 0.0 } else { tp as f64 / predicted as f64 };
        let recall = if golden == 0 { 0.0 } else { tp as f64 / golden as f64 };
        Self {
            precision,
            recall,
            f1: f1(precision, recall),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactoidScores {
    pub strict: bool,
    pub lenient: bool,
    pub reciprocal_rank: f64,
}

pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Set-based precision/recall over document ids. Repeated ids in
/// `retrieved` count once.
pub fn prf<S: AsRef<str>>(retrieved: &[S], golden: &BTreeSet<String>) -> Prf {
    let mut seen = HashSet::new();
    let mut tp = 0;
    for id in retrieved {
        let id = id.as_ref();
        if seen.insert(id) && golden.contains(id) {
            tp += 1;
        }
    }
    Prf::from_counts(tp, seen.len(), golden.len())
}

/// Normalized surface forms accepted for a golden group.
pub fn accepted_forms(golden: &AnswerVariantGroup, lex: &SynonymLexicon) -> HashSet<String> {
    golden.variants.iter().flat_map(|v| lex.synonyms(v)).collect()
}

/// Scores up to [`MAX_FACTOID_CANDIDATES`] ranked candidates; any beyond
/// that are ignored.
pub fn factoid_scores<S: AsRef<str>>(candidates: &[S], golden: &AnswerVariantGroup, lex: &SynonymLexicon) -> FactoidScores {
    let forms = accepted_forms(golden, lex);
    let rank = candidates
        .iter()
        .take(MAX_FACTOID_CANDIDATES)
        .position(|c| forms.contains(&normalize(c.as_ref())));
    FactoidScores {
        strict: rank == Some(0),
        lenient: rank.is_some(),
        reciprocal_rank: rank.map_or(0.0, |r| 1.0 / (r + 1) as f64),
    }
}

/// Greedy matching in prediction order: each prediction claims the first
/// still-unmatched golden group it matches, otherwise it is a false
/// positive. A group is matched at most once.
pub fn list_scores<S: AsRef<str>>(predicted: &[S], golden: &[AnswerVariantGroup], lex: &SynonymLexicon) -> Prf {
    let forms: Vec<HashSet<String>> = golden.iter().map(|g| accepted_forms(g, lex)).collect();
    let mut matched = vec![false; golden.len()];
    let mut tp = 0;
    for p in predicted {
        let p = normalize(p.as_ref());
        if let Some(g) = (0..golden.len()).find(|&g| !matched[g] && forms[g].contains(&p)) {
            matched[g] = true;
            tp += 1;
        }
    }
    Prf::from_counts(tp, predicted.len(), golden.len())
}

/// Mean reciprocal rank; misses contribute 0.
pub fn mrr(rr_values: &[f64]) -> Result<f64> {
    if rr_values.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(rr_values.iter().sum::<f64>() / rr_values.len() as f64)
}
