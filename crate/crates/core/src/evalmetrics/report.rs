use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{factoid_scores, list_scores, mrr, prf, FactoidScores, Prf, SynonymLexicon};
use crate::corpus::{Question, QuestionType};
use crate::error::Result;
use crate::io::{read_json, write_atomic, write_json};
use crate::retrieval::RunFile;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerCandidate {
    pub text: String,
    #[serde(default)]
    pub score: f64,
    #[serde(default)]
    pub doc_id: Option<String>,
    #[serde(default)]
    pub char_start: Option<usize>,
}

/// Answer output for one question, candidates in rank order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    #[serde(default)]
    pub candidates: Vec<AnswerCandidate>,
    #[serde(default)]
    pub no_answer_score: Option<f64>,
}

pub type Predictions = BTreeMap<String, Prediction>;

pub fn load_predictions(path: impl AsRef<Path>) -> Result<Predictions> {
    read_json(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionScores {
    pub qtype: QuestionType,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub retrieval: Option<Prf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub factoid: Option<FactoidScores>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub list: Option<Prf>,
}

/// Means over the questions each metric applies to; `None` when no
/// question qualified.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub n_retrieval: usize,
    pub mean_precision: Option<f64>,
    pub mean_recall: Option<f64>,
    pub mean_f1: Option<f64>,
    pub n_factoid: usize,
    pub sacc: Option<f64>,
    pub lacc: Option<f64>,
    pub mrr: Option<f64>,
    pub n_list: usize,
    pub list_precision: Option<f64>,
    pub list_recall: Option<f64>,
    pub list_f1: Option<f64>,
}

/// Questions left out of an aggregate because their golden set is empty.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Excluded {
    pub retrieval: Vec<String>,
    pub factoid: Vec<String>,
    pub list: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_question: BTreeMap<String, QuestionScores>,
    pub aggregates: Aggregates,
    pub excluded: Excluded,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn bool_mean(values: impl Iterator<Item = bool>) -> Option<f64> {
    mean(values.map(|b| if b { 1.0 } else { 0.0 }))
}

/// Scores a run file (document retrieval) and/or answer predictions against
/// the golden questions. A question absent from the run or predictions is
/// scored as an empty answer.
pub fn evaluate(questions: &[Question], run: Option<&RunFile>, predictions: Option<&Predictions>, lex: &SynonymLexicon) -> EvalReport {
    let mut per_question = BTreeMap::new();
    let mut excluded = Excluded::default();
    for q in questions {
        let mut scores = QuestionScores {
            qtype: q.qtype,
            retrieval: None,
            factoid: None,
            list: None,
        };
        if let Some(run) = run {
            let golden: BTreeSet<String> = q.golden_doc_ids.iter().cloned().collect();
            if golden.is_empty() {
                excluded.retrieval.push(q.id.clone());
            } else {
                let retrieved = run.get(&q.id).map(|l| l.doc_ids()).unwrap_or_default();
                scores.retrieval = Some(prf(&retrieved, &golden));
            }
        }
        if let Some(predictions) = predictions {
            let texts: Vec<&str> = predictions
                .get(&q.id)
                .map(|p| p.candidates.iter().map(|c| c.text.as_str()).collect())
                .unwrap_or_default();
            match q.qtype {
                QuestionType::Factoid => match q.exact_answers.first() {
                    Some(golden) if !golden.variants.is_empty() => {
                        scores.factoid = Some(factoid_scores(&texts, golden, lex));
                    }
                    _ => excluded.factoid.push(q.id.clone()),
                },
                QuestionType::List => {
                    if q.exact_answers.is_empty() {
                        excluded.list.push(q.id.clone());
                    } else {
                        scores.list = Some(list_scores(&texts, &q.exact_answers, lex));
                    }
                }
            }
        }
        per_question.insert(q.id.clone(), scores);
    }

    let retrieval: Vec<Prf> = per_question.values().filter_map(|s| s.retrieval).collect();
    let factoid: Vec<FactoidScores> = per_question.values().filter_map(|s| s.factoid).collect();
    let list: Vec<Prf> = per_question.values().filter_map(|s| s.list).collect();
    let rr: Vec<f64> = factoid.iter().map(|f| f.reciprocal_rank).collect();
    let aggregates = Aggregates {
        n_retrieval: retrieval.len(),
        mean_precision: mean(retrieval.iter().map(|s| s.precision)),
        mean_recall: mean(retrieval.iter().map(|s| s.recall)),
        mean_f1: mean(retrieval.iter().map(|s| s.f1)),
        n_factoid: factoid.len(),
        sacc: bool_mean(factoid.iter().map(|f| f.strict)),
        lacc: bool_mean(factoid.iter().map(|f| f.lenient)),
        mrr: mrr(&rr).ok(),
        n_list: list.len(),
        list_precision: mean(list.iter().map(|s| s.precision)),
        list_recall: mean(list.iter().map(|s| s.recall)),
        list_f1: mean(list.iter().map(|s| s.f1)),
    };
    EvalReport {
        per_question,
        aggregates,
        excluded,
    }
}

const CSV_HEADER: &str = "run,n_retrieval,mean_precision,mean_recall,mean_f1,n_factoid,sacc,lacc,mrr,n_list,list_precision,list_recall,list_f1";

impl EvalReport {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path, self)
    }

    /// Header plus one summary row; absent aggregates are empty cells.
    pub fn csv_summary(&self, run_name: &str) -> String {
        let a = &self.aggregates;
        let cell = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        let name = if run_name.contains([',', '"', '\n']) {
            format!("\"{}\"", run_name.replace('"', "\"\""))
        } else {
            run_name.to_string()
        };
        let row = [
            name,
            a.n_retrieval.to_string(),
            cell(a.mean_precision),
            cell(a.mean_recall),
            cell(a.mean_f1),
            a.n_factoid.to_string(),
            cell(a.sacc),
            cell(a.lacc),
            cell(a.mrr),
            a.n_list.to_string(),
            cell(a.list_precision),
            cell(a.list_recall),
            cell(a.list_f1),
        ]
        .join(",");
        format!("{CSV_HEADER}\n{row}\n")
    }

    pub fn save_csv(&self, path: impl AsRef<Path>, run_name: &str) -> Result<()> {
        let csv = self.csv_summary(run_name);
        write_atomic(path, |w| w.write_all(csv.as_bytes()))
    }
}
