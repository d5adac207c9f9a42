//! Span-annotated question/context records in SQuAD v2 layout.
//!
//! Offsets are counted in Unicode scalar values (Rust `char`s), not bytes
//! or UTF-16 units. The exported file says so in its `offset_unit` field.
//!
//! ```
//! use topiq::corpus::{AnswerVariantGroup, Question, QuestionType};
//! use topiq::evalmetrics::SynonymLexicon;
//! use topiq::squadgen::annotate;
//!
//! let q = Question {
//!     id: "q1".into(),
//!     body: "Which gene?".into(),
//!     qtype: QuestionType::Factoid,
//!     golden_doc_ids: vec![],
//!     snippets: vec![],
//!     exact_answers: vec![AnswerVariantGroup::new(["BRCA1"])],
//! };
//! let rec = annotate(&q, "the BRCA1 gene regulates", &SynonymLexicon::new());
//! assert_eq!(rec.answers[0].answer_start, 4);
//! assert!(!rec.is_impossible);
//! ```

use std::collections::BTreeSet;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{DocumentStore, Question};
use crate::error::{Error, Result};
use crate::evalmetrics::SynonymLexicon;
use crate::io::{read_json, write_json};

pub const SQUAD_VERSION: &str = "v2.0";
pub const OFFSET_UNIT: &str = "unicode_scalar";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanAnswer {
    pub answer_start: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpanRecord {
    pub question_id: String,
    pub doc_id: Option<String>,
    pub question: String,
    pub context: String,
    pub answers: Vec<SpanAnswer>,
    pub is_impossible: bool,
}

impl SpanRecord {
    /// Unique id of the record within an export.
    pub fn qa_id(&self) -> String {
        match &self.doc_id {
            Some(d) => format!("{}_{d}", self.question_id),
            None => self.question_id.clone(),
        }
    }

    /// Checks that every answer is the exact context slice at its offset and
    /// that `is_impossible` agrees with the answer list.
    pub fn validate(&self) -> Result<()> {
        if self.is_impossible != self.answers.is_empty() {
            return Err(Error::Precondition(format!("{}: is_impossible disagrees with answers", self.qa_id())));
        }
        for a in &self.answers {
            if char_slice(&self.context, a.answer_start, a.text.chars().count()) != Some(a.text.as_str()) {
                return Err(Error::Precondition(format!(
                    "{}: answer {:?} is not the context slice at {}",
                    self.qa_id(),
                    a.text,
                    a.answer_start
                )));
            }
        }
        Ok(())
    }
}

/// The substring covering chars `[start, start + len)`, if in range.
pub fn char_slice(s: &str, start: usize, len: usize) -> Option<&str> {
    let mut bounds = s.char_indices().map(|(i, _)| i).chain(std::iter::once(s.len()));
    let begin = bounds.nth(start)?;
    let end = if len == 0 { begin } else { bounds.nth(len - 1)? };
    Some(&s[begin..end])
}

fn chars_eq_ignore_case(a: char, b: char) -> bool {
    a == b || a.to_lowercase().eq(b.to_lowercase())
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

/// Char offsets of case-insensitive, word-bounded, non-overlapping
/// occurrences of `needle`, scanning left to right.
fn find_all(haystack: &[char], needle: &[char]) -> Vec<usize> {
    let mut out = Vec::new();
    if needle.is_empty() || needle.len() > haystack.len() {
        return out;
    }
    let mut i = 0;
    while i + needle.len() <= haystack.len() {
        let end = i + needle.len();
        let hit = haystack[i..end].iter().zip(needle).all(|(&a, &b)| chars_eq_ignore_case(a, b))
            && (i == 0 || !is_word_char(haystack[i - 1]) || !is_word_char(needle[0]))
            && (end == haystack.len() || !is_word_char(haystack[end]) || !is_word_char(needle[needle.len() - 1]));
        if hit {
            out.push(i);
            i = end;
        } else {
            i += 1;
        }
    }
    out
}

fn overlaps(taken: &[(usize, usize)], start: usize, len: usize) -> bool {
    taken.iter().any(|&(s, l)| start < s + l && s < start + len)
}

/// Occurrences of the winning form among `forms`: the one whose first
/// occurrence is earliest, the longer one on a tie. Spans overlapping
/// `taken` are skipped.
fn best_form(ctx: &[char], forms: &[Vec<char>], taken: &[(usize, usize)]) -> Option<(usize, Vec<usize>)> {
    let mut best: Option<(usize, usize, Vec<usize>)> = None;
    for form in forms {
        let hits: Vec<usize> = find_all(ctx, form).into_iter().filter(|&s| !overlaps(taken, s, form.len())).collect();
        let Some(&first) = hits.first() else { continue };
        let better = match &best {
            None => true,
            Some((b_first, b_len, _)) => first < *b_first || (first == *b_first && form.len() > *b_len),
        };
        if better {
            best = Some((first, form.len(), hits));
        }
    }
    best.map(|(_, len, hits)| (len, hits))
}

fn to_chars(forms: impl IntoIterator<Item = String>) -> Vec<Vec<char>> {
    let unique: BTreeSet<String> = forms.into_iter().map(|f| f.trim().to_string()).filter(|f| !f.is_empty()).collect();
    unique.into_iter().map(|f| f.chars().collect()).collect()
}

/// Locates answer spans for every golden group of `question` in `context`.
/// Golden variants are tried first, lexicon synonyms only when no variant
/// occurs. Answer text is copied from the context, so its case is the
/// context's.
pub fn annotate(question: &Question, context: &str, lex: &SynonymLexicon) -> SpanRecord {
    let ctx: Vec<char> = context.chars().collect();
    let mut taken: Vec<(usize, usize)> = Vec::new();
    for group in &question.exact_answers {
        let variants = to_chars(group.variants.iter().cloned());
        let found = best_form(&ctx, &variants, &taken).or_else(|| {
            let synonyms = to_chars(group.variants.iter().flat_map(|v| lex.synonyms(v)));
            best_form(&ctx, &synonyms, &taken)
        });
        if let Some((len, starts)) = found {
            taken.extend(starts.into_iter().map(|s| (s, len)));
        }
    }
    taken.sort_unstable();
    let answers: Vec<SpanAnswer> = taken
        .into_iter()
        .map(|(start, len)| SpanAnswer {
            answer_start: start,
            text: ctx[start..start + len].iter().collect(),
        })
        .collect();
    SpanRecord {
        question_id: question.id.clone(),
        doc_id: None,
        question: question.body.clone(),
        context: context.to_string(),
        is_impossible: answers.is_empty(),
        answers,
    }
}

/// One record per (question, golden document) pair whose abstract is in
/// the store, in question order then golden-document order. Questions
/// without exact answers are skipped.
pub fn build_records(questions: &[Question], store: &DocumentStore, lex: &SynonymLexicon) -> Vec<SpanRecord> {
    let pairs: Vec<(&Question, &str)> = questions
        .iter()
        .filter(|q| !q.exact_answers.is_empty())
        .flat_map(|q| {
            let mut seen = BTreeSet::new();
            q.golden_doc_ids
                .iter()
                .filter(move |d| seen.insert(d.as_str()))
                .map(move |d| (q, d.as_str()))
        })
        .filter(|(_, d)| store.get(d).is_some_and(|doc| !doc.is_stub()))
        .collect();
    pairs
        .par_iter()
        .map(|&(q, d)| {
            let doc = store.get(d).expect("filtered above");
            let mut rec = annotate(q, &doc.full_text(), lex);
            rec.doc_id = Some(d.to_string());
            rec
        })
        .collect()
}

// Serialized layout. Fields are declared in alphabetical order so the
// output has sorted keys without relying on map ordering.

#[derive(Serialize, Deserialize)]
struct SquadFile {
    comment: String,
    data: Vec<SquadArticle>,
    offset_unit: String,
    version: String,
}

#[derive(Serialize, Deserialize)]
struct SquadArticle {
    paragraphs: Vec<SquadParagraph>,
    title: String,
}

#[derive(Serialize, Deserialize)]
struct SquadParagraph {
    context: String,
    qas: Vec<SquadQa>,
}

#[derive(Serialize, Deserialize)]
struct SquadQa {
    answers: Vec<SpanAnswer>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    doc_id: Option<String>,
    id: String,
    is_impossible: bool,
    question: String,
    question_id: String,
}

/// Writes records as SQuAD v2 JSON, one article per record. Every record
/// is validated first.
pub fn export(records: &[SpanRecord], path: impl AsRef<Path>) -> Result<()> {
    for r in records {
        r.validate()?;
    }
    let file = SquadFile {
        comment: "answer_start counts Unicode scalar values".into(),
        data: records
            .iter()
            .map(|r| SquadArticle {
                paragraphs: vec![SquadParagraph {
                    context: r.context.clone(),
                    qas: vec![SquadQa {
                        answers: r.answers.clone(),
                        doc_id: r.doc_id.clone(),
                        id: r.qa_id(),
                        is_impossible: r.is_impossible,
                        question: r.question.clone(),
                        question_id: r.question_id.clone(),
                    }],
                }],
                title: r.qa_id(),
            })
            .collect(),
        offset_unit: OFFSET_UNIT.into(),
        version: SQUAD_VERSION.into(),
    };
    write_json(path, &file)
}

/// Reads a file written by [`export`] back into records.
pub fn load_squad(path: impl AsRef<Path>) -> Result<Vec<SpanRecord>> {
    let file: SquadFile = read_json(path)?;
    if file.offset_unit != OFFSET_UNIT {
        return Err(Error::MalformedDataset(format!("unsupported offset unit {:?}", file.offset_unit)));
    }
    let mut out = Vec::new();
    for article in file.data {
        for para in article.paragraphs {
            for qa in para.qas {
                out.push(SpanRecord {
                    question_id: qa.question_id,
                    doc_id: qa.doc_id,
                    question: qa.question,
                    context: para.context.clone(),
                    answers: qa.answers,
                    is_impossible: qa.is_impossible,
                });
            }
        }
    }
    Ok(out)
}
