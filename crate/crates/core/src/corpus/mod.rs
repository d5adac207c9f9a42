//! BioASQ ingestion, the abstract store and PubMed fetching.

mod fetch;
mod store;

pub use fetch::{fetch_abstracts, parse_pubmed_xml, AbstractFetcher, API_KEY_ENV, DEFAULT_EFETCH_ENDPOINT, EutilsFetcher, FetchError, FetchOptions, FetchOutcome};
pub use store::{AbstractDoc, DocumentStore};

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuestionType {
    Factoid,
    List,
}

impl QuestionType {
    pub fn all() -> BTreeSet<QuestionType> {
        BTreeSet::from([QuestionType::Factoid, QuestionType::List])
    }
}

impl fmt::Display for QuestionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QuestionType::Factoid => "factoid",
            QuestionType::List => "list",
        })
    }
}

impl FromStr for QuestionType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "factoid" => Ok(QuestionType::Factoid),
            "list" => Ok(QuestionType::List),
            other => Err(Error::Precondition(format!("unsupported question type `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snippet {
    pub doc_id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub begin_offset: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end_offset: Option<usize>,
}

/// One golden entity together with its accepted surface forms.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AnswerVariantGroup {
    pub variants: Vec<String>,
}

impl AnswerVariantGroup {
    pub fn new<I, S>(variants: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            variants: variants.into_iter().map(Into::into).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub body: String,
    pub qtype: QuestionType,
    pub golden_doc_ids: Vec<String>,
    #[serde(default)]
    pub snippets: Vec<Snippet>,
    #[serde(default)]
    pub exact_answers: Vec<AnswerVariantGroup>,
}

/// Takes the trailing path segment of a PubMed URL; bare IDs pass through.
pub fn normalize_doc_id(reference: &str) -> String {
    reference
        .trim()
        .trim_end_matches('/')
        .rsplit('/')
        .next()
        .unwrap_or("")
        .to_string()
}

pub fn load_bioasq(
    path: impl AsRef<Path>,
    allowed_types: &BTreeSet<QuestionType>,
) -> Result<(Vec<Question>, DocumentStore)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_bioasq(&text, allowed_types)
}

/// Parses a BioASQ JSON dump.
///
/// Questions of other types (yes/no, summary) are dropped. The returned store
/// holds one entry per referenced document; entries whose text was not
/// embedded in the dump are stubs with an empty abstract, to be filled by
/// [`fetch_abstracts`].
pub fn parse_bioasq(
    text: &str,
    allowed_types: &BTreeSet<QuestionType>,
) -> Result<(Vec<Question>, DocumentStore)> {
    let root: Value =
        serde_json::from_str(text).map_err(|e| Error::MalformedDataset(e.to_string()))?;
    let raw_questions = root
        .get("questions")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::MalformedDataset("missing top-level `questions` array".into()))?;

    let mut questions = Vec::new();
    let mut store = DocumentStore::new();
    let mut seen_ids = HashSet::new();

    for (i, raw) in raw_questions.iter().enumerate() {
        let field = |name: &str| {
            raw.get(name)
                .and_then(Value::as_str)
                .ok_or_else(|| Error::MalformedDataset(format!("question {i}: missing string field `{name}`")))
        };
        let id = field("id")?.trim().to_string();
        if id.is_empty() {
            return Err(Error::MalformedDataset(format!("question {i}: empty id")));
        }
        if !seen_ids.insert(id.clone()) {
            return Err(Error::MalformedDataset(format!("duplicate question id `{id}`")));
        }
        let body = field("body")?.to_string();
        let Ok(qtype) = field("type")?.parse::<QuestionType>() else {
            continue;
        };
        if !allowed_types.contains(&qtype) {
            continue;
        }

        let mut golden_doc_ids: Vec<String> = Vec::new();
        let push_doc = |doc_id: String, ids: &mut Vec<String>| {
            if !doc_id.is_empty() && !ids.contains(&doc_id) {
                ids.push(doc_id);
            }
        };

        for doc in raw.get("documents").and_then(Value::as_array).into_iter().flatten() {
            let parsed = parse_document_ref(doc)
                .ok_or_else(|| Error::MalformedDataset(format!("question `{id}`: bad document reference")))?;
            push_doc(parsed.doc_id.clone(), &mut golden_doc_ids);
            store.merge_reference(parsed);
        }

        let mut snippets = Vec::new();
        for (j, s) in raw.get("snippets").and_then(Value::as_array).into_iter().flatten().enumerate() {
            let text = s.get("text").and_then(Value::as_str).unwrap_or("").to_string();
            let doc_ref = s.get("document").and_then(Value::as_str).ok_or_else(|| {
                Error::MalformedDataset(format!("question `{id}` snippet {j}: missing `document`"))
            })?;
            if text.trim().is_empty() {
                return Err(Error::MalformedDataset(format!("question `{id}` snippet {j}: empty text")));
            }
            let doc_id = normalize_doc_id(doc_ref);
            let begin_offset = s.get("offsetInBeginSection").and_then(Value::as_u64).map(|v| v as usize);
            let end_offset = s.get("offsetInEndSection").and_then(Value::as_u64).map(|v| v as usize);
            if let (Some(b), Some(e)) = (begin_offset, end_offset) {
                if e <= b {
                    return Err(Error::MalformedDataset(format!(
                        "question `{id}` snippet {j}: end offset {e} not after begin offset {b}"
                    )));
                }
            }
            // Snippets are drawn from golden abstracts; a reference missing from
            // `documents` is an omission in the dump.
            if !golden_doc_ids.contains(&doc_id) {
                push_doc(doc_id.clone(), &mut golden_doc_ids);
                store.merge_reference(AbstractDoc::stub(doc_id.clone()));
            }
            snippets.push(Snippet {
                doc_id,
                text,
                begin_offset,
                end_offset,
            });
        }

        let exact_answers = match raw.get("exact_answer") {
            None | Some(Value::Null) => Vec::new(),
            Some(v) => normalize_exact_answer(v, qtype)
                .ok_or_else(|| Error::MalformedDataset(format!("question `{id}`: malformed `exact_answer`")))?,
        };

        questions.push(Question {
            id,
            body,
            qtype,
            golden_doc_ids,
            snippets,
            exact_answers,
        });
    }

    Ok((questions, store))
}

// A document reference is either a URL/ID string or an object carrying the
// abstract inline (`pmid` or `url`, plus `title` and `abstractText`).
fn parse_document_ref(v: &Value) -> Option<AbstractDoc> {
    match v {
        Value::String(s) => Some(AbstractDoc::stub(normalize_doc_id(s))),
        Value::Object(map) => {
            let id = map
                .get("pmid")
                .or_else(|| map.get("url"))
                .or_else(|| map.get("id"))
                .and_then(|v| match v {
                    Value::String(s) => Some(normalize_doc_id(s)),
                    Value::Number(n) => Some(n.to_string()),
                    _ => None,
                })?;
            let title = map.get("title").and_then(Value::as_str).unwrap_or("").to_string();
            let abstract_text = map.get("abstractText").and_then(Value::as_str).unwrap_or("").to_string();
            Some(AbstractDoc {
                doc_id: id,
                title,
                abstract_text,
            })
        }
        _ => None,
    }
}

fn collect_strings(v: &Value, out: &mut Vec<String>) -> Option<()> {
    match v {
        Value::String(s) => {
            let s = s.trim();
            if !s.is_empty() && !out.iter().any(|o| o == s) {
                out.push(s.to_string());
            }
            Some(())
        }
        Value::Array(items) => items.iter().try_for_each(|i| collect_strings(i, out)),
        _ => None,
    }
}

/// Factoid answers collapse into one group; list answers produce one group
/// per top-level element.
fn normalize_exact_answer(v: &Value, qtype: QuestionType) -> Option<Vec<AnswerVariantGroup>> {
    let groups = match (qtype, v) {
        (QuestionType::Factoid, _) => {
            let mut variants = Vec::new();
            collect_strings(v, &mut variants)?;
            vec![AnswerVariantGroup { variants }]
        }
        (QuestionType::List, Value::Array(items)) => items
            .iter()
            .map(|item| {
                let mut variants = Vec::new();
                collect_strings(item, &mut variants).map(|_| AnswerVariantGroup { variants })
            })
            .collect::<Option<Vec<_>>>()?,
        (QuestionType::List, Value::String(_)) => {
            let mut variants = Vec::new();
            collect_strings(v, &mut variants)?;
            vec![AnswerVariantGroup { variants }]
        }
        _ => return None,
    };
    Some(groups.into_iter().filter(|g| !g.variants.is_empty()).collect())
}
