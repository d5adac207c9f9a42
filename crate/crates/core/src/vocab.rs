//! Token dictionary and sparse bag-of-words vectors.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_json, write_json};

/// Dense token ids in first-seen order, with per-token document frequency.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    token_to_id: HashMap<String, u32>,
    id_to_token: Vec<String>,
    doc_freq: Vec<u32>,
    num_docs_seen: u32,
}

#[derive(Serialize, Deserialize)]
struct VocabularyFile {
    tokens: Vec<String>,
    doc_freq: Vec<u32>,
    num_docs: u32,
}

impl Vocabulary {
    /// Builds a vocabulary, dropping tokens whose document frequency is below
    /// `min_df` or above `max_df_frac * D`.
    pub fn build<I, D, S>(token_docs: I, min_df: u32, max_df_frac: f64) -> Result<Self>
    where
        I: IntoIterator<Item = D>,
        D: AsRef<[S]>,
        S: AsRef<str>,
    {
        if min_df < 1 {
            return Err(Error::Precondition("min_df must be at least 1".into()));
        }
        if !(max_df_frac > 0.0 && max_df_frac <= 1.0) {
            return Err(Error::Precondition(format!("max_df_frac {max_df_frac} outside (0, 1]")));
        }

        let mut order: Vec<String> = Vec::new();
        let mut df: HashMap<String, u32> = HashMap::new();
        let mut num_docs = 0u32;
        for doc in token_docs {
            num_docs += 1;
            let mut seen = HashSet::new();
            for tok in doc.as_ref() {
                let tok = tok.as_ref();
                if !seen.insert(tok) {
                    continue;
                }
                match df.get_mut(tok) {
                    Some(n) => *n += 1,
                    None => {
                        df.insert(tok.to_string(), 1);
                        order.push(tok.to_string());
                    }
                }
            }
        }

        let max_df = max_df_frac * f64::from(num_docs);
        let mut vocab = Vocabulary {
            token_to_id: HashMap::new(),
            id_to_token: Vec::new(),
            doc_freq: Vec::new(),
            num_docs_seen: num_docs,
        };
        for tok in order {
            let n = df[&tok];
            if n < min_df || f64::from(n) > max_df {
                continue;
            }
            vocab.token_to_id.insert(tok.clone(), vocab.id_to_token.len() as u32);
            vocab.id_to_token.push(tok);
            vocab.doc_freq.push(n);
        }
        if vocab.is_empty() {
            return Err(Error::EmptyVocabulary);
        }
        Ok(vocab)
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.id_to_token.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.id_to_token
    }

    pub fn doc_freq(&self) -> &[u32] {
        &self.doc_freq
    }

    pub fn num_docs_seen(&self) -> u32 {
        self.num_docs_seen
    }

    /// Counts in-vocabulary tokens; unknown tokens are dropped.
    pub fn to_bow<S: AsRef<str>>(&self, tokens: &[S]) -> BowVector {
        let mut counts: HashMap<u32, u32> = HashMap::new();
        for tok in tokens {
            if let Some(id) = self.id(tok.as_ref()) {
                *counts.entry(id).or_default() += 1;
            }
        }
        let mut entries: Vec<(u32, u32)> = counts.into_iter().collect();
        entries.sort_unstable_by_key(|&(id, _)| id);
        BowVector { entries }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(
            path,
            &VocabularyFile {
                tokens: self.id_to_token.clone(),
                doc_freq: self.doc_freq.clone(),
                num_docs: self.num_docs_seen,
            },
        )
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file: VocabularyFile = read_json(path)?;
        if file.tokens.len() != file.doc_freq.len() {
            return Err(Error::MalformedDataset("vocabulary `tokens` and `doc_freq` lengths differ".into()));
        }
        let mut token_to_id = HashMap::with_capacity(file.tokens.len());
        for (i, tok) in file.tokens.iter().enumerate() {
            if token_to_id.insert(tok.clone(), i as u32).is_some() {
                return Err(Error::MalformedDataset(format!("duplicate vocabulary token `{tok}`")));
            }
        }
        if file.doc_freq.iter().any(|&d| d > file.num_docs) {
            return Err(Error::MalformedDataset("document frequency exceeds document count".into()));
        }
        Ok(Vocabulary {
            token_to_id,
            id_to_token: file.tokens,
            doc_freq: file.doc_freq,
            num_docs_seen: file.num_docs,
        })
    }
}

/// Sparse term counts, sorted by token id.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BowVector {
    entries: Vec<(u32, u32)>,
}

impl BowVector {
    /// Builds a vector from `(id, count)` pairs, merging duplicate ids and
    /// dropping zero counts.
    pub fn from_pairs<I: IntoIterator<Item = (u32, u32)>>(pairs: I) -> Self {
        let mut entries: Vec<(u32, u32)> = pairs.into_iter().filter(|&(_, c)| c > 0).collect();
        entries.sort_unstable_by_key(|&(id, _)| id);
        let mut merged: Vec<(u32, u32)> = Vec::with_capacity(entries.len());
        for (id, c) in entries {
            match merged.last_mut() {
                Some((last, n)) if *last == id => *n += c,
                _ => merged.push((id, c)),
            }
        }
        Self { entries: merged }
    }

    pub fn entries(&self) -> &[(u32, u32)] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn total(&self) -> u64 {
        self.entries.iter().map(|&(_, c)| u64::from(c)).sum()
    }

    pub fn max_id(&self) -> Option<u32> {
        self.entries.last().map(|&(id, _)| id)
    }
}
