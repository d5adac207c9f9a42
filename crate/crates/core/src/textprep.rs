//! Text normalization: Unicode cleanup, punctuation stripping, stopword
//! removal and Porter stemming.
//!
//! The pipeline runs in a fixed order:
//!
//! 1. NFKC normalization
//! 2. lowercasing (optional), followed by a second NFKC pass
//! 3. replacement of every non-alphanumeric, non-whitespace character with a
//!    space (optional)
//! 4. whitespace tokenization
//! 5. stopword removal (compared case-insensitively)
//! 6. stemming (optional)
//!
//! Digits are kept, so gene and variant names such as `brca1` or `v600e`
//! survive as single tokens.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

const DEFAULT_STOPWORDS: &str = include_str!("../fixtures/stopwords_en.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Stemmer {
    #[default]
    Porter,
    None,
}

/// Immutable preprocessing configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineConfig {
    stopwords: BTreeSet<String>,
    strip_punctuation: bool,
    stemmer: Stemmer,
    lowercase: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            stopwords: default_stopwords(),
            strip_punctuation: true,
            stemmer: Stemmer::Porter,
            lowercase: true,
        }
    }
}

impl PipelineConfig {
    /// Builds a configuration; stopwords are lowercased on the way in.
    pub fn new<I, S>(stopwords: I, strip_punctuation: bool, stemmer: Stemmer, lowercase: bool) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self {
            stopwords: stopwords.into_iter().map(|s| s.as_ref().to_lowercase()).collect(),
            strip_punctuation,
            stemmer,
            lowercase,
        }
    }

    pub fn with_stemmer(mut self, stemmer: Stemmer) -> Self {
        self.stemmer = stemmer;
        self
    }

    pub fn with_stopwords(mut self, stopwords: BTreeSet<String>) -> Self {
        self.stopwords = stopwords.into_iter().map(|s| s.to_lowercase()).collect();
        self
    }

    pub fn stopwords(&self) -> &BTreeSet<String> {
        &self.stopwords
    }

    pub fn stemmer(&self) -> Stemmer {
        self.stemmer
    }

    pub fn strip_punctuation(&self) -> bool {
        self.strip_punctuation
    }

    pub fn lowercase(&self) -> bool {
        self.lowercase
    }
}

/// Characters removed by punctuation stripping.
pub fn is_punctuation(c: char) -> bool {
    !c.is_alphanumeric() && !c.is_whitespace()
}

pub fn preprocess(text: &str, cfg: &PipelineConfig) -> Vec<String> {
    let mut normalized: String = text.nfkc().collect();
    if cfg.lowercase {
        normalized = normalized.to_lowercase().nfkc().collect();
    }
    if cfg.strip_punctuation {
        normalized = normalized
            .chars()
            .map(|c| if is_punctuation(c) { ' ' } else { c })
            .collect();
    }

    normalized
        .split_whitespace()
        .filter(|tok| !is_stopword(tok, cfg))
        .filter_map(|tok| {
            let tok = match cfg.stemmer {
                Stemmer::Porter => stem(tok),
                Stemmer::None => tok.to_string(),
            };
            (!tok.is_empty()).then_some(tok)
        })
        .collect()
}

fn is_stopword(tok: &str, cfg: &PipelineConfig) -> bool {
    if cfg.stopwords.contains(tok) {
        return true;
    }
    !cfg.lowercase && cfg.stopwords.contains(&tok.to_lowercase())
}

// The Porter algorithm is only defined over ASCII letters; anything else is
// passed through unchanged.
fn stem(tok: &str) -> String {
    if tok.bytes().all(|b| b.is_ascii_lowercase()) {
        porter_stemmer::stem(tok)
    } else {
        tok.to_string()
    }
}

/// Reads a one-word-per-line stopword file. Blank lines and lines starting
/// with `#` are skipped.
pub fn load_stopwords(path: impl AsRef<Path>) -> Result<BTreeSet<String>> {
    let text = fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
    Ok(parse_stopwords(&text))
}

pub fn parse_stopwords(text: &str) -> BTreeSet<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

/// The bundled English list.
pub fn default_stopwords() -> BTreeSet<String> {
    parse_stopwords(DEFAULT_STOPWORDS)
}
