use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use super::normalize;
use crate::error::{Error, Result};
use crate::io::write_atomic;

/// Synonym groups keyed by canonical term. Every surface form is stored
/// normalized and each group contains its own canonical term.
#[derive(Debug, Clone, Default)]
pub struct SynonymLexicon {
    groups: BTreeMap<String, BTreeSet<String>>,
    // surface form -> canonical terms of the groups it belongs to
    index: HashMap<String, Vec<String>>,
}

impl PartialEq for SynonymLexicon {
    fn eq(&self, other: &Self) -> bool {
        self.groups == other.groups
    }
}

impl SynonymLexicon {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds (or extends) the group for `canonical`.
    pub fn add_group<I, S>(&mut self, canonical: &str, synonyms: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let canonical = normalize(canonical);
        if canonical.is_empty() {
            return;
        }
        let group = self.groups.entry(canonical.clone()).or_default();
        let mut added = vec![canonical.clone()];
        added.extend(synonyms.into_iter().map(|s| normalize(s.as_ref())).filter(|s| !s.is_empty()));
        for form in added {
            if group.insert(form.clone()) {
                self.index.entry(form).or_default().push(canonical.clone());
            }
        }
    }

    pub fn groups(&self) -> &BTreeMap<String, BTreeSet<String>> {
        &self.groups
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    /// All forms sharing a group with `term`, including `term` itself.
    pub fn synonyms(&self, term: &str) -> BTreeSet<String> {
        let term = normalize(term);
        let mut out = BTreeSet::new();
        if let Some(canonicals) = self.index.get(&term) {
            for c in canonicals {
                out.extend(self.groups[c].iter().cloned());
            }
        }
        out.insert(term);
        out
    }

    /// Parses `canonical TAB synonym TAB ...` lines.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lex = SynonymLexicon::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.strip_suffix('\r').unwrap_or(line);
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split('\t');
            let canonical = fields.next().map(normalize).unwrap_or_default();
            if canonical.is_empty() {
                return Err(Error::MalformedLexicon {
                    line: n + 1,
                    reason: "empty canonical term".into(),
                });
            }
            let synonyms: Vec<&str> = fields.collect();
            if synonyms.iter().any(|s| normalize(s).is_empty()) {
                return Err(Error::MalformedLexicon {
                    line: n + 1,
                    reason: "empty synonym field".into(),
                });
            }
            lex.add_group(&canonical, synonyms);
        }
        Ok(lex)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let text = String::from_utf8(bytes).map_err(|e| Error::MalformedLexicon {
            line: 0,
            reason: format!("invalid UTF-8: {e}"),
        })?;
        Self::parse(&text)
    }

    /// Sorted canonical terms, each followed by its sorted synonyms.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (canonical, forms) in &self.groups {
            out.push_str(canonical);
            for f in forms.iter().filter(|f| *f != canonical) {
                out.push('\t');
                out.push_str(f);
            }
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let tsv = self.to_tsv();
        write_atomic(path, |w| w.write_all(tsv.as_bytes()))
    }
}
