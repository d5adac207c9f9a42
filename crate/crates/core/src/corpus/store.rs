use std::fs;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::write_atomic;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbstractDoc {
    pub doc_id: String,
    #[serde(default)]
    pub title: String,
    pub abstract_text: String,
}

impl AbstractDoc {
    /// A referenced document whose text has not been fetched yet.
    pub fn stub(doc_id: impl Into<String>) -> Self {
        Self {
            doc_id: doc_id.into(),
            title: String::new(),
            abstract_text: String::new(),
        }
    }

    pub fn is_stub(&self) -> bool {
        self.abstract_text.trim().is_empty()
    }

    /// Title and abstract joined, the text the topic model sees.
    pub fn full_text(&self) -> String {
        if self.title.is_empty() {
            self.abstract_text.clone()
        } else {
            format!("{} {}", self.title, self.abstract_text)
        }
    }
}

/// Abstracts keyed by PubMed ID, iterated in insertion order.
#[derive(Debug, Clone, Default)]
pub struct DocumentStore {
    docs: IndexMap<String, AbstractDoc>,
}

// Equality is order-sensitive, unlike `IndexMap`'s.
impl PartialEq for DocumentStore {
    fn eq(&self, other: &Self) -> bool {
        self.docs.len() == other.docs.len() && self.docs.values().eq(other.docs.values())
    }
}

impl Eq for DocumentStore {}

impl DocumentStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn get(&self, doc_id: &str) -> Option<&AbstractDoc> {
        self.docs.get(doc_id)
    }

    pub fn contains(&self, doc_id: &str) -> bool {
        self.docs.contains_key(doc_id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &AbstractDoc> {
        self.docs.values()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.docs.keys().map(String::as_str)
    }

    /// Inserts a document, failing on a duplicate ID.
    pub fn insert(&mut self, doc: AbstractDoc) -> Result<()> {
        if self.docs.contains_key(&doc.doc_id) {
            return Err(Error::MalformedDataset(format!("duplicate doc_id `{}`", doc.doc_id)));
        }
        self.docs.insert(doc.doc_id.clone(), doc);
        Ok(())
    }

    /// Adds a reference; an existing stub is upgraded in place if `doc`
    /// carries text.
    pub(crate) fn merge_reference(&mut self, doc: AbstractDoc) {
        match self.docs.get_mut(&doc.doc_id) {
            Some(existing) if existing.is_stub() && !doc.is_stub() => *existing = doc,
            Some(_) => {}
            None => {
                self.docs.insert(doc.doc_id.clone(), doc);
            }
        }
    }

    /// Replaces stubs (or appends new entries) with fetched abstracts.
    pub fn fill<I: IntoIterator<Item = AbstractDoc>>(&mut self, fetched: I) {
        for doc in fetched {
            match self.docs.get_mut(&doc.doc_id) {
                Some(existing) => *existing = doc,
                None => {
                    self.docs.insert(doc.doc_id.clone(), doc);
                }
            }
        }
    }

    pub fn unfetched_ids(&self) -> Vec<String> {
        self.docs.values().filter(|d| d.is_stub()).map(|d| d.doc_id.clone()).collect()
    }

    /// The documents that have text, in the same order.
    pub fn complete(&self) -> DocumentStore {
        DocumentStore {
            docs: self
                .docs
                .iter()
                .filter(|(_, d)| !d.is_stub())
                .map(|(k, d)| (k.clone(), d.clone()))
                .collect(),
        }
    }

    /// Keeps only the listed IDs, preserving store order.
    pub fn restricted_to<'a, I: IntoIterator<Item = &'a str>>(&self, ids: I) -> DocumentStore {
        let keep: std::collections::HashSet<&str> = ids.into_iter().collect();
        DocumentStore {
            docs: self
                .docs
                .iter()
                .filter(|(k, _)| keep.contains(k.as_str()))
                .map(|(k, d)| (k.clone(), d.clone()))
                .collect(),
        }
    }

    /// Newline-delimited JSON, one document per line.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path, |w| {
            for doc in self.docs.values() {
                serde_json::to_writer(&mut *w, doc).map_err(std::io::Error::from)?;
                w.write_all(b"\n")?;
            }
            Ok(())
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_ndjson(&text)
    }

    pub fn from_ndjson(text: &str) -> Result<Self> {
        let mut store = DocumentStore::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let doc: AbstractDoc = serde_json::from_str(line)
                .map_err(|e| Error::MalformedDataset(format!("store line {}: {e}", n + 1)))?;
            store.insert(doc)?;
        }
        Ok(store)
    }
}

impl FromIterator<AbstractDoc> for DocumentStore {
    /// Later duplicates are dropped.
    fn from_iter<T: IntoIterator<Item = AbstractDoc>>(iter: T) -> Self {
        let mut store = DocumentStore::new();
        for doc in iter {
            store.docs.entry(doc.doc_id.clone()).or_insert(doc);
        }
        store
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.ndjson");
        DocumentStore::new().save(&path).unwrap();
        assert_eq!(DocumentStore::load(&path).unwrap(), DocumentStore::new());
    }

    #[test]
    fn corrupted_file() {
        assert!(matches!(
            DocumentStore::from_ndjson("{\"doc_id\": \"1\", \"abstract_text\": \"x\"}\n{not json"),
            Err(Error::MalformedDataset(_))
        ));
        let dup = "{\"doc_id\":\"1\",\"abstract_text\":\"x\"}\n{\"doc_id\":\"1\",\"abstract_text\":\"y\"}\n";
        assert!(DocumentStore::from_ndjson(dup).is_err());
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(DocumentStore::load("/nonexistent/store.ndjson"), Err(Error::Io { .. })));
    }

    #[test]
    fn equality_respects_order() {
        let a: DocumentStore = [AbstractDoc::stub("1"), AbstractDoc::stub("2")].into_iter().collect();
        let b: DocumentStore = [AbstractDoc::stub("2"), AbstractDoc::stub("1")].into_iter().collect();
        assert_ne!(a, b);
    }

    #[test]
    fn stubs_and_fill() {
        let mut store = DocumentStore::new();
        store.merge_reference(AbstractDoc::stub("1"));
        store.merge_reference(AbstractDoc::stub("2"));
        assert_eq!(store.unfetched_ids(), vec!["1", "2"]);
        store.fill([AbstractDoc {
            doc_id: "2".into(),
            title: String::new(),
            abstract_text: "text".into(),
        }]);
        assert_eq!(store.unfetched_ids(), vec!["1"]);
        assert_eq!(store.complete().ids().collect::<Vec<_>>(), vec!["2"]);
        assert_eq!(store.ids().collect::<Vec<_>>(), vec!["1", "2"]);
    }

    fn arb_doc() -> impl Strategy<Value = AbstractDoc> {
        ("[0-9]{1,9}", "\\PC{0,20}", "\\PC{1,60}").prop_map(|(doc_id, title, abstract_text)| AbstractDoc {
            doc_id,
            title,
            abstract_text,
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn round_trip_preserves_order(docs in prop::collection::vec(arb_doc(), 0..100)) {
            let store: DocumentStore = docs.into_iter().collect();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("s.ndjson");
            store.save(&path).unwrap();
            let back = DocumentStore::load(&path).unwrap();
            prop_assert_eq!(back.ids().collect::<Vec<_>>(), store.ids().collect::<Vec<_>>());
            prop_assert_eq!(back, store);
        }
    }
}
