use std::collections::{BTreeMap, BTreeSet};
use std::thread;
use std::time::Duration;

use quick_xml::events::Event;
use quick_xml::Reader;

use super::store::AbstractDoc;
use crate::error::{Error, Result};

/// Environment variable consulted for an NCBI E-utilities API key.
pub const API_KEY_ENV: &str = "NCBI_API_KEY";

pub const DEFAULT_EFETCH_ENDPOINT: &str = "https://eutils.ncbi.nlm.nih.gov/entrez/eutils/efetch.fcgi";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FetchError {
    /// Transient failure; the batch is retried with backoff.
    Network(String),
    /// Failure that retrying will not fix.
    Fatal(String),
}

/// Source of abstracts for a batch of PubMed IDs. IDs absent from the
/// returned list are reported as missing by [`fetch_abstracts`].
pub trait AbstractFetcher {
    fn batch_size(&self) -> usize;
    fn fetch_batch(&self, ids: &[String]) -> std::result::Result<Vec<AbstractDoc>, FetchError>;
}

#[derive(Debug, Clone)]
pub struct FetchOptions {
    /// Pause between consecutive requests.
    pub delay: Duration,
    pub max_retries: u32,
    pub initial_backoff: Duration,
    pub max_backoff: Duration,
}

impl Default for FetchOptions {
    fn default() -> Self {
        Self {
            delay: Duration::from_millis(340),
            max_retries: 4,
            initial_backoff: Duration::from_millis(500),
            max_backoff: Duration::from_secs(8),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FetchOutcome {
    pub docs: BTreeMap<String, AbstractDoc>,
    pub missing: Vec<String>,
}

/// Fetches abstracts batch by batch. Any batch that still fails after the
/// retry budget aborts the whole call and nothing is returned.
pub fn fetch_abstracts(
    ids: &[String],
    fetcher: &dyn AbstractFetcher,
    opts: &FetchOptions,
) -> Result<FetchOutcome> {
    if ids.is_empty() {
        return Err(Error::Precondition("no PubMed IDs to fetch".into()));
    }
    let unique: Vec<String> = ids
        .iter()
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let batch_size = fetcher.batch_size().max(1);

    let mut docs = BTreeMap::new();
    for (i, batch) in unique.chunks(batch_size).enumerate() {
        if i > 0 && !opts.delay.is_zero() {
            thread::sleep(opts.delay);
        }
        for doc in fetch_with_retry(batch, fetcher, opts)? {
            if batch.contains(&doc.doc_id) && !doc.is_stub() {
                docs.insert(doc.doc_id.clone(), doc);
            }
        }
    }
    let missing = unique.into_iter().filter(|id| !docs.contains_key(id)).collect();
    Ok(FetchOutcome { docs, missing })
}

fn fetch_with_retry(
    batch: &[String],
    fetcher: &dyn AbstractFetcher,
    opts: &FetchOptions,
) -> Result<Vec<AbstractDoc>> {
    let mut backoff = opts.initial_backoff;
    let mut attempt = 0;
    loop {
        match fetcher.fetch_batch(batch) {
            Ok(docs) => return Ok(docs),
            Err(FetchError::Fatal(msg)) => return Err(Error::Network(msg)),
            Err(FetchError::Network(msg)) if attempt >= opts.max_retries => {
                return Err(Error::Network(format!("{msg} (gave up after {} attempts)", attempt + 1)))
            }
            Err(FetchError::Network(_)) => {
                thread::sleep(backoff);
                backoff = (backoff * 2).min(opts.max_backoff);
                attempt += 1;
            }
        }
    }
}

/// Blocking client for the NCBI `efetch` endpoint (PubMed XML).
#[derive(Debug, Clone)]
pub struct EutilsFetcher {
    endpoint: String,
    api_key: Option<String>,
    batch_size: usize,
    agent: ureq::Agent,
}

impl EutilsFetcher {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            api_key: None,
            batch_size: 200,
            agent: ureq::AgentBuilder::new().timeout(Duration::from_secs(60)).build(),
        }
    }

    /// Reads the API key from [`API_KEY_ENV`] if set.
    pub fn from_env(endpoint: impl Into<String>) -> Self {
        let key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        Self::new(endpoint).with_api_key(key)
    }

    pub fn with_api_key(mut self, key: Option<String>) -> Self {
        self.api_key = key;
        self
    }

    /// Capped at 200 IDs per request.
    pub fn with_batch_size(mut self, n: usize) -> Self {
        self.batch_size = n.clamp(1, 200);
        self
    }
}

impl Default for EutilsFetcher {
    fn default() -> Self {
        Self::from_env(DEFAULT_EFETCH_ENDPOINT)
    }
}

impl AbstractFetcher for EutilsFetcher {
    fn batch_size(&self) -> usize {
        self.batch_size
    }

    fn fetch_batch(&self, ids: &[String]) -> std::result::Result<Vec<AbstractDoc>, FetchError> {
        let mut req = self
            .agent
            .get(&self.endpoint)
            .query("db", "pubmed")
            .query("retmode", "xml")
            .query("id", &ids.join(","));
        if let Some(key) = &self.api_key {
            req = req.query("api_key", key);
        }
        let body = match req.call() {
            Ok(resp) => resp.into_string().map_err(|e| FetchError::Network(e.to_string()))?,
            Err(ureq::Error::Status(code, _)) if code == 429 || code >= 500 => {
                return Err(FetchError::Network(format!("HTTP {code}")))
            }
            Err(ureq::Error::Status(code, _)) => return Err(FetchError::Fatal(format!("HTTP {code}"))),
            Err(e) => return Err(FetchError::Network(e.to_string())),
        };
        parse_pubmed_xml(&body).map_err(FetchError::Fatal)
    }
}

/// Extracts `(PMID, title, abstract)` triples from a `PubmedArticleSet`.
/// Structured abstracts (several `AbstractText` sections) are joined with a
/// single space.
pub fn parse_pubmed_xml(xml: &str) -> std::result::Result<Vec<AbstractDoc>, String> {
    let mut reader = Reader::from_str(xml);

    let mut path: Vec<String> = Vec::new();
    let mut out = Vec::new();
    let mut pmid = String::new();
    let mut title = String::new();
    let mut sections: Vec<String> = Vec::new();

    let within = |path: &[String], tail: &[&str]| -> bool {
        path.len() >= tail.len() && path[path.len() - tail.len()..].iter().zip(tail).all(|(a, b)| a == b)
    };

    loop {
        match reader.read_event() {
            Err(e) => return Err(format!("XML error at byte {}: {e}", reader.buffer_position())),
            Ok(Event::Eof) => break,
            Ok(Event::Start(e)) => {
                let name = String::from_utf8_lossy(e.name().as_ref()).into_owned();
                if name == "PubmedArticle" {
                    pmid.clear();
                    title.clear();
                    sections.clear();
                }
                if name == "AbstractText" {
                    sections.push(String::new());
                }
                path.push(name);
            }
            Ok(Event::End(_)) => {
                if path.last().map(String::as_str) == Some("PubmedArticle") {
                    let abstract_text = collapse_whitespace(&sections.join(" "));
                    if !pmid.is_empty() {
                        out.push(AbstractDoc {
                            doc_id: pmid.clone(),
                            title: collapse_whitespace(&title),
                            abstract_text,
                        });
                    }
                }
                path.pop();
            }
            Ok(Event::Text(t)) => {
                let text = t.unescape().map_err(|e| e.to_string())?;
                append_text(&path, &text, &mut pmid, &mut title, &mut sections, &within);
            }
            Ok(Event::CData(t)) => {
                let text = String::from_utf8_lossy(&t).into_owned();
                append_text(&path, &text, &mut pmid, &mut title, &mut sections, &within);
            }
            Ok(_) => {}
        }
    }
    Ok(out)
}

fn append_text(
    path: &[String],
    text: &str,
    pmid: &mut String,
    title: &mut String,
    sections: &mut [String],
    within: &dyn Fn(&[String], &[&str]) -> bool,
) {
    if within(path, &["PubmedArticle", "MedlineCitation", "PMID"]) {
        pmid.push_str(text.trim());
    } else if path.iter().any(|p| p == "ArticleTitle") && path.iter().any(|p| p == "Article") {
        title.push_str(text);
    } else if path.iter().any(|p| p == "AbstractText") && path.iter().any(|p| p == "Abstract") {
        if let Some(last) = sections.last_mut() {
            last.push_str(text);
        }
    }
}

fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::Cell;

    struct Flaky {
        failures: Cell<u32>,
    }

    impl AbstractFetcher for Flaky {
        fn batch_size(&self) -> usize {
            2
        }

        fn fetch_batch(&self, ids: &[String]) -> std::result::Result<Vec<AbstractDoc>, FetchError> {
            if self.failures.get() > 0 {
                self.failures.set(self.failures.get() - 1);
                return Err(FetchError::Network("reset".into()));
            }
            Ok(ids
                .iter()
                .filter(|id| id.as_str() != "404")
                .map(|id| AbstractDoc {
                    doc_id: id.clone(),
                    title: String::new(),
                    abstract_text: format!("abstract {id}"),
                })
                .collect())
        }
    }

    fn quick() -> FetchOptions {
        FetchOptions {
            delay: Duration::ZERO,
            max_retries: 3,
            initial_backoff: Duration::from_millis(1),
            max_backoff: Duration::from_millis(4),
        }
    }

    fn ids(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn empty_ids_rejected() {
        let f = Flaky { failures: Cell::new(0) };
        assert!(matches!(fetch_abstracts(&[], &f, &quick()), Err(Error::Precondition(_))));
    }

    #[test]
    fn retries_then_succeeds() {
        let f = Flaky { failures: Cell::new(2) };
        let out = fetch_abstracts(&ids(&["3", "1", "404"]), &f, &quick()).unwrap();
        assert_eq!(out.docs.keys().collect::<Vec<_>>(), vec!["1", "3"]);
        assert_eq!(out.missing, vec!["404"]);
    }

    #[test]
    fn gives_up_without_partial_result() {
        let f = Flaky { failures: Cell::new(100) };
        assert!(matches!(fetch_abstracts(&ids(&["1"]), &f, &quick()), Err(Error::Network(_))));
    }

    #[test]
    fn parses_structured_abstracts() {
        let xml = r#"<?xml version="1.0"?>
<PubmedArticleSet>
 <PubmedArticle>
  <MedlineCitation>
   <PMID Version="1">123</PMID>
   <Article>
    <ArticleTitle>BRCA1 &amp; repair</ArticleTitle>
    <Abstract>
     <AbstractText Label="BACKGROUND">First <i>part</i>.</AbstractText>
     <AbstractText Label="RESULTS">Second part.</AbstractText>
    </Abstract>
   </Article>
   <CommentsCorrectionsList>
    <CommentsCorrections><PMID>999</PMID></CommentsCorrections>
   </CommentsCorrectionsList>
  </MedlineCitation>
 </PubmedArticle>
 <PubmedArticle>
  <MedlineCitation><PMID>456</PMID><Article><ArticleTitle>No abstract</ArticleTitle></Article></MedlineCitation>
 </PubmedArticle>
</PubmedArticleSet>"#;
        let docs = parse_pubmed_xml(xml).unwrap();
        assert_eq!(docs.len(), 2);
        assert_eq!(docs[0].doc_id, "123");
        assert_eq!(docs[0].title, "BRCA1 & repair");
        assert_eq!(docs[0].abstract_text, "First part. Second part.");
        assert!(docs[1].is_stub());
    }
}
