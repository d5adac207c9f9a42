//! Cosine ranking of abstracts by topic distribution.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap};
use std::path::Path;

use ndarray::{Array2, ArrayView1, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::DocumentStore;
use crate::error::{Error, Result};
use crate::io::{read_json, write_json};
use crate::lda::{DocTopicDist, TopicModel};
use crate::textprep::{preprocess, PipelineConfig};
use crate::vocab::Vocabulary;

pub const DEFAULT_K: usize = 10;

/// Per-document topic distributions, one row per document.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicIndex {
    doc_ids: Vec<String>,
    thetas: Array2<f64>,
    norms: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub doc_id: String,
    pub score: f64,
}

/// Scores in non-increasing order, ties by ascending doc id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RankedList {
    pub entries: Vec<RankedEntry>,
}

impl RankedList {
    pub fn doc_ids(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.doc_id.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Question id to ranked documents, the run file layout.
pub type RunFile = BTreeMap<String, RankedList>;

pub fn save_run(path: impl AsRef<Path>, run: &RunFile) -> Result<()> {
    write_json(path, run)
}

pub fn load_run(path: impl AsRef<Path>) -> Result<RunFile> {
    read_json(path)
}

/// Infers a topic distribution for every stored document, in store order.
pub fn build_index(
    model: &TopicModel,
    store: &DocumentStore,
    prep: &PipelineConfig,
    vocab: &Vocabulary,
) -> Result<TopicIndex> {
    check_dims(model, vocab)?;
    let docs: Vec<_> = store.iter().collect();
    let thetas = docs
        .par_iter()
        .map(|d| model.infer(&vocab.to_bow(&preprocess(&d.full_text(), prep))))
        .collect::<Result<Vec<DocTopicDist>>>()?;
    TopicIndex::from_rows(
        docs.iter().map(|d| d.doc_id.clone()).collect(),
        thetas.iter().map(|t| t.theta().to_vec()).collect(),
        model.num_topics(),
    )
}

fn check_dims(model: &TopicModel, vocab: &Vocabulary) -> Result<()> {
    if model.vocab_size() != vocab.len() {
        return Err(Error::DimensionMismatch(format!(
            "model vocabulary size {} vs dictionary size {}",
            model.vocab_size(),
            vocab.len()
        )));
    }
    Ok(())
}

/// Ranks indexed documents against a question body.
pub fn query(
    index: &TopicIndex,
    model: &TopicModel,
    vocab: &Vocabulary,
    prep: &PipelineConfig,
    question_body: &str,
    k: usize,
) -> Result<RankedList> {
    check_dims(model, vocab)?;
    let theta = model.infer(&vocab.to_bow(&preprocess(question_body, prep)))?;
    index.rank(theta.theta(), k)
}

#[derive(Debug, PartialEq)]
struct Scored<'a> {
    score: f64,
    doc_id: &'a str,
    row: usize,
}

impl Eq for Scored<'_> {}

// Greater means ranked earlier.
impl Ord for Scored<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.score
            .total_cmp(&other.score)
            .then_with(|| other.doc_id.cmp(self.doc_id))
            .then_with(|| other.row.cmp(&self.row))
    }
}

impl PartialOrd for Scored<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl TopicIndex {
    /// Builds an index from explicit rows of length `num_topics`.
    pub fn from_rows(doc_ids: Vec<String>, rows: Vec<Vec<f64>>, num_topics: usize) -> Result<Self> {
        if doc_ids.len() != rows.len() {
            return Err(Error::DimensionMismatch(format!("{} ids for {} rows", doc_ids.len(), rows.len())));
        }
        let mut thetas = Array2::zeros((rows.len(), num_topics));
        for (i, row) in rows.iter().enumerate() {
            if row.len() != num_topics {
                return Err(Error::DimensionMismatch(format!("row {i} has {} entries, expected {num_topics}", row.len())));
            }
            for (j, &v) in row.iter().enumerate() {
                thetas[[i, j]] = v;
            }
        }
        let norms = thetas.axis_iter(Axis(0)).map(l2).collect();
        Ok(Self { doc_ids, thetas, norms })
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn thetas(&self) -> &Array2<f64> {
        &self.thetas
    }

    pub fn norms(&self) -> &[f64] {
        &self.norms
    }

    /// Cosine similarity of `theta_q` against row `i`, clamped to [0, 1].
    pub fn cosine(&self, theta_q: &[f64], i: usize) -> f64 {
        let q_norm = theta_q.iter().map(|v| v * v).sum::<f64>().sqrt();
        debug_assert!(q_norm > 0.0 && self.norms[i] > 0.0, "zero-norm topic distribution");
        let dot: f64 = self.thetas.row(i).iter().zip(theta_q).map(|(a, b)| a * b).sum();
        (dot / (q_norm * self.norms[i])).clamp(0.0, 1.0)
    }

    /// Top-`k` documents by cosine similarity.
    pub fn rank(&self, theta_q: &[f64], k: usize) -> Result<RankedList> {
        if k == 0 {
            return Err(Error::Precondition("k must be >= 1".into()));
        }
        if self.is_empty() {
            return Err(Error::EmptyIndex);
        }
        if theta_q.len() != self.thetas.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "query has {} topics, index has {}",
                theta_q.len(),
                self.thetas.ncols()
            )));
        }
        let mut heap: BinaryHeap<Reverse<Scored>> = BinaryHeap::with_capacity(k + 1);
        for (row, doc_id) in self.doc_ids.iter().enumerate() {
            heap.push(Reverse(Scored {
                score: self.cosine(theta_q, row),
                doc_id,
                row,
            }));
            if heap.len() > k {
                heap.pop();
            }
        }
        // Ascending order of Reverse = best first.
        let entries = heap
            .into_sorted_vec()
            .into_iter()
            .map(|Reverse(s)| RankedEntry {
                doc_id: s.doc_id.to_string(),
                score: s.score,
            })
            .collect();
        Ok(RankedList { entries })
    }
}

fn l2(v: ArrayView1<f64>) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::AbstractDoc;
    use crate::lda::LdaHyperParams;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("d{i:03}")).collect()
    }

    #[test]
    fn identical_theta_scores_one() {
        let rows = vec![vec![0.2, 0.3, 0.5], vec![0.6, 0.2, 0.2]];
        let index = TopicIndex::from_rows(ids(2), rows, 3).unwrap();
        let ranked = index.rank(&[0.6, 0.2, 0.2], 2).unwrap();
        assert_eq!(ranked.entries[0].doc_id, "d001");
        assert!((ranked.entries[0].score - 1.0).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_scores_zero() {
        let index = TopicIndex::from_rows(ids(1), vec![vec![0.0, 1.0]], 2).unwrap();
        assert_eq!(index.rank(&[1.0, 0.0], 1).unwrap().entries[0].score, 0.0);
    }

    #[test]
    fn ties_break_by_doc_id() {
        let index = TopicIndex::from_rows(
            vec!["b".into(), "c".into(), "a".into()],
            vec![vec![0.5, 0.5], vec![0.9, 0.1], vec![0.5, 0.5]],
            2,
        )
        .unwrap();
        let ranked = index.rank(&[0.5, 0.5], 3).unwrap();
        assert_eq!(ranked.doc_ids(), vec!["a", "b", "c"]);
        assert_eq!(index.rank(&[0.5, 0.5], 10).unwrap().len(), 3);
    }

    #[test]
    fn errors() {
        let empty = TopicIndex::from_rows(vec![], vec![], 2).unwrap();
        assert!(matches!(empty.rank(&[0.5, 0.5], 3), Err(Error::EmptyIndex)));
        let index = TopicIndex::from_rows(ids(1), vec![vec![0.5, 0.5]], 2).unwrap();
        assert!(index.rank(&[0.5, 0.5], 0).is_err());
        assert!(matches!(index.rank(&[1.0], 1), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn rescaling_query_keeps_ranking() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rows: Vec<Vec<f64>> = (0..50).map(|_| DocTopicDist::from_weights(&[rng.gen(), rng.gen(), rng.gen(), rng.gen()]).theta().to_vec()).collect();
        let index = TopicIndex::from_rows(ids(50), rows, 4).unwrap();
        let q = DocTopicDist::from_weights(&[0.1, 0.5, 0.3, 0.1]);
        let scaled: Vec<f64> = q.theta().iter().map(|v| v * 7.3).collect();
        let a = index.rank(q.theta(), 10).unwrap();
        let b = index.rank(&scaled, 10).unwrap();
        assert_eq!(a.doc_ids(), b.doc_ids());
        for (x, y) in a.entries.iter().zip(&b.entries) {
            assert!((x.score - y.score).abs() < 1e-12);
        }
    }

    #[test]
    fn index_from_store() {
        let docs = ["gene expression in tumour cells", "protein folding kinetics", "tumour suppressor gene"];
        let store: DocumentStore = docs
            .iter()
            .enumerate()
            .map(|(i, t)| AbstractDoc { doc_id: i.to_string(), title: String::new(), abstract_text: t.to_string() })
            .collect();
        let prep = PipelineConfig::default();
        let tokens: Vec<Vec<String>> = store.iter().map(|d| preprocess(&d.full_text(), &prep)).collect();
        let vocab = Vocabulary::build(&tokens, 1, 1.0).unwrap();
        let model = TopicModel::init(&LdaHyperParams { num_topics: 2, ..Default::default() }, vocab.len(), 1).unwrap();

        let index = build_index(&model, &store, &prep, &vocab).unwrap();
        assert_eq!(index.len(), 3);
        for row in index.thetas().axis_iter(Axis(0)) {
            assert!((row.sum() - 1.0).abs() < 1e-9);
        }
        for (i, &n) in index.norms().iter().enumerate() {
            assert!((n - l2(index.thetas().row(i))).abs() < 1e-12);
        }
        assert_eq!(index, build_index(&model, &store, &prep, &vocab).unwrap());
        assert!(build_index(&model, &DocumentStore::new(), &prep, &vocab).unwrap().is_empty());

        let ranked = query(&index, &model, &vocab, &prep, "tumour gene", 2).unwrap();
        assert_eq!(ranked.len(), 2);

        let other = TopicModel::init(&LdaHyperParams { num_topics: 2, ..Default::default() }, vocab.len() + 1, 1).unwrap();
        assert!(matches!(build_index(&other, &store, &prep, &vocab), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn run_file_round_trip() {
        let mut run = RunFile::new();
        run.insert("q1".into(), RankedList { entries: vec![RankedEntry { doc_id: "1".into(), score: 0.5 }] });
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        save_run(&path, &run).unwrap();
        assert_eq!(load_run(&path).unwrap(), run);
    }
}
