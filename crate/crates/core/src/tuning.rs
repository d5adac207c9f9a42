//! Hyperparameter tuning: CMA-ES over LDA settings, scored by retrieval F1.
//!
//! The fitness of a point is `1 − mean F1@k` over the questions that have
//! golden documents, after training a fresh model on the task corpus with
//! the decoded hyperparameters. The model seed is fixed for the whole
//! search, so equal decoded settings always score the same and are served
//! from a cache.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::cmaes::{estimate_importance, optimize, BipopConfig, GenerationStat, RunSummary, SearchSpace, MIN_IMPORTANCE_RECORDS};
use crate::corpus::{DocumentStore, Question};
use crate::error::{Error, Result};
use crate::evalmetrics::prf;
use crate::lda::{LdaHyperParams, TopicModel};
use crate::retrieval::TopicIndex;
use crate::textprep::{preprocess, PipelineConfig};
use crate::vocab::{BowVector, Vocabulary};

struct TaskQuery {
    bow: BowVector,
    golden: BTreeSet<String>,
}

/// Preprocessed corpus and queries for repeated train-and-rank runs.
pub struct RetrievalTask {
    doc_ids: Vec<String>,
    corpus: Vec<BowVector>,
    queries: Vec<TaskQuery>,
    vocab_size: usize,
    k: usize,
}

impl RetrievalTask {
    /// Uses every fetched document in the store and every question with at
    /// least one golden document.
    pub fn new(questions: &[Question], store: &DocumentStore, prep: &PipelineConfig, vocab: &Vocabulary, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Precondition("k must be >= 1".into()));
        }
        let docs: Vec<_> = store.iter().filter(|d| !d.is_stub()).collect();
        if docs.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let queries: Vec<TaskQuery> = questions
            .iter()
            .filter(|q| !q.golden_doc_ids.is_empty())
            .map(|q| TaskQuery {
                bow: vocab.to_bow(&preprocess(&q.body, prep)),
                golden: q.golden_doc_ids.iter().cloned().collect(),
            })
            .collect();
        if queries.is_empty() {
            return Err(Error::Precondition("no question has golden documents".into()));
        }
        Ok(Self {
            doc_ids: docs.iter().map(|d| d.doc_id.clone()).collect(),
            corpus: docs.iter().map(|d| vocab.to_bow(&preprocess(&d.full_text(), prep))).collect(),
            queries,
            vocab_size: vocab.len(),
            k,
        })
    }

    pub fn num_docs(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn num_queries(&self) -> usize {
        self.queries.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Mean F1@k of `model` over the task queries.
    pub fn mean_f1(&self, model: &TopicModel) -> Result<f64> {
        let rows = self
            .corpus
            .iter()
            .map(|d| model.infer(d).map(|t| t.theta().to_vec()))
            .collect::<Result<Vec<_>>>()?;
        let index = TopicIndex::from_rows(self.doc_ids.clone(), rows, model.num_topics())?;
        let mut total = 0.0;
        for q in &self.queries {
            let theta = model.infer(&q.bow)?;
            let ranked = index.rank(theta.theta(), self.k)?;
            total += prf(&ranked.doc_ids(), &q.golden).f1;
        }
        Ok(total / self.queries.len() as f64)
    }

    /// Trains a fresh model with `hyper` and `seed`, then scores it.
    pub fn train_and_score(&self, hyper: &LdaHyperParams, seed: u64) -> Result<f64> {
        let mut model = TopicModel::init(hyper, self.vocab_size, seed)?;
        model.train(&self.corpus)?;
        self.mean_f1(&model)
    }
}

/// Fitness `1 − mean F1` of unit-cube points, memoized on the decoded
/// hyperparameters.
pub struct LdaObjective<'a> {
    task: &'a RetrievalTask,
    space: &'a SearchSpace,
    base: &'a LdaHyperParams,
    seed: u64,
    cache: Mutex<HashMap<Vec<u64>, f64>>,
}

impl<'a> LdaObjective<'a> {
    pub fn new(task: &'a RetrievalTask, space: &'a SearchSpace, base: &'a LdaHyperParams, seed: u64) -> Self {
        Self {
            task,
            space,
            base,
            seed,
            cache: Mutex::new(HashMap::new()),
        }
    }

    /// Number of distinct settings trained so far.
    pub fn trained(&self) -> usize {
        self.cache.lock().expect("cache lock").len()
    }

    /// Failed trainings score NaN, which the optimizer ranks last.
    pub fn fitness(&self, point: &[f64]) -> f64 {
        let key: Vec<u64> = self.space.decode_values(point).iter().map(|v| v.to_bits()).collect();
        if let Some(&f) = self.cache.lock().expect("cache lock").get(&key) {
            return f;
        }
        let f = match self.space.decode(point, self.base) {
            Ok(h) => self.task.train_and_score(&h, self.seed).map(|f1| 1.0 - f1).unwrap_or(f64::NAN),
            Err(_) => f64::NAN,
        };
        self.cache.lock().expect("cache lock").insert(key, f);
        f
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneConfig {
    pub budget: usize,
    pub seed: u64,
    pub space: SearchSpace,
    /// Values for hyperparameters outside the search space.
    pub base: LdaHyperParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneRecord {
    pub params: BTreeMap<String, f64>,
    pub fitness: f64,
    pub run: usize,
    pub generation: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningReport {
    pub budget: usize,
    pub seed: u64,
    pub k: usize,
    pub space: SearchSpace,
    pub best_params: LdaHyperParams,
    pub best_fitness: f64,
    pub best_mean_f1: f64,
    /// Mean F1 of `base` itself, trained with the same seed.
    pub baseline_mean_f1: f64,
    pub evaluations: usize,
    pub distinct_trainings: usize,
    pub generations: Vec<GenerationStat>,
    pub runs: Vec<RunSummary>,
    /// Absent when too few evaluations succeeded.
    pub importance: Option<BTreeMap<String, f64>>,
    pub archive: Vec<TuneRecord>,
}

/// Runs the BIPOP search and reports the best decoded setting next to the
/// score of the untuned `base` configuration.
pub fn tune(task: &RetrievalTask, config: &TuneConfig) -> Result<TuningReport> {
    config.base.validate()?;
    let objective = LdaObjective::new(task, &config.space, &config.base, config.seed);
    let result = optimize(|x| objective.fitness(x), config.space.len(), &BipopConfig::new(config.budget, config.seed))?;
    if !result.best_fitness.is_finite() {
        return Err(Error::Precondition("every evaluated setting failed to train".into()));
    }
    let names = config.space.names();
    let archive = result
        .archive
        .records()
        .iter()
        .map(|r| TuneRecord {
            params: names.iter().map(|n| n.to_string()).zip(config.space.decode_values(&r.point)).collect(),
            fitness: r.fitness,
            run: r.run,
            generation: r.generation,
        })
        .collect();
    let finite = result.archive.records().iter().filter(|r| !r.failed()).count();
    let importance = if finite >= MIN_IMPORTANCE_RECORDS {
        Some(estimate_importance(&result.archive, &config.space)?)
    } else {
        None
    };
    Ok(TuningReport {
        budget: config.budget,
        seed: config.seed,
        k: task.k(),
        space: config.space.clone(),
        best_params: config.space.decode(&result.best_point, &config.base)?,
        best_fitness: result.best_fitness,
        best_mean_f1: 1.0 - result.best_fitness,
        baseline_mean_f1: task.train_and_score(&config.base, config.seed)?,
        evaluations: result.evaluations,
        distinct_trainings: objective.trained(),
        generations: result.generations,
        runs: result.runs,
        importance,
        archive,
    })
}
