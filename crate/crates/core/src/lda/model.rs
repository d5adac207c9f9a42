use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::math::{dirichlet_expectation, digamma, ln_gamma, log_sum_exp};
use super::{learning_rate, LdaHyperParams};
use crate::error::{Error, Result};
use crate::vocab::BowVector;

// Keeps the per-word normalizer away from zero when every topic assigns a
// word vanishing weight.
const PHI_FLOOR: f64 = 1e-100;

/// Normalized topic proportions of one document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocTopicDist {
    theta: Vec<f64>,
}

impl DocTopicDist {
    /// Normalizes non-negative weights.
    pub fn from_weights(weights: &[f64]) -> Self {
        let total: f64 = weights.iter().sum();
        Self {
            theta: weights.iter().map(|w| w / total).collect(),
        }
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn argmax(&self) -> usize {
        self.theta
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
            .0
    }
}

/// Result of the per-document variational E-step.
#[derive(Debug, Clone, PartialEq)]
pub struct EStep {
    /// Variational Dirichlet parameter over the document's topics.
    pub gamma: Vec<f64>,
    /// Sufficient statistics contribution `n_w * phi_wk`, one K-vector per
    /// distinct word id, in ascending id order.
    pub sstats: Vec<(u32, Vec<f64>)>,
    pub iterations: usize,
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Shuffle document order before every pass with this seed.
    pub shuffle_seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogEntry {
    /// 1-based update count at which the entry was taken.
    pub update: u64,
    pub pass: usize,
    /// Variational bound per word on the mini-batch, before its update.
    pub per_word_bound: f64,
    pub perplexity: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub updates: u64,
    pub entries: Vec<TrainLogEntry>,
}

/// Variational topic-word parameters plus the online-update counters.
#[derive(Debug, Clone)]
pub struct TopicModel {
    hyper: LdaHyperParams,
    lambda: Array2<f64>,
    updates_seen: u64,
    docs_seen: u64,
    elog_beta: Array2<f64>,
    exp_elog_beta: Array2<f64>,
}

impl PartialEq for TopicModel {
    fn eq(&self, other: &Self) -> bool {
        self.hyper == other.hyper
            && self.lambda == other.lambda
            && self.updates_seen == other.updates_seen
            && self.docs_seen == other.docs_seen
    }
}

impl TopicModel {
    /// Fresh model with `lambda` drawn i.i.d. from Gamma(100, 1/100).
    pub fn init(hyper: &LdaHyperParams, vocab_size: usize, seed: u64) -> Result<Self> {
        hyper.validate()?;
        if vocab_size == 0 {
            return Err(Error::InvalidHyperParams("vocabulary size must be >= 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gamma = Gamma::new(100.0, 0.01).expect("valid gamma parameters");
        let lambda = Array2::from_shape_simple_fn((hyper.num_topics, vocab_size), || gamma.sample(&mut rng));
        Self::from_parts(hyper, lambda, 0, 0)
    }

    /// Assembles a model from an explicit `lambda` (K×V, all entries > 0).
    pub fn from_parts(hyper: &LdaHyperParams, lambda: Array2<f64>, updates_seen: u64, docs_seen: u64) -> Result<Self> {
        hyper.validate()?;
        if lambda.nrows() != hyper.num_topics {
            return Err(Error::DimensionMismatch(format!(
                "lambda has {} rows, num_topics is {}",
                lambda.nrows(),
                hyper.num_topics
            )));
        }
        if lambda.ncols() == 0 {
            return Err(Error::InvalidHyperParams("vocabulary size must be >= 1".into()));
        }
        if lambda.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidHyperParams("lambda entries must be finite and > 0".into()));
        }
        let mut model = Self {
            hyper: hyper.resolved(),
            elog_beta: Array2::zeros(lambda.raw_dim()),
            exp_elog_beta: Array2::zeros(lambda.raw_dim()),
            lambda,
            updates_seen,
            docs_seen,
        };
        model.refresh_expectations();
        Ok(model)
    }

    fn refresh_expectations(&mut self) {
        for (k, row) in self.lambda.axis_iter(Axis(0)).enumerate() {
            let total = digamma(row.sum());
            for (w, &v) in row.iter().enumerate() {
                let e = digamma(v) - total;
                self.elog_beta[[k, w]] = e;
                self.exp_elog_beta[[k, w]] = e.exp();
            }
        }
    }

    pub fn hyper(&self) -> &LdaHyperParams {
        &self.hyper
    }

    pub fn num_topics(&self) -> usize {
        self.lambda.nrows()
    }

    pub fn vocab_size(&self) -> usize {
        self.lambda.ncols()
    }

    pub fn lambda(&self) -> &Array2<f64> {
        &self.lambda
    }

    pub fn updates_seen(&self) -> u64 {
        self.updates_seen
    }

    pub fn docs_seen(&self) -> u64 {
        self.docs_seen
    }

    /// Learning rate the next M-step will use.
    pub fn rho(&self) -> f64 {
        learning_rate(self.hyper.offset, self.hyper.decay, self.updates_seen)
    }

    /// Rows of `lambda` normalized to topic-word distributions.
    pub fn topic_word_distributions(&self) -> Array2<f64> {
        let mut out = self.lambda.clone();
        for mut row in out.axis_iter_mut(Axis(0)) {
            let total = row.sum();
            row.mapv_inplace(|v| v / total);
        }
        out
    }

    fn check_doc(&self, doc: &BowVector) -> Result<()> {
        match doc.max_id() {
            Some(id) if id as usize >= self.vocab_size() => Err(Error::DimensionMismatch(format!(
                "token id {id} outside vocabulary of size {}",
                self.vocab_size()
            ))),
            _ => Ok(()),
        }
    }

    /// Coordinate ascent on one document's topic proportions.
    ///
    /// Iterates `gamma_k = alpha + sum_w n_w phi_wk` with
    /// `phi_wk ∝ exp(E[log theta_k]) exp(E[log beta_kw])` until the mean
    /// absolute change drops below `gamma_threshold` or `iterations` is hit.
    pub fn e_step(&self, doc: &BowVector) -> Result<EStep> {
        self.check_doc(doc)?;
        let k = self.num_topics();
        let alpha = self.hyper.alpha();
        let ids: Vec<usize> = doc.entries().iter().map(|&(id, _)| id as usize).collect();
        let counts: Vec<f64> = doc.entries().iter().map(|&(_, c)| f64::from(c)).collect();
        // beta[j * k + t] = exp(E[log beta_t,w_j])
        let beta: Vec<f64> = ids
            .iter()
            .flat_map(|&w| (0..k).map(move |t| (t, w)))
            .map(|(t, w)| self.exp_elog_beta[[t, w]])
            .collect();

        let mut gamma = vec![1.0; k];
        let mut next = vec![0.0; k];
        let mut phinorm = vec![0.0; ids.len()];
        let mut iterations = 0;
        for _ in 0..self.hyper.iterations {
            iterations += 1;
            let exp_theta: Vec<f64> = dirichlet_expectation(&gamma).into_iter().map(f64::exp).collect();
            normalizers(&exp_theta, &beta, &mut phinorm);
            next.iter_mut().for_each(|g| *g = 0.0);
            for (j, col) in beta.chunks_exact(k).enumerate() {
                let weight = counts[j] / phinorm[j];
                for t in 0..k {
                    next[t] += weight * col[t];
                }
            }
            for t in 0..k {
                next[t] = alpha + exp_theta[t] * next[t];
            }
            let change = gamma.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum::<f64>() / k as f64;
            std::mem::swap(&mut gamma, &mut next);
            if change < self.hyper.gamma_threshold {
                break;
            }
        }

        let exp_theta: Vec<f64> = dirichlet_expectation(&gamma).into_iter().map(f64::exp).collect();
        normalizers(&exp_theta, &beta, &mut phinorm);
        let sstats = ids
            .iter()
            .zip(beta.chunks_exact(k))
            .enumerate()
            .map(|(j, (&w, col))| {
                let weight = counts[j] / phinorm[j];
                (w as u32, (0..k).map(|t| weight * exp_theta[t] * col[t]).collect())
            })
            .collect();
        Ok(EStep {
            gamma,
            sstats,
            iterations,
        })
    }

    /// λ ← (1−ρ)λ + ρ(η + (D / batch_size)·sstats), then t ← t + 1.
    pub fn m_step(&mut self, sstats: &Array2<f64>, batch_size: usize, corpus_size: usize) -> Result<()> {
        if batch_size == 0 {
            return Err(Error::Precondition("batch_size must be >= 1".into()));
        }
        if sstats.raw_dim() != self.lambda.raw_dim() {
            return Err(Error::DimensionMismatch(format!(
                "sstats shape {:?} vs lambda shape {:?}",
                sstats.shape(),
                self.lambda.shape()
            )));
        }
        let rho = self.rho();
        let eta = self.hyper.eta();
        let scale = corpus_size as f64 / batch_size as f64;
        ndarray::Zip::from(&mut self.lambda)
            .and(sstats)
            .for_each(|l, &s| *l = (1.0 - rho) * *l + rho * (eta + scale * s));
        self.updates_seen += 1;
        self.docs_seen += batch_size as u64;
        self.refresh_expectations();
        Ok(())
    }

    pub fn train(&mut self, corpus: &[BowVector]) -> Result<TrainLog> {
        self.train_with(corpus, &TrainOptions::default())
    }

    /// `passes` sweeps over the corpus in mini-batches of `chunksize`.
    pub fn train_with(&mut self, corpus: &[BowVector], opts: &TrainOptions) -> Result<TrainLog> {
        if corpus.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        for doc in corpus {
            self.check_doc(doc)?;
        }
        let mut order: Vec<usize> = (0..corpus.len()).collect();
        let mut rng = opts.shuffle_seed.map(ChaCha8Rng::seed_from_u64);
        let mut log = TrainLog::default();

        for pass in 0..self.hyper.passes {
            if let Some(rng) = rng.as_mut() {
                order.shuffle(rng);
            }
            for chunk in order.chunks(self.hyper.chunksize) {
                let docs: Vec<&BowVector> = chunk.iter().map(|&i| &corpus[i]).collect();
                let steps = docs.par_iter().map(|d| self.e_step(d)).collect::<Result<Vec<_>>>()?;

                let update = self.updates_seen + 1;
                let every = self.hyper.eval_every as u64;
                if every > 0 && log.updates % every == every - 1 {
                    let words: u64 = docs.iter().map(|d| d.total()).sum();
                    if words > 0 {
                        let bound: f64 = docs.iter().zip(&steps).map(|(d, s)| self.doc_bound(d, &s.gamma)).sum();
                        let per_word_bound = bound / words as f64;
                        log.entries.push(TrainLogEntry {
                            update,
                            pass,
                            per_word_bound,
                            perplexity: (-per_word_bound).exp(),
                        });
                    }
                }

                let mut sstats = Array2::zeros(self.lambda.raw_dim());
                for step in &steps {
                    for (w, col) in &step.sstats {
                        for (t, v) in col.iter().enumerate() {
                            sstats[[t, *w as usize]] += v;
                        }
                    }
                }
                self.m_step(&sstats, docs.len(), corpus.len())?;
                log.updates += 1;
            }
        }
        Ok(log)
    }

    /// Topic proportions θ = γ / Σγ of a converged E-step.
    pub fn infer(&self, doc: &BowVector) -> Result<DocTopicDist> {
        let step = self.e_step(doc)?;
        Ok(DocTopicDist::from_weights(&step.gamma))
    }

    /// Evidence lower bound of one document given its `gamma`, with the
    /// topics held fixed.
    pub fn doc_bound(&self, doc: &BowVector, gamma: &[f64]) -> f64 {
        let alpha = self.hyper.alpha();
        let k = self.num_topics();
        let elog_theta = dirichlet_expectation(gamma);

        let mut score = 0.0;
        for &(w, n) in doc.entries() {
            let w = w as usize;
            let lse = log_sum_exp((0..k).map(|t| elog_theta[t] + self.elog_beta[[t, w]]));
            score += f64::from(n) * lse;
        }
        for t in 0..k {
            score += (alpha - gamma[t]) * elog_theta[t] + ln_gamma(gamma[t]) - ln_gamma(alpha);
        }
        score += ln_gamma(alpha * k as f64) - ln_gamma(gamma.iter().sum());
        score
    }

    /// exp(−bound / tokens) over held-out documents.
    pub fn perplexity(&self, held_out: &[BowVector]) -> Result<f64> {
        let words: u64 = held_out.iter().map(BowVector::total).sum();
        if held_out.is_empty() || words == 0 {
            return Err(Error::EmptyCorpus);
        }
        let bounds = held_out
            .par_iter()
            .map(|d| self.e_step(d).map(|s| self.doc_bound(d, &s.gamma)))
            .collect::<Result<Vec<_>>>()?;
        let bound: f64 = bounds.iter().sum();
        Ok((-bound / words as f64).exp())
    }
}

fn normalizers(exp_theta: &[f64], beta: &[f64], out: &mut [f64]) {
    let k = exp_theta.len();
    for (j, col) in beta.chunks_exact(k).enumerate() {
        out[j] = col.iter().zip(exp_theta).map(|(b, t)| b * t).sum::<f64>() + PHI_FLOOR;
    }
}
