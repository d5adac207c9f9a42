//! Online variational Bayes for latent Dirichlet allocation.
//!
//! The model keeps a K×V matrix `lambda` of variational Dirichlet parameters
//! over topic-word distributions. Training alternates two steps over
//! mini-batches of `chunksize` documents:
//!
//! * **E-step** – for each document, coordinate ascent on its topic
//!   proportions `gamma` with `lambda` held fixed;
//! * **M-step** – a stochastic natural-gradient step on `lambda` with
//!   learning rate `rho_t = (offset + t)^(-decay)`.

pub mod math;
mod model;
mod modelfile;

pub use model::{DocTopicDist, EStep, TopicModel, TrainLog, TrainLogEntry, TrainOptions};
pub use modelfile::{sidecar_path, ModelSidecar, MAGIC, VERSION};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Training hyperparameters. The first six are the tunable search
/// dimensions; the rest are fixed by configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LdaHyperParams {
    pub num_topics: usize,
    pub chunksize: usize,
    pub passes: usize,
    /// Learning-rate exponent κ.
    pub decay: f64,
    /// Log the chunk bound every this many updates; 0 disables logging.
    pub eval_every: usize,
    /// Maximum E-step iterations per document.
    pub iterations: usize,
    /// Learning-rate delay τ0.
    pub offset: f64,
    /// Symmetric document-topic prior; `None` means 1/K.
    pub alpha: Option<f64>,
    /// Symmetric topic-word prior; `None` means 1/K.
    pub eta: Option<f64>,
    /// E-step stops once the mean absolute change in gamma falls below this.
    pub gamma_threshold: f64,
}

impl Default for LdaHyperParams {
    fn default() -> Self {
        Self {
            num_topics: 100,
            chunksize: 2000,
            passes: 1,
            decay: 0.5,
            eval_every: 10,
            iterations: 50,
            offset: 1.0,
            alpha: None,
            eta: None,
            gamma_threshold: 1e-3,
        }
    }
}

impl LdaHyperParams {
    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or(1.0 / self.num_topics as f64)
    }

    pub fn eta(&self) -> f64 {
        self.eta.unwrap_or(1.0 / self.num_topics as f64)
    }

    /// Copy with the priors made explicit.
    pub fn resolved(&self) -> Self {
        Self {
            alpha: Some(self.alpha()),
            eta: Some(self.eta()),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidHyperParams(msg));
        if self.num_topics < 2 {
            return fail(format!("num_topics must be >= 2, got {}", self.num_topics));
        }
        if self.chunksize < 1 {
            return fail("chunksize must be >= 1".into());
        }
        if self.passes < 1 {
            return fail("passes must be >= 1".into());
        }
        if !(0.5..=1.0).contains(&self.decay) {
            return fail(format!("decay must lie in [0.5, 1.0], got {}", self.decay));
        }
        if self.iterations < 1 {
            return fail("iterations must be >= 1".into());
        }
        if !(self.offset >= 0.0 && self.offset.is_finite()) {
            return fail(format!("offset must be finite and >= 0, got {}", self.offset));
        }
        for (name, v) in [("alpha", self.alpha()), ("eta", self.eta())] {
            if !(v > 0.0 && v.is_finite()) {
                return fail(format!("{name} must be finite and > 0, got {v}"));
            }
        }
        if !(self.gamma_threshold >= 0.0 && self.gamma_threshold.is_finite()) {
            return fail("gamma_threshold must be finite and >= 0".into());
        }
        Ok(())
    }
}

/// Online learning rate ρ_t = (τ0 + t)^(−κ), capped at 1 for offsets below 1.
pub fn learning_rate(offset: f64, decay: f64, t: u64) -> f64 {
    (offset + t as f64).powf(-decay).min(1.0)
}
