//! CMA-ES with BIPOP restarts over the unit cube.
//!
//! [`CmaesState`] is a single evolution strategy run driven by
//! [`ask`](CmaesState::ask)/[`tell`](CmaesState::tell). [`optimize`] wraps it
//! in the two-regime restart schedule and records every evaluation in an
//! [`EvalArchive`]. The optimizer minimizes.
//!
//! ```
//! use topiq::cmaes::{optimize, BipopConfig};
//!
//! let target = [0.2, 0.7, 0.4];
//! let sphere = |x: &[f64]| x.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
//! let result = optimize(sphere, 3, &BipopConfig::new(2000, 1)).unwrap();
//! assert!(result.best_fitness < 1e-9);
//! ```

mod bipop;
mod importance;
mod space;

pub use bipop::{optimize, BipopConfig, EvalArchive, EvalRecord, GenerationStat, OptimizeResult, Regime, RunSummary};
pub use importance::{estimate_importance, MIN_IMPORTANCE_RECORDS};
pub use space::{ParamKind, ParamSpec, SearchSpace};

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TOL_FUN: f64 = 1e-12;
pub const TOL_X_FACTOR: f64 = 1e-12;
pub const MAX_CONDITION: f64 = 1e14;
pub const EIGEN_FLOOR: f64 = 1e-20;

/// Default population size 4 + floor(3 ln n).
pub fn default_pop_size(n: usize) -> usize {
    4 + (3.0 * (n as f64).ln()).floor() as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TerminationReason {
    TolFun,
    TolX,
    ConditionCov,
    Stagnation,
    MaxBudget,
    DegenerateCovariance,
}

/// Strategy constants derived from the dimension and population size.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyParams {
    pub lambda: usize,
    pub mu: usize,
    pub weights: Vec<f64>,
    pub mu_eff: f64,
    pub c_sigma: f64,
    pub d_sigma: f64,
    pub c_c: f64,
    pub c_1: f64,
    pub c_mu: f64,
    pub chi_n: f64,
}

impl StrategyParams {
    pub fn new(n: usize, lambda: usize) -> Self {
        let nf = n as f64;
        let mu = lambda / 2;
        let raw: Vec<f64> = (1..=mu).map(|i| ((lambda as f64 + 1.0) / 2.0).ln() - (i as f64).ln()).collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
        let c_sigma = (mu_eff + 2.0) / (nf + mu_eff + 5.0);
        let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (nf + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
        let c_c = (4.0 + mu_eff / nf) / (nf + 4.0 + 2.0 * mu_eff / nf);
        let c_1 = 2.0 / ((nf + 1.3).powi(2) + mu_eff);
        let c_mu = (1.0 - c_1).min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((nf + 2.0).powi(2) + mu_eff));
        let chi_n = nf.sqrt() * (1.0 - 1.0 / (4.0 * nf) + 1.0 / (21.0 * nf * nf));
        Self {
            lambda,
            mu,
            weights,
            mu_eff,
            c_sigma,
            d_sigma,
            c_c,
            c_1,
            c_mu,
            chi_n,
        }
    }
}

/// One CMA-ES run. In bounded mode candidates are reflected into `[0,1]^n`.
#[derive(Debug, Clone)]
pub struct CmaesState {
    params: StrategyParams,
    mean: DVector<f64>,
    sigma: f64,
    sigma0: f64,
    cov: DMatrix<f64>,
    p_sigma: DVector<f64>,
    p_c: DVector<f64>,
    // C = B diag(d^2) B^T
    b: DMatrix<f64>,
    d: DVector<f64>,
    generation: usize,
    bounded: bool,
    best_history: Vec<f64>,
    median_history: Vec<f64>,
}

fn fitness_order(a: f64, b: f64) -> Ordering {
    let key = |v: f64| if v.is_finite() { v } else { f64::INFINITY };
    key(a).total_cmp(&key(b))
}

fn reflect(v: f64) -> f64 {
    let r = v.rem_euclid(2.0);
    if r > 1.0 {
        2.0 - r
    } else {
        r
    }
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

fn median_of(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| fitness_order(*a, *b));
    median(&v)
}

impl CmaesState {
    /// Starts a run at `mean` with step size `sigma` and identity
    /// covariance. `lambda` must be at least 2.
    pub fn new(mean: &[f64], sigma: f64, lambda: usize, bounded: bool) -> Result<Self> {
        let n = mean.len();
        if n == 0 {
            return Err(Error::Precondition("search dimension must be >= 1".into()));
        }
        if lambda < 2 {
            return Err(Error::Precondition(format!("population size must be >= 2, got {lambda}")));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::Precondition(format!("step size must be finite and > 0, got {sigma}")));
        }
        Ok(Self {
            params: StrategyParams::new(n, lambda),
            mean: DVector::from_column_slice(mean),
            sigma,
            sigma0: sigma,
            cov: DMatrix::identity(n, n),
            p_sigma: DVector::zeros(n),
            p_c: DVector::zeros(n),
            b: DMatrix::identity(n, n),
            d: DVector::from_element(n, 1.0),
            generation: 0,
            bounded,
            best_history: Vec::new(),
            median_history: Vec::new(),
        })
    }

    /// Replaces the covariance matrix. It must be square, of matching size,
    /// symmetric and positive definite.
    pub fn with_covariance(mut self, cov: DMatrix<f64>) -> Result<Self> {
        let n = self.dim();
        if cov.shape() != (n, n) {
            return Err(Error::DimensionMismatch(format!("covariance is {:?}, expected {n}x{n}", cov.shape())));
        }
        if (&cov - cov.transpose()).amax() > 1e-12 {
            return Err(Error::Precondition("covariance must be symmetric".into()));
        }
        self.cov = cov;
        self.update_eigen()?;
        if self.d.iter().any(|&v| v * v <= EIGEN_FLOOR) {
            return Err(Error::DegenerateCovariance);
        }
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn params(&self) -> &StrategyParams {
        &self.params
    }

    pub fn pop_size(&self) -> usize {
        self.params.lambda
    }

    pub fn mean(&self) -> &[f64] {
        self.mean.as_slice()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn set_sigma(&mut self, sigma: f64) {
        self.sigma = sigma;
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn generation(&self) -> usize {
        self.generation
    }

    pub fn is_bounded(&self) -> bool {
        self.bounded
    }

    /// Condition number of C, from its eigenvalues.
    pub fn condition(&self) -> f64 {
        let max = self.d.max();
        let min = self.d.min();
        (max * max) / (min * min)
    }

    fn update_eigen(&mut self) -> Result<()> {
        let n = self.dim();
        let off_diagonal_zero = (0..n).all(|i| (0..n).all(|j| i == j || self.cov[(i, j)] == 0.0));
        let (b, eig) = if off_diagonal_zero {
            (DMatrix::identity(n, n), self.cov.diagonal())
        } else {
            let se = SymmetricEigen::new(self.cov.clone());
            (se.eigenvectors, se.eigenvalues)
        };
        if eig.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::DegenerateCovariance);
        }
        self.b = b;
        self.d = eig.map(|v| v.max(EIGEN_FLOOR).sqrt());
        Ok(())
    }

    /// Samples λ candidates m + σ·B·D·z, z standard normal, drawn
    /// candidate by candidate. Bounded runs reflect each coordinate into
    /// `[0,1]`.
    pub fn ask<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Vec<f64>> {
        let n = self.dim();
        let bd = &self.b * DMatrix::from_diagonal(&self.d);
        (0..self.params.lambda)
            .map(|_| {
                let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
                let x = &self.mean + (&bd * z) * self.sigma;
                x.iter().map(|&v| if self.bounded { reflect(v) } else { v }).collect()
            })
            .collect()
    }

    /// Updates mean, evolution paths, covariance and step size from
    /// evaluated candidates. Lower fitness is better; non-finite values
    /// rank last and ties keep candidate order.
    pub fn tell(&mut self, candidates: &[Vec<f64>], fitness: &[f64]) -> Result<()> {
        let n = self.dim();
        let p = &self.params;
        if candidates.len() != p.lambda || fitness.len() != p.lambda {
            return Err(Error::DimensionMismatch(format!(
                "expected {} candidates and fitnesses, got {} and {}",
                p.lambda,
                candidates.len(),
                fitness.len()
            )));
        }
        if let Some(c) = candidates.iter().find(|c| c.len() != n) {
            return Err(Error::DimensionMismatch(format!("candidate has {} coordinates, expected {n}", c.len())));
        }
        let mut order: Vec<usize> = (0..p.lambda).collect();
        order.sort_by(|&a, &b| fitness_order(fitness[a], fitness[b]));

        let old_mean = self.mean.clone();
        let ys: Vec<DVector<f64>> = order[..p.mu]
            .iter()
            .map(|&i| (DVector::from_column_slice(&candidates[i]) - &old_mean) / self.sigma)
            .collect();
        let mut y_w = DVector::zeros(n);
        for (w, y) in p.weights.iter().zip(&ys) {
            y_w += y * *w;
        }
        self.mean = &old_mean + &y_w * self.sigma;

        let inv_sqrt_c = &self.b * DMatrix::from_diagonal(&self.d.map(|v| 1.0 / v)) * self.b.transpose();
        self.p_sigma = &self.p_sigma * (1.0 - p.c_sigma) + (&inv_sqrt_c * &y_w) * (p.c_sigma * (2.0 - p.c_sigma) * p.mu_eff).sqrt();
        let ps_norm = self.p_sigma.norm();
        let gens = (self.generation + 1) as i32;
        let h_sigma = ps_norm / (1.0 - (1.0 - p.c_sigma).powi(2 * gens)).sqrt() < (1.4 + 2.0 / (n as f64 + 1.0)) * p.chi_n;
        let h = if h_sigma { 1.0 } else { 0.0 };
        self.p_c = &self.p_c * (1.0 - p.c_c) + &y_w * (h * (p.c_c * (2.0 - p.c_c) * p.mu_eff).sqrt());

        let delta = (1.0 - h) * p.c_c * (2.0 - p.c_c);
        let mut rank_mu = DMatrix::zeros(n, n);
        for (w, y) in p.weights.iter().zip(&ys) {
            rank_mu += (y * y.transpose()) * *w;
        }
        let weight_sum: f64 = p.weights.iter().sum();
        self.cov = &self.cov * (1.0 - p.c_1 - p.c_mu * weight_sum)
            + (&self.p_c * self.p_c.transpose() + &self.cov * delta) * p.c_1
            + rank_mu * p.c_mu;
        self.cov = (&self.cov + self.cov.transpose()) * 0.5;

        self.sigma *= ((p.c_sigma / p.d_sigma) * (ps_norm / p.chi_n - 1.0)).exp();
        self.generation += 1;

        let sorted: Vec<f64> = order.iter().map(|&i| fitness[i]).collect();
        self.best_history.push(sorted[0]);
        self.median_history.push(median(&sorted));
        self.update_eigen()
    }

    /// Intrinsic stopping criteria; the evaluation budget is the caller's.
    pub fn termination(&self) -> Option<TerminationReason> {
        let n = self.dim() as f64;
        let lambda = self.params.lambda as f64;
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Some(TerminationReason::DegenerateCovariance);
        }
        let max_diag = self.cov.diagonal().max();
        if self.sigma * max_diag.sqrt() < TOL_X_FACTOR * self.sigma0 {
            return Some(TerminationReason::TolX);
        }
        if self.condition() > MAX_CONDITION {
            return Some(TerminationReason::ConditionCov);
        }
        let window = 10 + (30.0 * n / lambda).ceil() as usize;
        if self.best_history.len() >= window {
            let recent = &self.best_history[self.best_history.len() - window..];
            let (lo, hi) = recent.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
            if hi - lo < TOL_FUN {
                return Some(TerminationReason::TolFun);
            }
        }
        let stag = 120 + (30.0 * n / lambda).ceil() as usize;
        let len = self.best_history.len();
        if len >= stag {
            let span = 20;
            let old = len - stag;
            let stalled = |h: &[f64]| median_of(&h[len - span..]) >= median_of(&h[old..old + span]);
            if stalled(&self.best_history) && stalled(&self.median_history) {
                return Some(TerminationReason::Stagnation);
            }
        }
        None
    }
}
