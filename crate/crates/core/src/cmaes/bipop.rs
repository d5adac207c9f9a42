use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{default_pop_size, fitness_order, median_of, CmaesState, TerminationReason};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    First,
    Large,
    Small,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BipopConfig {
    /// Maximum number of objective evaluations, including the initial mean.
    pub budget: usize,
    pub seed: u64,
    /// Initial step size for the first and large-regime runs.
    pub sigma0: f64,
    /// Upper bound on large-regime doublings.
    pub max_large_restarts: u32,
}

impl BipopConfig {
    pub fn new(budget: usize, seed: u64) -> Self {
        Self {
            budget,
            seed,
            sigma0: 0.3,
            max_large_restarts: 9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub point: Vec<f64>,
    pub fitness: f64,
    pub run: usize,
    pub generation: usize,
}

impl EvalRecord {
    pub fn failed(&self) -> bool {
        !self.fitness.is_finite()
    }
}

/// Every evaluation in the order it was made.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalArchive {
    records: Vec<EvalRecord>,
}

impl EvalArchive {
    pub fn records(&self) -> &[EvalRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn push(&mut self, record: EvalRecord) {
        self.records.push(record);
    }

    /// Lowest finite fitness; the earliest record wins ties.
    pub fn best(&self) -> Option<&EvalRecord> {
        self.records
            .iter()
            .filter(|r| !r.failed())
            .fold(None, |best: Option<&EvalRecord>, r| match best {
                Some(b) if b.fitness <= r.fitness => Some(b),
                _ => Some(r),
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationStat {
    pub run: usize,
    pub generation: usize,
    pub evaluations: usize,
    pub best: f64,
    pub median: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run: usize,
    pub regime: Regime,
    pub pop_size: usize,
    pub sigma0: f64,
    pub evaluations: usize,
    pub generations: usize,
    pub best_fitness: f64,
    pub reason: TerminationReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeResult {
    pub best_point: Vec<f64>,
    pub best_fitness: f64,
    pub evaluations: usize,
    pub archive: EvalArchive,
    pub runs: Vec<RunSummary>,
    pub generations: Vec<GenerationStat>,
}

/// Minimizes `objective` over `[0,1]^n` with BIPOP restarts.
///
/// The cube centre is evaluated first. The first run uses the default
/// population size. Each later run goes to whichever regime has consumed
/// less budget so far (large on a tie): large runs double the population
/// and start at `sigma0`; small runs draw `U ~ U(0,1)` and use
/// `floor(λ_def·(λ_large/(2λ_def))^(U²))` candidates with step size
/// `sigma0·10^(−2U)`. Restarts begin at a uniform random point. A
/// generation that would exceed the budget is not started.
///
/// Candidates within a generation are evaluated in parallel; results are
/// independent of the thread count.
pub fn optimize<F>(objective: F, n: usize, config: &BipopConfig) -> Result<OptimizeResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if n == 0 {
        return Err(Error::Precondition("search dimension must be >= 1".into()));
    }
    if config.budget == 0 {
        return Err(Error::Precondition("budget must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let lambda_def = default_pop_size(n);
    let mut archive = EvalArchive::default();
    let mut generations = Vec::new();
    let mut runs = Vec::new();

    let centre = vec![0.5; n];
    let f0 = objective(&centre);
    archive.push(EvalRecord {
        point: centre.clone(),
        fitness: f0,
        run: 0,
        generation: 0,
    });
    let mut used = 1;

    let mut large_restarts = 0u32;
    let mut budget_large = 0usize;
    let mut budget_small = 0usize;
    let mut run = 0usize;
    loop {
        let (regime, lambda, sigma, mean) = if run == 0 {
            (Regime::First, lambda_def, config.sigma0, centre.clone())
        } else {
            let large_allowed = large_restarts < config.max_large_restarts;
            let lambda_large = lambda_def << large_restarts;
            if budget_large <= budget_small && large_allowed {
                large_restarts += 1;
                let mean = (0..n).map(|_| rng.gen::<f64>()).collect();
                (Regime::Large, lambda_def << large_restarts, config.sigma0, mean)
            } else {
                let u: f64 = rng.gen();
                let ratio = lambda_large as f64 / (2.0 * lambda_def as f64);
                let lambda = ((lambda_def as f64 * ratio.powf(u * u)).floor() as usize).max(2);
                let sigma = config.sigma0 * 10f64.powf(-2.0 * u);
                let mean = (0..n).map(|_| rng.gen::<f64>()).collect();
                (Regime::Small, lambda, sigma, mean)
            }
        };
        if used + lambda > config.budget {
            break;
        }

        let mut state = CmaesState::new(&mean, sigma, lambda, true)?;
        let start = used;
        let mut run_best = f64::INFINITY;
        let reason = loop {
            if used + lambda > config.budget {
                break TerminationReason::MaxBudget;
            }
            let xs = state.ask(&mut rng);
            let fs: Vec<f64> = xs.par_iter().map(|x| objective(x)).collect();
            used += lambda;
            let generation = state.generation() + 1;
            for (x, &f) in xs.iter().zip(&fs) {
                archive.push(EvalRecord {
                    point: x.clone(),
                    fitness: f,
                    run,
                    generation,
                });
            }
            let best = fs.iter().copied().min_by(|a, b| fitness_order(*a, *b)).unwrap_or(f64::INFINITY);
            if best.is_finite() {
                run_best = run_best.min(best);
            }
            generations.push(GenerationStat {
                run,
                generation,
                evaluations: used,
                best,
                median: median_of(&fs),
            });
            if state.tell(&xs, &fs).is_err() {
                break TerminationReason::DegenerateCovariance;
            }
            if let Some(r) = state.termination() {
                break r;
            }
        };
        let spent = used - start;
        match regime {
            Regime::First => {}
            Regime::Large => budget_large += spent,
            Regime::Small => budget_small += spent,
        }
        runs.push(RunSummary {
            run,
            regime,
            pop_size: lambda,
            sigma0: sigma,
            evaluations: spent,
            generations: state.generation(),
            best_fitness: run_best,
            reason,
        });
        if reason == TerminationReason::MaxBudget {
            break;
        }
        run += 1;
    }

    let best = archive.best().cloned().unwrap_or_else(|| archive.records()[0].clone());
    Ok(OptimizeResult {
        best_point: best.point,
        best_fitness: best.fitness,
        evaluations: used,
        archive,
        runs,
        generations,
    })
}
