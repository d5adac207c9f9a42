use std::collections::BTreeMap;

use super::{EvalArchive, SearchSpace};
use crate::error::{Error, Result};

pub const MIN_IMPORTANCE_RECORDS: usize = 20;

/// Share of fitness variance explained by each dimension alone.
///
/// For each coordinate the finite records are split into equal-width bins
/// over `[0,1]` and the correlation ratio (between-bin variance over total
/// variance) is computed. The ratios are normalized to sum to 1; when all
/// are zero the result is uniform.
pub fn estimate_importance(archive: &EvalArchive, space: &SearchSpace) -> Result<BTreeMap<String, f64>> {
    let records: Vec<_> = archive.records().iter().filter(|r| !r.failed()).collect();
    if records.len() < MIN_IMPORTANCE_RECORDS {
        return Err(Error::InsufficientData(format!(
            "importance needs at least {MIN_IMPORTANCE_RECORDS} finite evaluations, have {}",
            records.len()
        )));
    }
    if let Some(r) = records.iter().find(|r| r.point.len() != space.len()) {
        return Err(Error::DimensionMismatch(format!("record has {} coordinates, space has {}", r.point.len(), space.len())));
    }
    let n = records.len() as f64;
    let bins = ((n.sqrt().floor() as usize).clamp(2, 10)) as f64;
    let mean = records.iter().map(|r| r.fitness).sum::<f64>() / n;
    let total: f64 = records.iter().map(|r| (r.fitness - mean).powi(2)).sum();

    let ratios: Vec<f64> = (0..space.len())
        .map(|j| {
            if total <= 0.0 {
                return 0.0;
            }
            let mut sums = vec![0.0; bins as usize];
            let mut counts = vec![0usize; bins as usize];
            for r in &records {
                let b = ((r.point[j].clamp(0.0, 1.0) * bins) as usize).min(bins as usize - 1);
                sums[b] += r.fitness;
                counts[b] += 1;
            }
            let between: f64 = sums
                .iter()
                .zip(&counts)
                .filter(|(_, &c)| c > 0)
                .map(|(&s, &c)| c as f64 * (s / c as f64 - mean).powi(2))
                .sum();
            (between / total).clamp(0.0, 1.0)
        })
        .collect();

    let sum: f64 = ratios.iter().sum();
    let names = space.names();
    Ok(if sum > 0.0 {
        names.iter().zip(&ratios).map(|(n, r)| (n.to_string(), r / sum)).collect()
    } else {
        let u = 1.0 / space.len() as f64;
        names.iter().map(|n| (n.to_string(), u)).collect()
    })
}
