//! Percentile bootstrap.

use rand::Rng;

use super::ScoringError;
use crate::seeding::rng_for;

pub const DEFAULT_LEVEL: f64 = 0.95;
pub const DEFAULT_RESAMPLES: usize = 1000;

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Percentile interval of an arbitrary statistic over `b` resamples of `n`
/// item indices.
pub fn bootstrap_statistic<F>(
    n: usize,
    level: f64,
    b: usize,
    seed: u64,
    statistic: F,
) -> Result<(f64, f64), ScoringError>
where
    F: Fn(&[usize]) -> f64,
{
    if n == 0 || b == 0 {
        return Err(ScoringError::Empty);
    }
    if !(0.0..1.0).contains(&level) {
        return Err(ScoringError::InvalidInput(format!(
            "level {level} outside [0, 1)"
        )));
    }
    let mut rng = rng_for(seed, &["bootstrap"]);
    let mut idx = vec![0usize; n];
    let mut stats = Vec::with_capacity(b);
    for _ in 0..b {
        for slot in idx.iter_mut() {
            *slot = rng.random_range(0..n);
        }
        stats.push(statistic(&idx));
    }
    stats.sort_by(f64::total_cmp);
    Ok((
        quantile(&stats, (1.0 - level) / 2.0),
        quantile(&stats, (1.0 + level) / 2.0),
    ))
}

/// Percentile interval for the mean of per-question scores.
pub fn bootstrap_ci(
    values: &[f64],
    level: f64,
    b: usize,
    seed: u64,
) -> Result<(f64, f64), ScoringError> {
    if values.is_empty() {
        return Err(ScoringError::Empty);
    }
    // A degenerate sample has a degenerate interval; skip the summation noise.
    if values.iter().all(|v| *v == values[0]) {
        return Ok((values[0], values[0]));
    }
    bootstrap_statistic(values.len(), level, b, seed, |idx| {
        idx.iter().map(|&i| values[i]).sum::<f64>() / idx.len() as f64
    })
}
