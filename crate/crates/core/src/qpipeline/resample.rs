//! Domain-balanced, similarity-reducing resampling of filtered pairs.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::budget::{allocate_budget, BudgetAllocation};
use super::classify::{classify_domain, DomainRules};
use super::embed::{embed_pair, Embedder};
use super::kmeans::kmeans;
use super::PipelineError;
use crate::domain::{DomainLabel, QuestionDescriptionPair};
use crate::seeding::derive_seed;

pub const DEFAULT_TARGET: usize = 500;

/// Picks `m_d` representatives from one domain: one per K-means cluster
/// (K = `m_d`) over pair embeddings, each the pair nearest its centroid.
/// Output is sorted by pair id.
pub fn resample_domain(
    pairs: &[QuestionDescriptionPair],
    m_d: usize,
    embedder: &dyn Embedder,
    seed: u64,
) -> Result<Vec<QuestionDescriptionPair>, PipelineError> {
    if m_d > pairs.len() {
        return Err(PipelineError::BudgetExceedsPairs {
            budget: m_d,
            available: pairs.len(),
        });
    }
    let mut sorted: Vec<&QuestionDescriptionPair> = pairs.iter().collect();
    sorted.sort_by(|a, b| a.pair_id.cmp(&b.pair_id));
    if m_d == pairs.len() {
        return Ok(sorted.into_iter().cloned().collect());
    }
    if m_d == 0 {
        return Ok(Vec::new());
    }
    let points: Vec<Vec<f64>> = sorted
        .iter()
        .map(|p| embed_pair(p, embedder).into_values())
        .collect();
    let clustering = kmeans(&points, m_d, seed);
    let mut reps = clustering.representatives(&points);
    reps.sort_unstable();
    Ok(reps.into_iter().map(|i| sorted[i].clone()).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResampleResult {
    pub allocation: BudgetAllocation,
    /// Selected pairs with their domain set, sorted by pair id.
    pub selected: Vec<QuestionDescriptionPair>,
}

/// Classifies pairs into domains, allocates the budget, and resamples each
/// domain. Returns `min(target, pairs.len())` pairs.
pub fn resample(
    filtered: &[QuestionDescriptionPair],
    target: usize,
    rules: &DomainRules,
    embedder: &dyn Embedder,
    seed: u64,
) -> Result<ResampleResult, PipelineError> {
    let mut by_domain: BTreeMap<DomainLabel, Vec<QuestionDescriptionPair>> = BTreeMap::new();
    for pair in filtered {
        let mut pair = pair.clone();
        pair.question.domain = classify_domain(&pair, rules);
        by_domain
            .entry(pair.question.domain.clone())
            .or_default()
            .push(pair);
    }
    let counts = by_domain
        .iter()
        .map(|(d, ps)| (d.clone(), ps.len()))
        .collect();
    let allocation = allocate_budget(&counts, target);

    let per_domain: Vec<Result<Vec<QuestionDescriptionPair>, PipelineError>> = by_domain
        .par_iter()
        .map(|(domain, pairs)| {
            let m_d = allocation.retained(domain);
            resample_domain(
                pairs,
                m_d,
                embedder,
                derive_seed(seed, &["resample", domain.as_str()]),
            )
        })
        .collect();
    let mut selected = Vec::with_capacity(allocation.total_retained());
    for part in per_domain {
        selected.extend(part?);
    }
    selected.sort_by(|a, b| a.pair_id.cmp(&b.pair_id));
    Ok(ResampleResult {
        allocation,
        selected,
    })
}
