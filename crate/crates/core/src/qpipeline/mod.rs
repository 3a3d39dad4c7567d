//! From candidate events to the day's retained question set: construct pairs
//! from templates, drop anything a quality judge flags, then resample to a
//! domain-balanced, low-similarity subset.

pub mod budget;
pub mod classify;
pub mod embed;
pub mod filter;
pub mod http;
pub mod kmeans;
pub mod resample;
pub mod templates;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use budget::{allocate_budget, BudgetAllocation, DomainBudget};
pub use classify::{classify_domain, DomainRules, KeywordRule};
pub use embed::{embed_pair, Embedder, EmbeddingVector, HashingEmbedder};
pub use filter::{
    apply_filters, Criterion, FilterOutcome, FilterVerdict, Judge, JudgeDecision, JudgeError,
    JudgePanel,
};
pub use http::HttpJudge;
pub use resample::{resample, resample_domain, ResampleResult, DEFAULT_TARGET};
pub use templates::{construct_pair, QuestionTemplate, TemplateSet};

use crate::domain::{CandidateEvent, QuestionDescriptionPair, SourceId};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("no template for source {source_id} (requested {requested:?})")]
    NoTemplate {
        source_id: SourceId,
        requested: Option<String>,
    },
    #[error("template {template} needs payload field {field}")]
    MissingField { template: String, field: String },
    #[error("constructed question is invalid: {0}")]
    InvalidQuestion(String),
    #[error("budget {budget} exceeds the {available} pairs in the domain")]
    BudgetExceedsPairs { budget: usize, available: usize },
    #[error("configuration: {0}")]
    Config(String),
}

/// A candidate event that could not become a pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstructionFailure {
    pub source_url: String,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineRun {
    pub candidates: usize,
    pub construction_failures: Vec<ConstructionFailure>,
    pub verdicts: Vec<FilterVerdict>,
    pub filtered: usize,
    pub resampled: ResampleResult,
}

pub struct QuestionPipeline {
    pub templates: TemplateSet,
    pub judges: JudgePanel,
    pub rules: DomainRules,
    pub embedder: Box<dyn Embedder>,
}

impl QuestionPipeline {
    pub fn run(
        &self,
        events: &[CandidateEvent],
        target: usize,
        seed: u64,
    ) -> Result<PipelineRun, PipelineError> {
        let mut pairs = Vec::new();
        let mut construction_failures = Vec::new();
        for ev in events {
            match construct_pair(ev, &self.templates) {
                Ok(p) => pairs.push(p),
                Err(e) => construction_failures.push(ConstructionFailure {
                    source_url: ev.source_url.clone(),
                    error: e.to_string(),
                }),
            }
        }
        pairs.sort_by(|a, b| a.pair_id.cmp(&b.pair_id));
        pairs.dedup_by(|a, b| a.pair_id == b.pair_id);

        let outcomes: Vec<FilterOutcome> = pairs
            .par_iter()
            .map(|p| apply_filters(p, &self.judges))
            .collect();
        let mut verdicts = Vec::with_capacity(outcomes.len() * 3);
        let mut kept: Vec<QuestionDescriptionPair> = Vec::new();
        for (pair, outcome) in pairs.into_iter().zip(outcomes) {
            if outcome.keep {
                kept.push(pair);
            }
            verdicts.extend(outcome.verdicts);
        }
        let resampled = resample(&kept, target, &self.rules, self.embedder.as_ref(), seed)?;
        Ok(PipelineRun {
            candidates: events.len(),
            construction_failures,
            verdicts,
            filtered: kept.len(),
            resampled,
        })
    }
}
