//! Score reports: JSON-serializable summaries plus a plain-text table with
//! benchmark scores on a 0-100 scale.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::bootstrap::{bootstrap_ci, bootstrap_statistic, DEFAULT_LEVEL, DEFAULT_RESAMPLES};
use super::prob::{self, ProbPrediction, DEFAULT_BINS, DEFAULT_THRESHOLD};
use super::{bench, ScoringError};
pub use crate::domain::BenchmarkType as QuestionType;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub low: f64,
    pub high: f64,
}

impl From<(f64, f64)> for Interval {
    fn from((low, high): (f64, f64)) -> Self {
        Self { low, high }
    }
}

/// Accuracy, Brier and ECE over one batch of binary predictions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbabilisticSummary {
    pub n: usize,
    pub n_valid: usize,
    pub accuracy: f64,
    pub brier: f64,
    /// Absent when no prediction was valid.
    pub ece: Option<f64>,
    pub mean_reward: f64,
    pub intervals: BTreeMap<String, Interval>,
}

impl ProbabilisticSummary {
    pub fn compute(preds: &[ProbPrediction], seed: u64) -> Result<Self, ScoringError> {
        let accuracy = prob::accuracy(preds, DEFAULT_THRESHOLD)?;
        let brier = prob::brier(preds)?;
        let ece = match prob::ece(preds, DEFAULT_BINS) {
            Ok(v) => Some(v),
            Err(ScoringError::Empty) => None,
            Err(e) => return Err(e),
        };
        let rewards: Vec<f64> = preds.iter().map(prob::reward).collect();
        let mean_reward = rewards.iter().sum::<f64>() / rewards.len() as f64;

        let hits: Vec<f64> = preds
            .iter()
            .map(|p| {
                if prob::is_correct(p, DEFAULT_THRESHOLD) {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        let brier_terms: Vec<f64> = rewards.iter().map(|r| -r).collect();
        let mut intervals = BTreeMap::new();
        intervals.insert(
            "accuracy".into(),
            bootstrap_ci(&hits, DEFAULT_LEVEL, DEFAULT_RESAMPLES, seed)?.into(),
        );
        intervals.insert(
            "brier".into(),
            bootstrap_ci(&brier_terms, DEFAULT_LEVEL, DEFAULT_RESAMPLES, seed)?.into(),
        );
        let valid: Vec<ProbPrediction> = preds
            .iter()
            .filter(|p| p.probability.is_some())
            .copied()
            .collect();
        if !valid.is_empty() {
            let ci =
                bootstrap_statistic(valid.len(), DEFAULT_LEVEL, DEFAULT_RESAMPLES, seed, |idx| {
                    let sample: Vec<ProbPrediction> = idx.iter().map(|&i| valid[i]).collect();
                    prob::ece(&sample, DEFAULT_BINS).unwrap_or(0.0)
                })?;
            intervals.insert("ece".into(), ci.into());
        }
        Ok(Self {
            n: preds.len(),
            n_valid: valid.len(),
            accuracy,
            brier,
            ece,
            mean_reward,
            intervals,
        })
    }
}

/// Per-type benchmark means and their equal-weight overall score.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkScores {
    /// Types with no scored question are absent.
    pub per_type: BTreeMap<QuestionType, f64>,
    pub counts: BTreeMap<QuestionType, usize>,
    pub overall: Option<f64>,
    pub intervals: BTreeMap<QuestionType, Interval>,
}

impl BenchmarkScores {
    /// `items` holds one per-question score in [0, 1] with its type.
    pub fn from_items(items: &[(QuestionType, f64)], seed: u64) -> Result<Self, ScoringError> {
        let mut grouped: BTreeMap<QuestionType, Vec<f64>> = BTreeMap::new();
        for &(t, s) in items {
            grouped.entry(t).or_default().push(s);
        }
        let mut out = BenchmarkScores::default();
        for (t, scores) in &grouped {
            out.per_type
                .insert(*t, scores.iter().sum::<f64>() / scores.len() as f64);
            out.counts.insert(*t, scores.len());
            out.intervals.insert(
                *t,
                bootstrap_ci(scores, DEFAULT_LEVEL, DEFAULT_RESAMPLES, seed)?.into(),
            );
        }
        out.overall = bench::overall(QuestionType::ALL.map(|t| out.per_type.get(&t).copied())).ok();
        Ok(out)
    }

    pub fn score(&self, t: QuestionType) -> Option<f64> {
        self.per_type.get(&t).copied()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainScore {
    pub n: usize,
    pub accuracy: f64,
    pub brier: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub agent: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub day: Option<chrono::NaiveDate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probabilistic: Option<ProbabilisticSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub benchmark: Option<BenchmarkScores>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub per_domain: BTreeMap<String, DomainScore>,
}

impl ScoreReport {
    pub fn new(agent: impl Into<String>) -> Self {
        Self {
            agent: agent.into(),
            day: None,
            probabilistic: None,
            benchmark: None,
            per_domain: BTreeMap::new(),
        }
    }

    /// Fills `per_domain` from `(domain, prediction)` pairs.
    pub fn with_domains<'a>(
        mut self,
        items: impl IntoIterator<Item = (&'a str, ProbPrediction)>,
    ) -> Self {
        let mut grouped: BTreeMap<String, Vec<ProbPrediction>> = BTreeMap::new();
        for (d, p) in items {
            grouped.entry(d.to_string()).or_default().push(p);
        }
        for (d, preds) in grouped {
            let score = DomainScore {
                n: preds.len(),
                accuracy: prob::accuracy(&preds, DEFAULT_THRESHOLD).unwrap_or(0.0),
                brier: prob::brier(&preds).unwrap_or(1.0),
            };
            self.per_domain.insert(d, score);
        }
        self
    }
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "--".to_string(), |x| format!("{:.2}", 100.0 * x))
}

fn raw(v: Option<f64>) -> String {
    v.map_or_else(|| "--".to_string(), |x| format!("{x:.4}"))
}

/// One row per report. Benchmark scores and accuracy are on a 0-100 scale;
/// Brier and ECE stay on their natural scale. Missing values print as `--`.
pub fn render_table(reports: &[ScoreReport]) -> String {
    let mut header = vec!["Agent".to_string(), "Day".to_string()];
    header.extend(QuestionType::ALL.iter().map(|t| t.short_name().to_string()));
    header.extend(["S_overall", "Acc", "Brier", "ECE"].map(String::from));

    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            let mut row = vec![
                r.agent.clone(),
                r.day.map_or_else(|| "--".into(), |d| d.to_string()),
            ];
            let b = r.benchmark.as_ref();
            row.extend(
                QuestionType::ALL
                    .iter()
                    .map(|t| pct(b.and_then(|b| b.score(*t)))),
            );
            row.push(pct(b.and_then(|b| b.overall)));
            let p = r.probabilistic.as_ref();
            row.push(pct(p.map(|p| p.accuracy)));
            row.push(raw(p.map(|p| p.brier)));
            row.push(raw(p.and_then(|p| p.ece)));
            row
        })
        .collect();

    let widths: Vec<usize> = (0..header.len())
        .map(|c| {
            rows.iter()
                .map(|r| r[c].chars().count())
                .chain([header[c].len()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let line = |cells: &[String]| {
        let mut s = String::new();
        for (c, cell) in cells.iter().enumerate() {
            if c > 0 {
                s.push_str(" | ");
            }
            let _ = if c == 0 {
                write!(s, "{cell:<w$}", w = widths[c])
            } else {
                write!(s, "{cell:>w$}", w = widths[c])
            };
        }
        s.trim_end().to_string()
    };
    let mut out = line(&header);
    out.push('\n');
    out.push_str(
        &widths
            .iter()
            .map(|w| "-".repeat(*w))
            .collect::<Vec<_>>()
            .join("-+-"),
    );
    out.push('\n');
    for r in &rows {
        out.push_str(&line(r));
        out.push('\n');
    }
    out
}
