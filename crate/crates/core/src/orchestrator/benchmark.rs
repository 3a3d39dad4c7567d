//! Benchmark pools, prediction and truth line formats, and file scoring.
//!
//! Prediction lines: `{question_id, probability}`, `{question_id, selected: [letters]}`
//! or `{question_id, value}`. Truth lines: `{question_id, label}` for binary
//! probabilistic questions, `{question_id, qtype, num_options, correct}` for
//! choice questions and `{question_id, qtype: "numeric", history}` with eight
//! values, the last being the truth.

use std::collections::{BTreeMap, HashMap};

use chrono::{Duration, NaiveDate};
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::CycleSettings;
use super::OrchestratorError;
use crate::domain::{BenchmarkType, Label, QuestionId, Timestamp};
use crate::prompts::{letter_index, option_letter, BenchmarkQuestion};
use crate::rollout::{parse_final_choice, parse_final_value, ENVELOPE};
use crate::scoring::{
    f1_choice, numeric_score, BenchmarkScores, ChoiceAnswer, NumericAnswer, ProbPrediction,
    ProbabilisticSummary, ScoreReport, NUMERIC_EPS,
};
use crate::seeding::rng_for;

pub const BENCHMARK_RESOLVER_KEY: &str = "benchmark";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredLine {
    pub question_id: QuestionId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probability: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selected: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthLine {
    pub question_id: QuestionId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qtype: Option<BenchmarkType>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_options: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub history: Option<Vec<f64>>,
    /// When the answer became public. A line without it counts as resolved.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub published_at: Option<Timestamp>,
    #[serde(default = "yes", skip_serializing_if = "is_true")]
    pub resolved: bool,
}

impl PredLine {
    pub fn empty(question_id: QuestionId) -> Self {
        Self {
            question_id,
            probability: None,
            selected: None,
            value: None,
        }
    }
}

fn yes() -> bool {
    true
}

fn is_true(b: &bool) -> bool {
    *b
}

#[derive(Clone, Debug, PartialEq)]
pub enum Gold {
    Binary(Label),
    Choice {
        qtype: BenchmarkType,
        correct: Vec<bool>,
    },
    Numeric(Vec<f64>),
}

fn letters_to_mask(letters: &[String], n: usize) -> Option<Vec<bool>> {
    let mut mask = vec![false; n];
    for l in letters {
        let mut chars = l.trim().chars();
        let i = match (chars.next(), chars.next()) {
            (Some(c), None) => letter_index(c)?,
            _ => return None,
        };
        *mask.get_mut(i)? = true;
    }
    Some(mask)
}

fn mask_to_letters(mask: &[bool]) -> Vec<String> {
    mask.iter()
        .enumerate()
        .filter(|(_, &on)| on)
        .map(|(i, _)| option_letter(i).to_string())
        .collect()
}

impl TruthLine {
    pub fn gold(&self) -> Result<Gold, String> {
        let id = &self.question_id;
        match self.qtype {
            None => self
                .label
                .map(Gold::Binary)
                .ok_or_else(|| format!("{id}: needs a label or a qtype")),
            Some(BenchmarkType::Numeric) => {
                let h = self
                    .history
                    .clone()
                    .ok_or_else(|| format!("{id}: numeric truth needs a history"))?;
                NumericAnswer::new(0.0, h.clone()).map_err(|e| format!("{id}: {e}"))?;
                Ok(Gold::Numeric(h))
            }
            Some(qtype) => {
                let n = self
                    .num_options
                    .ok_or_else(|| format!("{id}: choice truth needs num_options"))?;
                let (min, max) = qtype.option_bounds();
                if n < min || n > max {
                    return Err(format!(
                        "{id}: {n} options for {qtype} (allowed {min}..={max})"
                    ));
                }
                let letters = self
                    .correct
                    .as_deref()
                    .ok_or_else(|| format!("{id}: choice truth needs correct"))?;
                let correct = letters_to_mask(letters, n)
                    .ok_or_else(|| format!("{id}: bad option letters {letters:?}"))?;
                if !correct.contains(&true) {
                    return Err(format!("{id}: no correct option"));
                }
                Ok(Gold::Choice { qtype, correct })
            }
        }
    }

    /// Whether the answer is public at `as_of` (always, without a cut-off).
    pub fn is_resolved(&self, as_of: Option<Timestamp>) -> bool {
        self.resolved
            && match (self.published_at, as_of) {
                (Some(p), Some(now)) => p <= now,
                _ => true,
            }
    }
}

/// Turns a raw agent answer into a prediction line for a question of `qtype`.
pub fn prediction_from_answer(
    question_id: QuestionId,
    qtype: BenchmarkType,
    num_options: usize,
    raw: &str,
) -> PredLine {
    let mut line = PredLine::empty(question_id);
    match qtype {
        BenchmarkType::Numeric => line.value = parse_final_value(raw),
        _ => line.selected = parse_final_choice(raw, num_options).map(|m| mask_to_letters(&m)),
    }
    line
}

/// The answer an oracle gives for a truth line.
pub fn oracle_answer(truth: &TruthLine) -> Option<String> {
    match truth.gold().ok()? {
        Gold::Binary(z) => Some(format!("{ENVELOPE} {}", z.as_f64())),
        Gold::Choice { correct, .. } => Some(format!(
            "{ENVELOPE} {}",
            mask_to_letters(&correct).join(", ")
        )),
        Gold::Numeric(h) => Some(format!("{ENVELOPE} {}", h[h.len() - 1])),
    }
}

/// Scores prediction lines against truth lines. Truth not yet public at
/// `as_of` is skipped; a question without a prediction scores as invalid.
/// Types with no scored question are left out of the benchmark scores.
pub fn score_lines(
    agent: &str,
    preds: &[PredLine],
    truths: &[TruthLine],
    as_of: Option<Timestamp>,
    seed: u64,
) -> Result<ScoreReport, OrchestratorError> {
    let mut by_id: HashMap<&QuestionId, &PredLine> = HashMap::with_capacity(preds.len());
    for p in preds {
        if by_id.insert(&p.question_id, p).is_some() {
            return Err(OrchestratorError::Input(format!(
                "duplicate prediction for {}",
                p.question_id
            )));
        }
    }
    let mut seen = BTreeMap::new();
    let mut binary = Vec::new();
    let mut items = Vec::new();
    for t in truths {
        if seen.insert(&t.question_id, ()).is_some() {
            return Err(OrchestratorError::Input(format!(
                "duplicate truth for {}",
                t.question_id
            )));
        }
        let gold = t.gold().map_err(OrchestratorError::Input)?;
        if !t.is_resolved(as_of) {
            continue;
        }
        let pred = by_id.get(&t.question_id).copied();
        match gold {
            Gold::Binary(z) => {
                binary.push(ProbPrediction::new(pred.and_then(|p| p.probability), z))
            }
            Gold::Choice { qtype, correct } => {
                let n = correct.len();
                let predicted = pred
                    .and_then(|p| p.selected.as_deref())
                    .and_then(|s| letters_to_mask(s, n))
                    .unwrap_or_else(|| vec![false; n]);
                let a = ChoiceAnswer::new(correct, predicted)?;
                items.push((qtype, f1_choice(&a, qtype == BenchmarkType::BinaryChoice)?));
            }
            Gold::Numeric(history) => {
                let v = pred.and_then(|p| p.value).unwrap_or(f64::NAN);
                items.push((
                    BenchmarkType::Numeric,
                    numeric_score(&NumericAnswer::new(v, history)?, NUMERIC_EPS)?,
                ));
            }
        }
    }
    let unmatched = preds
        .iter()
        .filter(|p| !seen.contains_key(&p.question_id))
        .count();
    if unmatched > 0 {
        tracing::warn!(unmatched, "predictions without a truth line were ignored");
    }
    let mut report = ScoreReport::new(agent);
    if !binary.is_empty() {
        report.probabilistic = Some(ProbabilisticSummary::compute(&binary, seed)?);
    }
    if !items.is_empty() {
        report.benchmark = Some(BenchmarkScores::from_items(&items, seed)?);
    }
    Ok(report)
}

const SUBJECTS: [&str; 8] = [
    "the central bank",
    "the city council",
    "the national team",
    "the largest carmaker",
    "the transit authority",
    "the weather service",
    "the film festival jury",
    "the stock exchange",
];
const CHOICES: [&str; 12] = [
    "a rate cut",
    "a public statement",
    "a delay",
    "a new record",
    "a recall",
    "an upset win",
    "a merger announcement",
    "a strike",
    "a price increase",
    "a policy reversal",
    "a leadership change",
    "no change",
];
const METRICS: [&str; 5] = [
    "closing index level",
    "daily ridership (thousands)",
    "average temperature (C)",
    "box-office gross (millions)",
    "exchange rate",
];

/// `per_type` questions of every type resolving on `day + 1`, with truth.
pub fn synthetic_pool(
    seed: u64,
    day: NaiveDate,
    per_type: usize,
    unresolved_rate: &BTreeMap<BenchmarkType, f64>,
    cycle: &CycleSettings,
) -> Vec<(BenchmarkQuestion, TruthLine)> {
    let day_tag = day.format("%Y-%m-%d").to_string();
    let resolution_time = cycle.resolve_instant(day + Duration::days(1));
    let published = resolution_time - Duration::hours(2);
    let mut out = Vec::with_capacity(per_type * 4);
    for qtype in BenchmarkType::ALL {
        let mut rng = rng_for(seed, &["benchmark-pool", &day_tag, qtype.as_str()]);
        let rate = unresolved_rate.get(&qtype).copied().unwrap_or(0.0);
        for i in 0..per_type {
            let id = QuestionId::new(format!("bm-{day_tag}-{}-{i:03}", qtype.as_str()));
            let subject = SUBJECTS[rng.random_range(0..SUBJECTS.len())];
            let (text, options, truth_fields) = match qtype {
                BenchmarkType::Numeric => {
                    let metric = METRICS[rng.random_range(0..METRICS.len())];
                    let mut level = rng.random_range(20.0..500.0_f64);
                    let step = level * rng.random_range(0.005..0.05);
                    let history: Vec<f64> = (0..8)
                        .map(|_| {
                            level += step * (2.0 * rng.random::<f64>() - 1.0);
                            (level * 100.0).round() / 100.0
                        })
                        .collect();
                    let shown: Vec<String> = history[..7].iter().map(|v| format!("{v}")).collect();
                    let text = format!(
                        "The {metric} reported by {subject} over the last seven days was {}. What will it be on {}?",
                        shown.join(", "),
                        day + Duration::days(1)
                    );
                    (text, Vec::new(), (None, None, Some(history)))
                }
                _ => {
                    let (min, max) = qtype.option_bounds();
                    let n = if qtype == BenchmarkType::DifficultMc {
                        rng.random_range(min..=8)
                    } else {
                        rng.random_range(min..=max)
                    };
                    let options: Vec<String> = if qtype == BenchmarkType::BinaryChoice {
                        vec!["Yes".into(), "No".into()]
                    } else {
                        sample(&mut rng, CHOICES.len(), n)
                            .into_iter()
                            .map(|j| CHOICES[j].to_string())
                            .collect()
                    };
                    let k = match qtype {
                        BenchmarkType::BinaryChoice => 1,
                        BenchmarkType::SimpleMc => rng.random_range(1..=2.min(n - 1)),
                        _ => rng.random_range(1..=3),
                    };
                    let mut correct = vec![false; n];
                    for j in sample(&mut rng, n, k) {
                        correct[j] = true;
                    }
                    let text = if qtype == BenchmarkType::BinaryChoice {
                        format!(
                            "Will {subject} announce {} on {}?",
                            CHOICES[rng.random_range(0..CHOICES.len())],
                            day + Duration::days(1)
                        )
                    } else {
                        format!(
                            "Which of the following will {subject} announce on {}?",
                            day + Duration::days(1)
                        )
                    };
                    (
                        text,
                        options,
                        (Some(n), Some(mask_to_letters(&correct)), None),
                    )
                }
            };
            let resolved = rng.random::<f64>() >= rate;
            let (num_options, correct, history) = truth_fields;
            let q = BenchmarkQuestion {
                id: id.clone(),
                qtype,
                text,
                options,
                resolution_time,
                resolver_key: BENCHMARK_RESOLVER_KEY.into(),
                history: history
                    .as_ref()
                    .map(|h| h[..7].to_vec())
                    .unwrap_or_default(),
            };
            let truth = TruthLine {
                question_id: id,
                qtype: Some(qtype),
                label: None,
                num_options,
                correct,
                history,
                published_at: resolved.then_some(published),
                resolved,
            };
            out.push((q, truth));
        }
    }
    out
}
