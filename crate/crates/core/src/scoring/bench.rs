//! Benchmark scorers: option-level F1, variability-scaled numeric score and the
//! equal-weight overall score.

use serde::{Deserialize, Serialize};

use super::ScoringError;

pub const NUMERIC_EPS: f64 = 1e-8;
pub const HISTORY_LEN: usize = 8;

/// Gold and predicted option selections as 0/1 vectors of equal length.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChoiceAnswer {
    pub gold: Vec<bool>,
    pub predicted: Vec<bool>,
}

impl ChoiceAnswer {
    pub fn new(gold: Vec<bool>, predicted: Vec<bool>) -> Result<Self, ScoringError> {
        if gold.len() != predicted.len() {
            return Err(ScoringError::LengthMismatch {
                gold: gold.len(),
                predicted: predicted.len(),
            });
        }
        if !gold.iter().any(|&g| g) {
            return Err(ScoringError::InvalidInput(
                "gold vector selects no option".into(),
            ));
        }
        Ok(Self { gold, predicted })
    }
}

/// `2 y·ŷ / (|y| + |ŷ|)`. Binary questions must select exactly one option or
/// score 0.
pub fn f1_choice(a: &ChoiceAnswer, is_binary: bool) -> Result<f64, ScoringError> {
    if a.gold.len() != a.predicted.len() {
        return Err(ScoringError::LengthMismatch {
            gold: a.gold.len(),
            predicted: a.predicted.len(),
        });
    }
    let selected = a.predicted.iter().filter(|&&s| s).count();
    if is_binary && selected != 1 {
        return Ok(0.0);
    }
    let gold = a.gold.iter().filter(|&&g| g).count();
    let overlap = a
        .gold
        .iter()
        .zip(&a.predicted)
        .filter(|(&g, &p)| g && p)
        .count();
    let denom = gold + selected;
    if denom == 0 {
        return Ok(0.0);
    }
    Ok(2.0 * overlap as f64 / denom as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NumericAnswer {
    pub predicted: f64,
    /// Eight consecutive values; the last is the resolved true value.
    pub history: Vec<f64>,
}

impl NumericAnswer {
    pub fn new(predicted: f64, history: Vec<f64>) -> Result<Self, ScoringError> {
        if history.len() != HISTORY_LEN {
            return Err(ScoringError::HistoryLength(history.len()));
        }
        Ok(Self { predicted, history })
    }

    pub fn truth(&self) -> f64 {
        self.history[HISTORY_LEN - 1]
    }
}

/// Sample standard deviation (n - 1 denominator).
pub fn sample_std(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// `max(0, 1 - ((v̂ - v) / (3σ + eps))²)` with σ over the full history.
pub fn numeric_score(a: &NumericAnswer, eps: f64) -> Result<f64, ScoringError> {
    if a.history.len() != HISTORY_LEN {
        return Err(ScoringError::HistoryLength(a.history.len()));
    }
    if !a.predicted.is_finite() {
        return Ok(0.0);
    }
    let scale = 3.0 * sample_std(&a.history) + eps;
    let z = (a.predicted - a.truth()) / scale;
    Ok((1.0 - z * z).max(0.0))
}

/// Mean of the present per-type scores (binary, simple MC, difficult MC, numeric).
pub fn overall(scores: [Option<f64>; 4]) -> Result<f64, ScoringError> {
    let present: Vec<f64> = scores.into_iter().flatten().collect();
    if present.is_empty() {
        return Err(ScoringError::Empty);
    }
    Ok(present.iter().sum::<f64>() / present.len() as f64)
}
