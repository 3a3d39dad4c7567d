//! Probabilistic scoring of binary predictions.
//!
//! Invalid predictions (no parseable probability) earn reward -1, count as wrong
//! for accuracy, contribute the worst-case term 1 to Brier, and are left out of
//! ECE.

use serde::{Deserialize, Serialize};

use super::ScoringError;
use crate::domain::Label;

pub const INVALID_REWARD: f64 = -1.0;
pub const DEFAULT_THRESHOLD: f64 = 0.5;
pub const DEFAULT_BINS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbPrediction {
    /// `None` marks an invalid prediction.
    pub probability: Option<f64>,
    pub label: Label,
}

impl ProbPrediction {
    pub fn new(probability: Option<f64>, label: Label) -> Self {
        let probability = probability.filter(|p| (0.0..=1.0).contains(p));
        Self { probability, label }
    }

    pub fn valid(p: f64, label: Label) -> Self {
        Self::new(Some(p), label)
    }

    pub fn invalid(label: Label) -> Self {
        Self {
            probability: None,
            label,
        }
    }
}

/// Negative Brier loss, or -1 for an invalid prediction.
pub fn reward(p: &ProbPrediction) -> f64 {
    match p.probability {
        Some(pi) => -(pi - p.label.as_f64()).powi(2),
        None => INVALID_REWARD,
    }
}

fn brier_term(p: &ProbPrediction) -> f64 {
    match p.probability {
        Some(pi) => (pi - p.label.as_f64()).powi(2),
        None => 1.0,
    }
}

pub fn brier(preds: &[ProbPrediction]) -> Result<f64, ScoringError> {
    if preds.is_empty() {
        return Err(ScoringError::Empty);
    }
    Ok(preds.iter().map(brier_term).sum::<f64>() / preds.len() as f64)
}

/// Positive iff `p >= threshold`, so a prediction of exactly 0.5 says "yes".
pub fn is_correct(p: &ProbPrediction, threshold: f64) -> bool {
    match p.probability {
        Some(pi) => (pi >= threshold) == (p.label == Label::Yes),
        None => false,
    }
}

pub fn accuracy(preds: &[ProbPrediction], threshold: f64) -> Result<f64, ScoringError> {
    if preds.is_empty() {
        return Err(ScoringError::Empty);
    }
    let hits = preds.iter().filter(|p| is_correct(p, threshold)).count();
    Ok(hits as f64 / preds.len() as f64)
}

/// Equal-width bin of `p`: bin `b` holds `b/bins <= p < (b+1)/bins`, with the
/// last bin closed at 1.
pub fn bin_index(p: f64, bins: usize) -> usize {
    let n = bins as f64;
    let mut b = ((p * n).floor() as usize).min(bins - 1);
    while b > 0 && p < b as f64 / n {
        b -= 1;
    }
    while b + 1 < bins && p >= (b + 1) as f64 / n {
        b += 1;
    }
    b
}

pub fn ece(preds: &[ProbPrediction], bins: usize) -> Result<f64, ScoringError> {
    if bins == 0 {
        return Err(ScoringError::InvalidInput(
            "ece needs at least one bin".into(),
        ));
    }
    let mut count = vec![0usize; bins];
    let mut sum_p = vec![0.0; bins];
    let mut sum_z = vec![0.0; bins];
    let mut total = 0usize;
    for pred in preds {
        if let Some(p) = pred.probability {
            let b = bin_index(p, bins);
            count[b] += 1;
            sum_p[b] += p;
            sum_z[b] += pred.label.as_f64();
            total += 1;
        }
    }
    if total == 0 {
        return Err(ScoringError::Empty);
    }
    Ok((0..bins)
        .filter(|&b| count[b] > 0)
        .map(|b| {
            let n = count[b] as f64;
            (n / total as f64) * (sum_z[b] / n - sum_p[b] / n).abs()
        })
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const Y: Label = Label::Yes;
    const N: Label = Label::No;

    #[test]
    fn reward_cases() {
        assert_eq!(reward(&ProbPrediction::valid(0.5, Y)), -0.25);
        assert_eq!(reward(&ProbPrediction::valid(1.0, Y)), 0.0);
        assert_eq!(reward(&ProbPrediction::valid(0.0, N)), 0.0);
        assert_eq!(reward(&ProbPrediction::invalid(Y)), -1.0);
        // Out-of-range probabilities are invalid.
        assert_eq!(reward(&ProbPrediction::new(Some(1.2), Y)), -1.0);
    }

    #[test]
    fn brier_cases() {
        let half = [
            ProbPrediction::valid(0.5, Y),
            ProbPrediction::valid(0.5, N),
            ProbPrediction::valid(0.5, N),
        ];
        assert_eq!(brier(&half).unwrap(), 0.25);
        assert_eq!(
            brier(&[ProbPrediction::valid(1.0, Y), ProbPrediction::valid(0.0, N)]).unwrap(),
            0.0
        );
        let v = brier(&[ProbPrediction::valid(0.9, Y), ProbPrediction::valid(0.2, N)]).unwrap();
        assert!((v - 0.025).abs() < 1e-15);
        assert_eq!(brier(&[ProbPrediction::invalid(N)]).unwrap(), 1.0);
        assert!(matches!(brier(&[]), Err(ScoringError::Empty)));
    }

    #[test]
    fn accuracy_ties_count_as_positive() {
        assert_eq!(
            accuracy(&[ProbPrediction::valid(0.5, Y)], 0.5).unwrap(),
            1.0
        );
        assert_eq!(
            accuracy(&[ProbPrediction::valid(0.5, N)], 0.5).unwrap(),
            0.0
        );
        assert_eq!(
            accuracy(
                &[ProbPrediction::valid(0.9, Y), ProbPrediction::valid(0.1, N)],
                0.5
            )
            .unwrap(),
            1.0
        );
        assert_eq!(accuracy(&[ProbPrediction::invalid(Y)], 0.5).unwrap(), 0.0);
    }

    #[test]
    fn ece_cases() {
        let v = ece(&[ProbPrediction::valid(0.9, Y)], 10).unwrap();
        assert!((v - 0.1).abs() < 1e-15);
        assert_eq!(bin_index(1.0, 10), 9);
        assert_eq!(bin_index(0.0, 10), 0);
        assert_eq!(bin_index(0.1, 10), 1);
        assert_eq!(bin_index(0.3, 10), 3);
        assert_eq!(bin_index(0.7, 10), 7);
        // Perfect calibration: 0.25 with 1 of 4 positive, 0.75 with 3 of 4.
        let mut preds = vec![ProbPrediction::valid(0.25, Y)];
        preds.extend(std::iter::repeat_n(ProbPrediction::valid(0.25, N), 3));
        preds.extend(std::iter::repeat_n(ProbPrediction::valid(0.75, Y), 3));
        preds.push(ProbPrediction::valid(0.75, N));
        assert_eq!(ece(&preds, 10).unwrap(), 0.0);
        // Invalid predictions are excluded.
        preds.push(ProbPrediction::invalid(Y));
        assert_eq!(ece(&preds, 10).unwrap(), 0.0);
        assert!(matches!(
            ece(&[ProbPrediction::invalid(Y)], 10),
            Err(ScoringError::Empty)
        ));
    }

    proptest! {
        #[test]
        fn reward_is_negated_brier_term(p in 0.0f64..=1.0, z in any::<bool>()) {
            let pred = ProbPrediction::valid(p, Label::from_bool(z));
            let r = reward(&pred);
            prop_assert!((-1.0..=0.0).contains(&r));
            prop_assert_eq!(r, -brier(&[pred]).unwrap());
        }

        #[test]
        fn ece_bounded_and_permutation_invariant(
            ps in proptest::collection::vec((0.0f64..=1.0, any::<bool>()), 1..60),
            rot in 0usize..60,
        ) {
            let preds: Vec<_> = ps.iter().map(|&(p, z)| ProbPrediction::valid(p, Label::from_bool(z))).collect();
            let e = ece(&preds, 10).unwrap();
            prop_assert!((0.0..=1.0).contains(&e));
            let mut rotated = preds.clone();
            rotated.rotate_left(rot % preds.len());
            rotated.reverse();
            prop_assert!((ece(&rotated, 10).unwrap() - e).abs() < 1e-12);
        }
    }
}
