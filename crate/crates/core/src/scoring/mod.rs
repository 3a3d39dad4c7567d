//! Rewards, evaluation metrics, benchmark scores and bootstrap intervals.

pub mod bench;
pub mod bootstrap;
pub mod prob;
pub mod report;

use thiserror::Error;

pub use bench::{
    f1_choice, numeric_score, overall, sample_std, ChoiceAnswer, NumericAnswer, NUMERIC_EPS,
};
pub use bootstrap::{bootstrap_ci, bootstrap_statistic, DEFAULT_LEVEL, DEFAULT_RESAMPLES};
pub use prob::{accuracy, brier, ece, reward, ProbPrediction, DEFAULT_BINS, DEFAULT_THRESHOLD};
pub use report::{
    render_table, BenchmarkScores, DomainScore, Interval, ProbabilisticSummary, QuestionType,
    ScoreReport,
};

#[derive(Debug, Error, PartialEq)]
pub enum ScoringError {
    #[error("no values to score")]
    Empty,
    #[error("gold has {gold} options but prediction has {predicted}")]
    LengthMismatch { gold: usize, predicted: usize },
    #[error("numeric history must have 8 values, got {0}")]
    HistoryLength(usize),
    #[error("{0}")]
    InvalidInput(String),
}
