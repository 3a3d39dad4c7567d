//! The three-way quality gate: resolvable, meaningful, safe.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::PipelineError;
use crate::domain::{PairId, Question, QuestionDescriptionPair};

const DEFAULT_BLOCKLIST: &str = include_str!("../../assets/blocklist.txt");
const DEFAULT_TRIVIAL: &str = include_str!("../../assets/trivial_patterns.txt");

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Resolvable,
    Meaningful,
    Safe,
}

impl Criterion {
    pub const ALL: [Criterion; 3] = [
        Criterion::Resolvable,
        Criterion::Meaningful,
        Criterion::Safe,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Criterion::Resolvable => "resolvable",
            Criterion::Meaningful => "meaningful",
            Criterion::Safe => "safe",
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterVerdict {
    pub pair_id: PairId,
    pub filter_name: Criterion,
    pub eligible: bool,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeDecision {
    pub eligible: bool,
    pub reason: String,
}

#[derive(Debug, Error)]
pub enum JudgeError {
    #[error("judge transport failure: {0}")]
    Transport(String),
    #[error("judge returned an unusable response: {0}")]
    BadResponse(String),
}

pub trait Judge: Send + Sync {
    fn criterion(&self) -> Criterion;
    fn judge(
        &self,
        question: &Question,
        description: Option<&str>,
    ) -> Result<JudgeDecision, JudgeError>;
}

pub const JUDGE_UNAVAILABLE: &str = "judge-unavailable";

/// One judge per criterion.
pub struct JudgePanel {
    judges: Vec<Box<dyn Judge>>,
}

impl JudgePanel {
    pub fn new(judges: Vec<Box<dyn Judge>>) -> Result<Self, PipelineError> {
        let got: Vec<Criterion> = judges.iter().map(|j| j.criterion()).collect();
        let distinct: BTreeSet<Criterion> = got.iter().copied().collect();
        if judges.len() != 3 || distinct.len() != 3 {
            return Err(PipelineError::Config(format!(
                "expected exactly one judge per criterion, got {got:?}"
            )));
        }
        let mut judges = judges;
        judges.sort_by_key(|j| j.criterion());
        Ok(Self { judges })
    }

    /// Rule-based reference panel.
    pub fn reference(registered_resolvers: impl IntoIterator<Item = String>) -> Self {
        Self::new(vec![
            Box::new(ResolvabilityJudge::new(registered_resolvers)),
            Box::new(MeaningfulnessJudge::default()),
            Box::new(SafetyJudge::default()),
        ])
        .expect("one judge per criterion")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterOutcome {
    pub keep: bool,
    pub verdicts: Vec<FilterVerdict>,
}

impl FilterOutcome {
    pub fn drop_reasons(&self) -> Vec<String> {
        self.verdicts
            .iter()
            .filter(|v| !v.eligible)
            .map(|v| format!("{}: {}", v.filter_name, v.reason))
            .collect()
    }
}

/// Runs every judge; the pair is kept only if all three find it eligible. A
/// judge that fails counts as ineligible.
pub fn apply_filters(pair: &QuestionDescriptionPair, panel: &JudgePanel) -> FilterOutcome {
    let verdicts: Vec<FilterVerdict> = panel
        .judges
        .iter()
        .map(|judge| {
            let (eligible, reason) = match judge.judge(&pair.question, pair.description.as_deref())
            {
                Ok(d) => (d.eligible, d.reason),
                Err(e) => {
                    tracing::warn!(pair = %pair.pair_id, criterion = %judge.criterion(), "{e}");
                    (false, JUDGE_UNAVAILABLE.to_string())
                }
            };
            FilterVerdict {
                pair_id: pair.pair_id.clone(),
                filter_name: judge.criterion(),
                eligible,
                reason,
            }
        })
        .collect();
    FilterOutcome {
        keep: verdicts.iter().all(|v| v.eligible),
        verdicts,
    }
}

fn parse_word_list(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

pub fn load_word_list(path: &Path) -> Result<Vec<String>, PipelineError> {
    std::fs::read_to_string(path)
        .map(|t| parse_word_list(&t))
        .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
}

fn haystack(question: &Question, description: Option<&str>) -> String {
    let mut s = question.text.to_lowercase();
    if let Some(d) = description {
        s.push('\n');
        s.push_str(&d.to_lowercase());
    }
    s
}

/// Eligible when a registered resolver can route the question and it resolves
/// after it is asked.
pub struct ResolvabilityJudge {
    registered: BTreeSet<String>,
}

impl ResolvabilityJudge {
    pub fn new(registered: impl IntoIterator<Item = String>) -> Self {
        Self {
            registered: registered.into_iter().collect(),
        }
    }
}

impl Judge for ResolvabilityJudge {
    fn criterion(&self) -> Criterion {
        Criterion::Resolvable
    }

    fn judge(&self, q: &Question, _: Option<&str>) -> Result<JudgeDecision, JudgeError> {
        let decision = if !self.registered.contains(&q.resolver_key) {
            JudgeDecision {
                eligible: false,
                reason: format!("no registered resolver for {:?}", q.resolver_key),
            }
        } else if q.resolution_time <= q.prediction_time {
            JudgeDecision {
                eligible: false,
                reason: "resolution time is not after prediction time".into(),
            }
        } else {
            JudgeDecision {
                eligible: true,
                reason: format!("routed to {}", q.resolver_key),
            }
        };
        Ok(decision)
    }
}

pub struct MeaningfulnessJudge {
    pub min_words: usize,
    pub trivial_patterns: Vec<String>,
}

impl Default for MeaningfulnessJudge {
    fn default() -> Self {
        Self {
            min_words: 5,
            trivial_patterns: parse_word_list(DEFAULT_TRIVIAL),
        }
    }
}

impl Judge for MeaningfulnessJudge {
    fn criterion(&self) -> Criterion {
        Criterion::Meaningful
    }

    fn judge(&self, q: &Question, _: Option<&str>) -> Result<JudgeDecision, JudgeError> {
        let words = q.text.split_whitespace().count();
        if words < self.min_words {
            return Ok(JudgeDecision {
                eligible: false,
                reason: format!("question has {words} words, fewer than {}", self.min_words),
            });
        }
        let text = q.text.to_lowercase();
        if let Some(p) = self
            .trivial_patterns
            .iter()
            .find(|p| text.contains(p.as_str()))
        {
            return Ok(JudgeDecision {
                eligible: false,
                reason: format!("trivial outcome ({p})"),
            });
        }
        Ok(JudgeDecision {
            eligible: true,
            reason: "concerns a substantive outcome".into(),
        })
    }
}

pub struct SafetyJudge {
    pub blocklist: Vec<String>,
}

impl Default for SafetyJudge {
    fn default() -> Self {
        Self {
            blocklist: parse_word_list(DEFAULT_BLOCKLIST),
        }
    }
}

impl Judge for SafetyJudge {
    fn criterion(&self) -> Criterion {
        Criterion::Safe
    }

    fn judge(&self, q: &Question, description: Option<&str>) -> Result<JudgeDecision, JudgeError> {
        let text = haystack(q, description);
        Ok(
            match self.blocklist.iter().find(|w| text.contains(w.as_str())) {
                Some(w) => JudgeDecision {
                    eligible: false,
                    reason: format!("blocklisted term {w:?}"),
                },
                None => JudgeDecision {
                    eligible: true,
                    reason: "no blocklisted terms".into(),
                },
            },
        )
    }
}
