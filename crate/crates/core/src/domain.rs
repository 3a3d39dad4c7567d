//! Core data model shared by every stage of the environment.
//!
//! All timestamps are UTC with whole-second precision and serialize as RFC 3339.

use std::collections::BTreeMap;
use std::fmt;

use chrono::{DateTime, NaiveDate, SubsecRound, Utc};
use serde::{Deserialize, Serialize};

pub type Timestamp = DateTime<Utc>;

/// Truncates a timestamp to whole seconds.
pub fn to_seconds(ts: Timestamp) -> Timestamp {
    ts.trunc_subsecs(0)
}

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_string())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }
    };
}

string_id!(QuestionId);
string_id!(PairId);
string_id!(TrajectoryId);
string_id!(SourceId);

/// Lowercase domain token from the configured taxonomy, or `other`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct DomainLabel(String);

pub const OTHER_DOMAIN: &str = "other";

impl DomainLabel {
    pub fn parse(token: &str) -> Result<Self, String> {
        let valid = !token.is_empty()
            && token
                .chars()
                .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_' || c == '-');
        if valid {
            Ok(Self(token.to_string()))
        } else {
            Err(format!(
                "invalid domain label {token:?}: expected a lowercase token"
            ))
        }
    }

    pub fn other() -> Self {
        Self(OTHER_DOMAIN.to_string())
    }

    pub fn is_other(&self) -> bool {
        self.0 == OTHER_DOMAIN
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Membership in a taxonomy; `other` is always a member.
    pub fn in_taxonomy(&self, taxonomy: &[DomainLabel]) -> bool {
        self.is_other() || taxonomy.contains(self)
    }
}

impl TryFrom<String> for DomainLabel {
    type Error = String;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::parse(&value)
    }
}

impl From<DomainLabel> for String {
    fn from(d: DomainLabel) -> Self {
        d.0
    }
}

impl fmt::Display for DomainLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Binary outcome label, encoded on the wire as `0` / `1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Label {
    No,
    Yes,
}

impl Label {
    pub fn from_bool(occurred: bool) -> Self {
        if occurred {
            Label::Yes
        } else {
            Label::No
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            Label::No => 0.0,
            Label::Yes => 1.0,
        }
    }

    pub fn as_u8(self) -> u8 {
        match self {
            Label::No => 0,
            Label::Yes => 1,
        }
    }
}

impl TryFrom<u8> for Label {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        match v {
            0 => Ok(Label::No),
            1 => Ok(Label::Yes),
            other => Err(format!("label must be 0 or 1, got {other}")),
        }
    }
}

impl From<Label> for u8 {
    fn from(l: Label) -> Self {
        l.as_u8()
    }
}

pub type Metadata = BTreeMap<String, String>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateEvent {
    pub source_id: SourceId,
    pub source_url: String,
    pub observed_at: Timestamp,
    pub payload: Metadata,
    pub expected_resolution: Timestamp,
    pub resolver_key: String,
}

impl CandidateEvent {
    pub fn check(&self) -> Result<(), String> {
        if self.expected_resolution <= self.observed_at {
            return Err(format!(
                "expected_resolution {} is not after observed_at {}",
                self.expected_resolution, self.observed_at
            ));
        }
        if self.resolver_key.trim().is_empty() {
            return Err("resolver_key is empty".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub id: QuestionId,
    pub text: String,
    pub prediction_time: Timestamp,
    pub resolution_time: Timestamp,
    pub source: SourceId,
    pub source_url: String,
    pub resolver_key: String,
    pub resolver_metadata: Metadata,
    pub domain: DomainLabel,
}

impl Question {
    pub fn check(&self) -> Result<(), String> {
        if self.text.trim().is_empty() {
            return Err(format!("question {} has empty text", self.id));
        }
        if self.resolution_time <= self.prediction_time {
            return Err(format!(
                "question {} resolves at {} which is not after prediction time {}",
                self.id, self.resolution_time, self.prediction_time
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuestionDescriptionPair {
    pub pair_id: PairId,
    pub question: Question,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

impl QuestionDescriptionPair {
    /// Builds a pair, folding a blank description into `None`.
    pub fn new(pair_id: PairId, question: Question, description: Option<String>) -> Self {
        let description = description.filter(|d| !d.trim().is_empty());
        Self {
            pair_id,
            question,
            description,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub action: String,
    pub observation: String,
    pub issued_at: Timestamp,
}

/// A rejected final answer and the environment notice that followed it (if the
/// rollout continued).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correction {
    pub after_step: usize,
    pub rejected_answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notice: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TrajectoryStatus {
    Pending,
    Resolved,
    Discarded,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub trajectory_id: TrajectoryId,
    pub question_id: QuestionId,
    pub rollout_index: u32,
    pub prediction_time: Timestamp,
    /// Agent-facing prompt the rollout started from.
    pub prompt: String,
    pub steps: Vec<Step>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub corrections: Vec<Correction>,
    pub raw_final_answer: String,
    pub final_probability: Option<f64>,
    pub status: TrajectoryStatus,
    pub label: Option<Label>,
    pub reward: Option<f64>,
}

impl Trajectory {
    pub fn trajectory_id_for(question_id: &QuestionId, rollout_index: u32) -> TrajectoryId {
        TrajectoryId(format!("{question_id}-k{rollout_index}"))
    }

    /// Completed with a parsed probability.
    pub fn is_valid_answer(&self) -> bool {
        self.final_probability.is_some()
    }

    /// PENDING -> RESOLVED. Panics on any other source state: callers go through
    /// the ledger, which checks the status machine first.
    pub fn resolved(mut self, label: Label, reward: f64) -> Self {
        assert_eq!(
            self.status,
            TrajectoryStatus::Pending,
            "only PENDING trajectories resolve"
        );
        self.status = TrajectoryStatus::Resolved;
        self.label = Some(label);
        self.reward = Some(reward);
        self
    }

    /// PENDING -> DISCARDED.
    pub fn discarded(mut self) -> Self {
        assert_eq!(
            self.status,
            TrajectoryStatus::Pending,
            "only PENDING trajectories discard"
        );
        self.status = TrajectoryStatus::Discarded;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Violation {
    LabelOnPending,
    RewardOnPending,
    MissingLabel,
    MissingReward,
    RewardOutOfRange(String),
    LabelOnDiscarded,
    RewardOnDiscarded,
    NoSearchAction,
    EmptyAction(usize),
    ProbabilityOutOfRange(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::LabelOnPending => f.write_str("label on PENDING"),
            Violation::RewardOnPending => f.write_str("reward on PENDING"),
            Violation::MissingLabel => f.write_str("RESOLVED without label"),
            Violation::MissingReward => f.write_str("RESOLVED without reward"),
            Violation::RewardOutOfRange(r) => write!(f, "reward {r} outside [-1, 0]"),
            Violation::LabelOnDiscarded => f.write_str("label on DISCARDED"),
            Violation::RewardOnDiscarded => f.write_str("reward on DISCARDED"),
            Violation::NoSearchAction => f.write_str("no search action"),
            Violation::EmptyAction(i) => write!(f, "step {i} has an empty action"),
            Violation::ProbabilityOutOfRange(p) => {
                write!(f, "final probability {p} outside [0, 1]")
            }
        }
    }
}

/// Every invariant of [`Trajectory`] that `t` breaks; empty means valid.
pub fn validate_trajectory(t: &Trajectory) -> Vec<Violation> {
    let mut out = Vec::new();
    match t.status {
        TrajectoryStatus::Pending => {
            if t.label.is_some() {
                out.push(Violation::LabelOnPending);
            }
            if t.reward.is_some() {
                out.push(Violation::RewardOnPending);
            }
        }
        TrajectoryStatus::Resolved => {
            if t.label.is_none() {
                out.push(Violation::MissingLabel);
            }
            match t.reward {
                None => out.push(Violation::MissingReward),
                Some(r) if !(-1.0..=0.0).contains(&r) => {
                    out.push(Violation::RewardOutOfRange(r.to_string()))
                }
                Some(_) => {}
            }
        }
        TrajectoryStatus::Discarded => {
            if t.label.is_some() {
                out.push(Violation::LabelOnDiscarded);
            }
            if t.reward.is_some() {
                out.push(Violation::RewardOnDiscarded);
            }
        }
    }
    // A rollout that reached an answer must have searched at least once.
    if t.steps.is_empty() && !t.raw_final_answer.is_empty() {
        out.push(Violation::NoSearchAction);
    }
    for (i, step) in t.steps.iter().enumerate() {
        if step.action.trim().is_empty() {
            out.push(Violation::EmptyAction(i));
        }
    }
    if let Some(p) = t.final_probability {
        if !(0.0..=1.0).contains(&p) {
            out.push(Violation::ProbabilityOutOfRange(p.to_string()));
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub question_id: QuestionId,
    pub label: Label,
    pub resolved_at: Timestamp,
    pub evidence: String,
}

/// Calendar day of a UTC instant.
pub fn utc_day(ts: Timestamp) -> NaiveDate {
    ts.date_naive()
}

/// Benchmark question formats, in report order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchmarkType {
    BinaryChoice,
    SimpleMc,
    DifficultMc,
    Numeric,
}

impl BenchmarkType {
    pub const ALL: [BenchmarkType; 4] = [
        BenchmarkType::BinaryChoice,
        BenchmarkType::SimpleMc,
        BenchmarkType::DifficultMc,
        BenchmarkType::Numeric,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BenchmarkType::BinaryChoice => "binary_choice",
            BenchmarkType::SimpleMc => "simple_mc",
            BenchmarkType::DifficultMc => "difficult_mc",
            BenchmarkType::Numeric => "numeric",
        }
    }

    /// Inclusive option-count bounds; numeric questions carry no options.
    pub fn option_bounds(self) -> (usize, usize) {
        match self {
            BenchmarkType::BinaryChoice => (2, 2),
            BenchmarkType::SimpleMc => (3, 4),
            BenchmarkType::DifficultMc => (5, 26),
            BenchmarkType::Numeric => (0, 0),
        }
    }

    pub fn default_cap(self) -> usize {
        match self {
            BenchmarkType::BinaryChoice => 5,
            BenchmarkType::SimpleMc => 10,
            BenchmarkType::DifficultMc => 15,
            BenchmarkType::Numeric => 20,
        }
    }

    /// Column heading in score tables.
    pub fn short_name(self) -> &'static str {
        match self {
            BenchmarkType::BinaryChoice => "S_bin",
            BenchmarkType::SimpleMc => "S_smc",
            BenchmarkType::DifficultMc => "S_dmc",
            BenchmarkType::Numeric => "S_num",
        }
    }
}

impl fmt::Display for BenchmarkType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for BenchmarkType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BenchmarkType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown benchmark type {s:?}"))
    }
}
