//! Outcome retrieval. Each question names a resolver by `resolver_key`; the
//! resolver looks up the published record, checks it matches the question's
//! metadata, and returns either an [`Outcome`] or an [`Unresolved`] reason.
//! Resolvers never invent a label.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{Label, Outcome, Question, QuestionId, Timestamp};
use crate::jsonl;
use crate::sources::synthetic::{TruthRecord, TruthStatus};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnresolvedReason {
    NotPublished,
    MatchFailed,
    Postponed,
    ResolverError,
}

impl UnresolvedReason {
    pub fn as_str(self) -> &'static str {
        match self {
            UnresolvedReason::NotPublished => "not_published",
            UnresolvedReason::MatchFailed => "match_failed",
            UnresolvedReason::Postponed => "postponed",
            UnresolvedReason::ResolverError => "resolver_error",
        }
    }
}

impl fmt::Display for UnresolvedReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Unresolved {
    pub question_id: QuestionId,
    pub reason: UnresolvedReason,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Resolution {
    Resolved(Outcome),
    Unresolved(Unresolved),
}

fn unresolved(q: &Question, reason: UnresolvedReason, detail: impl Into<String>) -> Resolution {
    Resolution::Unresolved(Unresolved {
        question_id: q.id.clone(),
        reason,
        detail: detail.into(),
    })
}

/// A source-specific outcome lookup. Must tolerate concurrent calls.
pub trait Resolver: Send + Sync {
    fn resolver_key(&self) -> &str;
    fn resolve(&self, q: &Question, now: Timestamp) -> Resolution;
}

#[derive(Default)]
pub struct ResolverRegistry {
    resolvers: BTreeMap<String, Box<dyn Resolver>>,
}

impl ResolverRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a resolver, replacing any with the same key.
    pub fn register(&mut self, r: Box<dyn Resolver>) {
        self.resolvers.insert(r.resolver_key().to_string(), r);
    }

    pub fn get(&self, key: &str) -> Option<&dyn Resolver> {
        self.resolvers.get(key).map(|r| r.as_ref())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.resolvers.keys().map(String::as_str)
    }
}

pub fn resolve_question(q: &Question, registry: &ResolverRegistry, now: Timestamp) -> Resolution {
    if now < q.resolution_time {
        return unresolved(
            q,
            UnresolvedReason::NotPublished,
            format!("resolution time {} not reached", q.resolution_time),
        );
    }
    match registry.get(&q.resolver_key) {
        Some(r) => r.resolve(q, now),
        None => unresolved(
            q,
            UnresolvedReason::ResolverError,
            format!("no resolver registered for {:?}", q.resolver_key),
        ),
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BatchResolution {
    /// Sorted by question id.
    pub outcomes: Vec<Outcome>,
    /// Sorted by question id.
    pub unresolved: Vec<Unresolved>,
}

impl BatchResolution {
    pub fn total(&self) -> usize {
        self.outcomes.len() + self.unresolved.len()
    }

    pub fn unresolved_fraction(&self) -> f64 {
        if self.total() == 0 {
            0.0
        } else {
            self.unresolved.len() as f64 / self.total() as f64
        }
    }

    pub fn reason_counts(&self) -> BTreeMap<UnresolvedReason, usize> {
        let mut out = BTreeMap::new();
        for u in &self.unresolved {
            *out.entry(u.reason).or_insert(0) += 1;
        }
        out
    }
}

pub fn resolve_batch(
    questions: &[Question],
    registry: &ResolverRegistry,
    now: Timestamp,
) -> BatchResolution {
    let results: Vec<Resolution> = questions
        .par_iter()
        .map(|q| resolve_question(q, registry, now))
        .collect();
    let mut out = BatchResolution::default();
    for r in results {
        match r {
            Resolution::Resolved(o) => out.outcomes.push(o),
            Resolution::Unresolved(u) => out.unresolved.push(u),
        }
    }
    out.outcomes
        .sort_by(|a, b| a.question_id.cmp(&b.question_id));
    out.unresolved
        .sort_by(|a, b| a.question_id.cmp(&b.question_id));
    out
}

pub const SYNTHETIC_RESOLVER_KEY: &str = "synthetic";

/// Reads the synthetic world's truth sidecar, keyed by `event_key`.
pub struct SyntheticTruthResolver {
    key: String,
    truth: HashMap<String, TruthRecord>,
}

impl SyntheticTruthResolver {
    pub fn new(key: impl Into<String>, truth: impl IntoIterator<Item = TruthRecord>) -> Self {
        Self {
            key: key.into(),
            truth: truth
                .into_iter()
                .map(|t| (t.event_key.clone(), t))
                .collect(),
        }
    }

    pub fn load(key: impl Into<String>, path: &Path) -> std::io::Result<Self> {
        Ok(Self::new(key, jsonl::read_strict::<TruthRecord>(path)?))
    }

    pub fn len(&self) -> usize {
        self.truth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.truth.is_empty()
    }
}

impl Resolver for SyntheticTruthResolver {
    fn resolver_key(&self) -> &str {
        &self.key
    }

    fn resolve(&self, q: &Question, now: Timestamp) -> Resolution {
        let Some(event_key) = q.resolver_metadata.get("event_key") else {
            return unresolved(
                q,
                UnresolvedReason::ResolverError,
                "question has no event_key",
            );
        };
        let Some(t) = self.truth.get(event_key) else {
            return unresolved(
                q,
                UnresolvedReason::ResolverError,
                format!("no truth record for {event_key}"),
            );
        };
        match t.status {
            TruthStatus::Postponed => {
                return unresolved(q, UnresolvedReason::Postponed, "event postponed")
            }
            TruthStatus::NotPublished => {
                return unresolved(q, UnresolvedReason::NotPublished, "no published record")
            }
            TruthStatus::Published if t.published_at > now => {
                return unresolved(
                    q,
                    UnresolvedReason::NotPublished,
                    format!("published only at {}", t.published_at),
                )
            }
            TruthStatus::Published => {}
        }
        let expected = q.resolver_metadata.get("identifier").unwrap_or(event_key);
        if &t.identifier != expected {
            return unresolved(
                q,
                UnresolvedReason::MatchFailed,
                format!(
                    "record identifier {} does not match {expected}",
                    t.identifier
                ),
            );
        }
        Resolution::Resolved(Outcome {
            question_id: q.id.clone(),
            label: t.realized_label,
            resolved_at: now,
            evidence: t.evidence.clone(),
        })
    }
}

/// One line of an answer file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnswerRecord {
    pub resolver_key: String,
    pub identifier: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    pub published_at: Timestamp,
}

/// Looks answers up by the question's `identifier` metadata in a JSONL
/// answer file. Only records carrying this resolver's key are used.
pub struct FileLookupResolver {
    key: String,
    answers: HashMap<String, Vec<AnswerRecord>>,
}

impl FileLookupResolver {
    pub fn new(key: impl Into<String>, records: impl IntoIterator<Item = AnswerRecord>) -> Self {
        let key = key.into();
        let mut answers: HashMap<String, Vec<AnswerRecord>> = HashMap::new();
        for r in records.into_iter().filter(|r| r.resolver_key == key) {
            answers.entry(r.identifier.clone()).or_default().push(r);
        }
        Self { key, answers }
    }

    pub fn load(key: impl Into<String>, path: &Path) -> std::io::Result<Self> {
        Ok(Self::new(key, jsonl::read_strict::<AnswerRecord>(path)?))
    }
}

impl Resolver for FileLookupResolver {
    fn resolver_key(&self) -> &str {
        &self.key
    }

    fn resolve(&self, q: &Question, now: Timestamp) -> Resolution {
        let Some(identifier) = q.resolver_metadata.get("identifier") else {
            return unresolved(
                q,
                UnresolvedReason::ResolverError,
                "question has no identifier",
            );
        };
        let visible: Vec<&AnswerRecord> = self
            .answers
            .get(identifier)
            .into_iter()
            .flatten()
            .filter(|r| r.published_at <= now)
            .collect();
        let Some(first) = visible.first() else {
            return unresolved(
                q,
                UnresolvedReason::NotPublished,
                format!("no answer for {identifier}"),
            );
        };
        if visible.iter().any(|r| r.label != first.label) {
            return unresolved(
                q,
                UnresolvedReason::MatchFailed,
                format!("conflicting answers for {identifier}"),
            );
        }
        match first.label {
            Some(label) => Resolution::Resolved(Outcome {
                question_id: q.id.clone(),
                label,
                resolved_at: now,
                evidence: format!(
                    "{}: answer file record published {}",
                    identifier, first.published_at
                ),
            }),
            None => unresolved(
                q,
                UnresolvedReason::ResolverError,
                format!("answer for {identifier} has no binary label"),
            ),
        }
    }
}
