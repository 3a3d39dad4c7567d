//! Candidate-event sources: a registry of adapters keyed by source id.
//!
//! Two adapters ship: a replayable JSONL file feed and the seeded synthetic
//! world. Live crawlers plug in through [`SourceAdapter`].

pub mod synthetic;

use std::collections::BTreeMap;
use std::path::PathBuf;

use chrono::{Duration, NaiveDate};
use chrono_tz::Tz;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::{local_day, parse_timezone};
use crate::domain::{CandidateEvent, DomainLabel, Metadata, SourceId};
use crate::jsonl;

pub use synthetic::{
    generate_synthetic_world, SyntheticConfig, SyntheticWorld, TruthRecord, TruthStatus,
    Vocabulary, WorldEvent,
};

#[derive(Debug, Error)]
pub enum SourceError {
    #[error("unknown source {0}")]
    UnknownSource(SourceId),
    #[error("source {source_id}: missing parameter {param}")]
    MissingParam { source_id: SourceId, param: String },
    #[error("source {source_id}: invalid parameter {param}: {reason}")]
    InvalidParam {
        source_id: SourceId,
        param: String,
        reason: String,
    },
    #[error("source {0} is already registered")]
    Duplicate(SourceId),
    #[error("cannot read feed {path}: {err}")]
    Unreadable { path: PathBuf, err: std::io::Error },
    #[error("invalid synthetic configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    FileFeed,
    Synthetic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub source_id: SourceId,
    pub kind: SourceKind,
    pub domain_hint: DomainLabel,
    #[serde(default)]
    pub params: Metadata,
}

/// A record that could not be turned into a [`CandidateEvent`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordError {
    pub source_id: SourceId,
    pub line: usize,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FetchBatch {
    pub events: Vec<CandidateEvent>,
    pub errors: Vec<RecordError>,
}

pub trait SourceAdapter: Send + Sync {
    fn spec(&self) -> &SourceSpec;

    /// Events whose expected resolution falls on `day + 1`.
    fn fetch(&self, day: NaiveDate) -> Result<FetchBatch, SourceError>;
}

/// Replays a JSONL file of candidate events.
pub struct FileFeed {
    spec: SourceSpec,
    path: PathBuf,
    tz: Tz,
}

impl FileFeed {
    pub fn from_spec(spec: SourceSpec) -> Result<Self, SourceError> {
        let path = spec
            .params
            .get("path")
            .ok_or_else(|| SourceError::MissingParam {
                source_id: spec.source_id.clone(),
                param: "path".into(),
            })?;
        let path = PathBuf::from(path);
        let tz = optional_tz(&spec)?;
        Ok(Self { spec, path, tz })
    }
}

fn optional_tz(spec: &SourceSpec) -> Result<Tz, SourceError> {
    match spec.params.get("timezone") {
        None => Ok(Tz::UTC),
        Some(s) => parse_timezone(s).map_err(|reason| SourceError::InvalidParam {
            source_id: spec.source_id.clone(),
            param: "timezone".into(),
            reason,
        }),
    }
}

impl SourceAdapter for FileFeed {
    fn spec(&self) -> &SourceSpec {
        &self.spec
    }

    fn fetch(&self, day: NaiveDate) -> Result<FetchBatch, SourceError> {
        let text = std::fs::read_to_string(&self.path).map_err(|err| SourceError::Unreadable {
            path: self.path.clone(),
            err,
        })?;
        let (events, line_errors) = jsonl::parse_lines::<CandidateEvent>(&text);
        let source_id = &self.spec.source_id;
        let mut batch = FetchBatch {
            events: Vec::new(),
            errors: line_errors
                .into_iter()
                .map(|e| RecordError {
                    source_id: source_id.clone(),
                    line: e.line,
                    message: e.message,
                })
                .collect(),
        };
        let target = day + Duration::days(1);
        for (i, ev) in events.into_iter().enumerate() {
            if let Err(message) = ev.check() {
                batch.errors.push(RecordError {
                    source_id: source_id.clone(),
                    line: i + 1,
                    message,
                });
                continue;
            }
            if local_day(self.tz, ev.expected_resolution) == target {
                batch.events.push(ev);
            }
        }
        batch.errors.sort_by_key(|e| e.line);
        Ok(batch)
    }
}

/// Serves one synthetic source; events for each day are regenerated on demand.
pub struct SyntheticSource {
    spec: SourceSpec,
    config: SyntheticConfig,
    seed: u64,
}

impl SyntheticSource {
    pub fn new(spec: SourceSpec, config: SyntheticConfig, seed: u64) -> Self {
        Self { spec, config, seed }
    }

    pub fn from_spec(spec: SourceSpec) -> Result<Self, SourceError> {
        let (config, seed) = SyntheticConfig::from_params(&spec.source_id, &spec.params)?;
        Ok(Self::new(spec, config, seed))
    }

    pub fn config(&self) -> &SyntheticConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

impl SourceAdapter for SyntheticSource {
    fn spec(&self) -> &SourceSpec {
        &self.spec
    }

    fn fetch(&self, day: NaiveDate) -> Result<FetchBatch, SourceError> {
        let events = synthetic::generate_day(&self.config, self.seed, day)?;
        let target = day + Duration::days(1);
        Ok(FetchBatch {
            events: events
                .into_iter()
                .map(|w| w.event)
                .filter(|ev| local_day(self.config.timezone, ev.expected_resolution) == target)
                .collect(),
            errors: Vec::new(),
        })
    }
}

#[derive(Default)]
pub struct SourceRegistry {
    adapters: BTreeMap<SourceId, Box<dyn SourceAdapter>>,
}

impl SourceRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds the adapter named by `spec.kind` and registers it.
    pub fn register_spec(&mut self, spec: SourceSpec) -> Result<(), SourceError> {
        let adapter: Box<dyn SourceAdapter> = match spec.kind {
            SourceKind::FileFeed => Box::new(FileFeed::from_spec(spec)?),
            SourceKind::Synthetic => Box::new(SyntheticSource::from_spec(spec)?),
        };
        self.register(adapter)
    }

    pub fn register(&mut self, adapter: Box<dyn SourceAdapter>) -> Result<(), SourceError> {
        let id = adapter.spec().source_id.clone();
        if self.adapters.contains_key(&id) {
            return Err(SourceError::Duplicate(id));
        }
        self.adapters.insert(id, adapter);
        Ok(())
    }

    pub fn source_ids(&self) -> impl Iterator<Item = &SourceId> {
        self.adapters.keys()
    }

    pub fn get(&self, id: &SourceId) -> Option<&dyn SourceAdapter> {
        self.adapters.get(id).map(|a| a.as_ref())
    }

    /// Fetches every registered source; a failing source is reported and skipped.
    pub fn fetch_all(&self, day: NaiveDate) -> (FetchBatch, Vec<SourceError>) {
        let mut batch = FetchBatch::default();
        let mut failures = Vec::new();
        for adapter in self.adapters.values() {
            match adapter.fetch(day) {
                Ok(b) => {
                    batch.events.extend(b.events);
                    batch.errors.extend(b.errors);
                }
                Err(e) => failures.push(e),
            }
        }
        (batch, failures)
    }
}

pub fn fetch_candidates(
    registry: &SourceRegistry,
    source_id: &SourceId,
    day: NaiveDate,
) -> Result<FetchBatch, SourceError> {
    registry
        .get(source_id)
        .ok_or_else(|| SourceError::UnknownSource(source_id.clone()))?
        .fetch(day)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{TimeZone, Utc};

    fn day() -> NaiveDate {
        NaiveDate::from_ymd_opt(2026, 4, 17).unwrap()
    }

    fn event(i: u32) -> CandidateEvent {
        CandidateEvent {
            source_id: "feed".into(),
            source_url: format!("https://example.org/{i}"),
            observed_at: Utc.with_ymd_and_hms(2026, 4, 17, 12, 0, 0).unwrap(),
            payload: [("city".to_string(), "Dallas".to_string())].into(),
            expected_resolution: Utc.with_ymd_and_hms(2026, 4, 18, 12, 30, 0).unwrap(),
            resolver_key: "answers".into(),
        }
    }

    fn feed_registry(contents: &str) -> (tempfile::TempDir, SourceRegistry) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("feed.jsonl");
        std::fs::write(&path, contents).unwrap();
        let mut reg = SourceRegistry::new();
        reg.register_spec(SourceSpec {
            source_id: "feed".into(),
            kind: SourceKind::FileFeed,
            domain_hint: DomainLabel::parse("weather").unwrap(),
            params: [("path".to_string(), path.display().to_string())].into(),
        })
        .unwrap();
        (dir, reg)
    }

    #[test]
    fn file_feed_passes_records_through() {
        let text = jsonl::to_string(&[event(1), event(2), event(3)]);
        let (_d, reg) = feed_registry(&text);
        let batch = fetch_candidates(&reg, &"feed".into(), day()).unwrap();
        assert_eq!(batch.events.len(), 3);
        assert!(batch.errors.is_empty());
        assert_eq!(batch.events[1], event(2));
    }

    #[test]
    fn malformed_record_is_reported_and_batch_continues() {
        let text = format!(
            "{}\n{{\"source_id\": 3}}\n{}\n",
            serde_json::to_string(&event(1)).unwrap(),
            serde_json::to_string(&event(3)).unwrap()
        );
        let (_d, reg) = feed_registry(&text);
        let batch = fetch_candidates(&reg, &"feed".into(), day()).unwrap();
        assert_eq!(batch.events.len(), 2);
        assert_eq!(batch.errors.len(), 1);
        assert_eq!(batch.errors[0].line, 2);
    }

    #[test]
    fn events_for_other_days_are_not_returned() {
        let text = jsonl::to_string(&[event(1)]);
        let (_d, reg) = feed_registry(&text);
        let other = NaiveDate::from_ymd_opt(2026, 4, 18).unwrap();
        assert!(fetch_candidates(&reg, &"feed".into(), other)
            .unwrap()
            .events
            .is_empty());
    }

    #[test]
    fn unknown_source_and_unreadable_feed() {
        let reg = SourceRegistry::new();
        assert!(matches!(
            fetch_candidates(&reg, &"nope".into(), day()),
            Err(SourceError::UnknownSource(_))
        ));
        let mut reg = SourceRegistry::new();
        reg.register_spec(SourceSpec {
            source_id: "gone".into(),
            kind: SourceKind::FileFeed,
            domain_hint: DomainLabel::other(),
            params: [("path".to_string(), "/nonexistent/feed.jsonl".to_string())].into(),
        })
        .unwrap();
        assert!(matches!(
            fetch_candidates(&reg, &"gone".into(), day()),
            Err(SourceError::Unreadable { .. })
        ));
    }

    #[test]
    fn file_feed_requires_path() {
        let err = SourceRegistry::new().register_spec(SourceSpec {
            source_id: "x".into(),
            kind: SourceKind::FileFeed,
            domain_hint: DomainLabel::other(),
            params: Metadata::new(),
        });
        assert!(matches!(err, Err(SourceError::MissingParam { .. })));
    }

    #[test]
    fn synthetic_fetch_is_repeatable() {
        let mut reg = SourceRegistry::new();
        reg.register_spec(SourceSpec {
            source_id: "synth".into(),
            kind: SourceKind::Synthetic,
            domain_hint: DomainLabel::other(),
            params: [
                ("seed", "7"),
                ("event_rate", "100"),
                ("latent_p_min", "0"),
                ("latent_p_max", "1"),
                ("unresolved_rate", "0.3565"),
                ("start_day", "2026-04-17"),
            ]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect(),
        })
        .unwrap();
        let a = fetch_candidates(&reg, &"synth".into(), day()).unwrap();
        let b = fetch_candidates(&reg, &"synth".into(), day()).unwrap();
        assert_eq!(a.events.len(), 100);
        assert_eq!(jsonl::to_string(&a.events), jsonl::to_string(&b.events));
    }
}
