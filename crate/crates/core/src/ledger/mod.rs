//! Two-phase trajectory store.
//!
//! Rollouts append PREFIX records at prediction time. Once outcomes are known,
//! each question's PENDING trajectories either get a BACKFILL (label and
//! reward) or a DISCARD. The log is the source of truth: [`replay`] folds it
//! back into a [`LedgerState`] equal to the live one.
//!
//! On disk there is one JSONL log per issue day under `log/`, plus
//! `index.json` summarizing them. Later records for a trajectory go to the
//! log of the day it was issued.

pub mod export;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    validate_trajectory, Label, Outcome, QuestionId, Timestamp, Trajectory, TrajectoryId,
    TrajectoryStatus,
};
use crate::jsonl;

pub use export::{compute_group_advantages, mask_spans, MaskSpan, TrainingEntry, TrainingGroup};

#[derive(Debug, Error)]
pub enum LedgerError {
    #[error("trajectory {0} is already in the ledger")]
    Duplicate(TrajectoryId),
    #[error("trajectory {id} must be PENDING to append, found {status:?}")]
    NotPending {
        id: TrajectoryId,
        status: TrajectoryStatus,
    },
    #[error("trajectory {id} is malformed: {reason}")]
    Malformed { id: TrajectoryId, reason: String },
    #[error("question {0} has no trajectories")]
    UnknownQuestion(QuestionId),
    #[error(
        "question {question_id} already resolved with label {existing:?}, refusing {requested:?}"
    )]
    Conflict {
        question_id: QuestionId,
        existing: Label,
        requested: Label,
    },
    #[error("group advantages need at least one reward")]
    EmptyGroup,
    #[error("replay: {0}")]
    Replay(#[from] ReplayError),
    #[error("ledger storage: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error, PartialEq)]
pub enum ReplayError {
    #[error("record {sequence_no}: sequence number not above {previous}")]
    OutOfOrder { sequence_no: u64, previous: u64 },
    #[error("record {sequence_no}: second PREFIX for {trajectory_id}")]
    DuplicatePrefix {
        sequence_no: u64,
        trajectory_id: TrajectoryId,
    },
    #[error("record {sequence_no}: {kind} for {trajectory_id} without a PREFIX")]
    MissingPrefix {
        sequence_no: u64,
        kind: &'static str,
        trajectory_id: TrajectoryId,
    },
    #[error("record {sequence_no}: {trajectory_id} already left PENDING")]
    DoubleTerminal {
        sequence_no: u64,
        trajectory_id: TrajectoryId,
    },
    #[error("record {sequence_no}: PREFIX for {trajectory_id} is not a valid PENDING trajectory")]
    BadPrefix {
        sequence_no: u64,
        trajectory_id: TrajectoryId,
    },
    #[error("{file} line {line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrefixPayload {
    pub issue_day: NaiveDate,
    pub trajectory: Trajectory,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RecordKind {
    Prefix(Box<PrefixPayload>),
    Backfill {
        label: Label,
        reward: f64,
        resolved_at: Timestamp,
    },
    Discard {
        reason: String,
        decided_at: Timestamp,
    },
}

impl RecordKind {
    pub fn name(&self) -> &'static str {
        match self {
            RecordKind::Prefix(_) => "PREFIX",
            RecordKind::Backfill { .. } => "BACKFILL",
            RecordKind::Discard { .. } => "DISCARD",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerRecord {
    pub sequence_no: u64,
    pub trajectory_id: TrajectoryId,
    #[serde(flatten)]
    pub kind: RecordKind,
}

/// A trajectory with its issue day and terminal-record details.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoredTrajectory {
    pub issue_day: NaiveDate,
    pub trajectory: Trajectory,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolved_at: Option<Timestamp>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discard_reason: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decided_at: Option<Timestamp>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LedgerState {
    pub trajectories: BTreeMap<TrajectoryId, StoredTrajectory>,
    pub last_sequence_no: u64,
    #[serde(skip)]
    by_question: BTreeMap<QuestionId, BTreeSet<TrajectoryId>>,
}

impl LedgerState {
    /// Folds one record into the state, enforcing the record-order rules.
    pub fn apply(&mut self, rec: LedgerRecord) -> Result<(), ReplayError> {
        let seq = rec.sequence_no;
        if seq <= self.last_sequence_no {
            return Err(ReplayError::OutOfOrder {
                sequence_no: seq,
                previous: self.last_sequence_no,
            });
        }
        let id = rec.trajectory_id;
        match rec.kind {
            RecordKind::Prefix(p) => {
                if self.trajectories.contains_key(&id) {
                    return Err(ReplayError::DuplicatePrefix {
                        sequence_no: seq,
                        trajectory_id: id,
                    });
                }
                let t = p.trajectory;
                if t.trajectory_id != id
                    || t.status != TrajectoryStatus::Pending
                    || !validate_trajectory(&t).is_empty()
                {
                    return Err(ReplayError::BadPrefix {
                        sequence_no: seq,
                        trajectory_id: id,
                    });
                }
                self.by_question
                    .entry(t.question_id.clone())
                    .or_default()
                    .insert(id.clone());
                self.trajectories.insert(
                    id,
                    StoredTrajectory {
                        issue_day: p.issue_day,
                        trajectory: t,
                        resolved_at: None,
                        discard_reason: None,
                        decided_at: None,
                    },
                );
            }
            kind => {
                let Some(stored) = self.trajectories.get_mut(&id) else {
                    return Err(ReplayError::MissingPrefix {
                        sequence_no: seq,
                        kind: kind.name(),
                        trajectory_id: id,
                    });
                };
                if stored.trajectory.status != TrajectoryStatus::Pending {
                    return Err(ReplayError::DoubleTerminal {
                        sequence_no: seq,
                        trajectory_id: id,
                    });
                }
                let t = stored.trajectory.clone();
                match kind {
                    RecordKind::Backfill {
                        label,
                        reward,
                        resolved_at,
                    } => {
                        stored.trajectory = t.resolved(label, reward);
                        stored.resolved_at = Some(resolved_at);
                    }
                    RecordKind::Discard { reason, decided_at } => {
                        stored.trajectory = t.discarded();
                        stored.discard_reason = Some(reason);
                        stored.decided_at = Some(decided_at);
                    }
                    RecordKind::Prefix(_) => unreachable!(),
                }
            }
        }
        self.last_sequence_no = seq;
        Ok(())
    }

    pub fn get(&self, id: &TrajectoryId) -> Option<&StoredTrajectory> {
        self.trajectories.get(id)
    }

    /// Trajectories of a question, ordered by id.
    pub fn of_question(&self, q: &QuestionId) -> impl Iterator<Item = &StoredTrajectory> {
        self.by_question
            .get(q)
            .into_iter()
            .flatten()
            .map(|id| &self.trajectories[id])
    }

    pub fn questions(&self) -> impl Iterator<Item = &QuestionId> {
        self.by_question.keys()
    }

    pub fn count(&self, status: TrajectoryStatus) -> usize {
        self.trajectories
            .values()
            .filter(|s| s.trajectory.status == status)
            .count()
    }

    /// Canonical JSON: maps are ordered, so equal states give equal bytes.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("ledger state serializes")
    }
}

/// Rebuilds state from records in log order.
pub fn replay(records: impl IntoIterator<Item = LedgerRecord>) -> Result<LedgerState, ReplayError> {
    let mut state = LedgerState::default();
    for r in records {
        state.apply(r)?;
    }
    Ok(state)
}

const LOG_DIR: &str = "log";
const INDEX_FILE: &str = "index.json";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DayIndex {
    pub records: usize,
    pub trajectories: usize,
    pub pending: usize,
    pub resolved: usize,
    pub discarded: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LedgerIndex {
    pub last_sequence_no: u64,
    pub days: BTreeMap<NaiveDate, DayIndex>,
}

fn day_log(root: &Path, day: NaiveDate) -> PathBuf {
    root.join(LOG_DIR).join(format!("{day}.jsonl"))
}

/// Reads every day log under `root` and merges the records by sequence
/// number. Within each file, records must already be in increasing order.
pub fn read_logs(root: &Path) -> Result<Vec<LedgerRecord>, LedgerError> {
    let dir = root.join(LOG_DIR);
    let mut files: Vec<PathBuf> = match fs::read_dir(&dir) {
        Ok(entries) => entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect(),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(e.into()),
    };
    files.sort();
    let mut all = Vec::new();
    for f in files {
        let text = fs::read_to_string(&f)?;
        let (records, errors) = jsonl::parse_lines::<LedgerRecord>(complete_lines(&text));
        if let Some(e) = errors.first() {
            return Err(ReplayError::Parse {
                file: f.display().to_string(),
                line: e.line,
                message: e.message.clone(),
            }
            .into());
        }
        let mut prev = 0;
        for r in &records {
            if r.sequence_no <= prev {
                return Err(ReplayError::OutOfOrder {
                    sequence_no: r.sequence_no,
                    previous: prev,
                }
                .into());
            }
            prev = r.sequence_no;
        }
        all.extend(records);
    }
    all.sort_by_key(|r| r.sequence_no);
    Ok(all)
}

/// Drops an unterminated final line: every append ends with a newline, so a
/// missing one means the writer died mid-record.
fn complete_lines(text: &str) -> &str {
    match text.rfind('\n') {
        Some(i) => &text[..=i],
        None => "",
    }
}

/// Cuts torn tails off the day logs so later appends start on a fresh line.
fn repair_logs(root: &Path) -> Result<(), LedgerError> {
    for entry in fs::read_dir(root.join(LOG_DIR))? {
        let path = entry?.path();
        if path.extension().is_none_or(|x| x != "jsonl") {
            continue;
        }
        let text = fs::read_to_string(&path)?;
        let keep = complete_lines(&text).len();
        if keep < text.len() {
            tracing::warn!(file = %path.display(), dropped = text.len() - keep, "truncating torn ledger record");
            let f = fs::OpenOptions::new().write(true).open(&path)?;
            f.set_len(keep as u64)?;
            f.sync_all()?;
        }
    }
    Ok(())
}

pub fn replay_dir(root: &Path) -> Result<LedgerState, LedgerError> {
    Ok(replay(read_logs(root)?)?)
}

/// Live ledger. Without a root it keeps state in memory only.
#[derive(Debug, Default)]
pub struct Ledger {
    root: Option<PathBuf>,
    state: LedgerState,
}

impl Ledger {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (or creates) a ledger directory, replaying whatever it holds.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, LedgerError> {
        let root = root.into();
        fs::create_dir_all(root.join(LOG_DIR))?;
        repair_logs(&root)?;
        let state = replay_dir(&root)?;
        Ok(Self {
            root: Some(root),
            state,
        })
    }

    pub fn root(&self) -> Option<&Path> {
        self.root.as_deref()
    }

    pub fn state(&self) -> &LedgerState {
        &self.state
    }

    pub fn contains(&self, id: &TrajectoryId) -> bool {
        self.state.trajectories.contains_key(id)
    }

    /// Applies records to the state and makes them durable, one sync per day
    /// log touched.
    fn commit(&mut self, kinds: Vec<(TrajectoryId, RecordKind)>) -> Result<Vec<u64>, LedgerError> {
        if kinds.is_empty() {
            return Ok(Vec::new());
        }
        let mut seqs = Vec::with_capacity(kinds.len());
        let mut by_day: BTreeMap<NaiveDate, Vec<LedgerRecord>> = BTreeMap::new();
        // Work on a copy so a failed write leaves the live state untouched.
        let mut staged = self.state.clone();
        for (id, kind) in kinds {
            let rec = LedgerRecord {
                sequence_no: staged.last_sequence_no + 1,
                trajectory_id: id.clone(),
                kind,
            };
            seqs.push(rec.sequence_no);
            staged.apply(rec.clone())?;
            let day = staged.trajectories[&id].issue_day;
            by_day.entry(day).or_default().push(rec);
        }
        if let Some(root) = &self.root {
            for (day, records) in &by_day {
                jsonl::append_all_synced(&day_log(root, *day), records)?;
            }
        }
        self.state = staged;
        if self.root.is_some() {
            self.write_index(by_day.keys().copied())?;
        }
        Ok(seqs)
    }

    fn write_index(&self, touched: impl Iterator<Item = NaiveDate>) -> Result<(), LedgerError> {
        let root = self.root.as_ref().expect("persistent ledger");
        let path = root.join(INDEX_FILE);
        let mut index: LedgerIndex = fs::read_to_string(&path)
            .ok()
            .and_then(|t| serde_json::from_str(&t).ok())
            .unwrap_or_default();
        index.last_sequence_no = self.state.last_sequence_no;
        for day in touched {
            let log = fs::read_to_string(day_log(root, day))?;
            let mut entry = DayIndex {
                records: log.lines().filter(|l| !l.trim().is_empty()).count(),
                ..DayIndex::default()
            };
            for s in self
                .state
                .trajectories
                .values()
                .filter(|s| s.issue_day == day)
            {
                entry.trajectories += 1;
                match s.trajectory.status {
                    TrajectoryStatus::Pending => entry.pending += 1,
                    TrajectoryStatus::Resolved => entry.resolved += 1,
                    TrajectoryStatus::Discarded => entry.discarded += 1,
                }
            }
            index.days.insert(day, entry);
        }
        let tmp = path.with_extension("tmp");
        fs::write(
            &tmp,
            serde_json::to_string_pretty(&index).expect("index serializes"),
        )?;
        fs::rename(tmp, path)?;
        Ok(())
    }

    fn check_prefix(&self, t: &Trajectory) -> Result<(), LedgerError> {
        if t.status != TrajectoryStatus::Pending {
            return Err(LedgerError::NotPending {
                id: t.trajectory_id.clone(),
                status: t.status,
            });
        }
        if self.contains(&t.trajectory_id) {
            return Err(LedgerError::Duplicate(t.trajectory_id.clone()));
        }
        if let Some(v) = validate_trajectory(t).first() {
            return Err(LedgerError::Malformed {
                id: t.trajectory_id.clone(),
                reason: v.to_string(),
            });
        }
        Ok(())
    }

    /// Stores a PENDING trajectory; durable on return.
    pub fn append_prefix(
        &mut self,
        issue_day: NaiveDate,
        t: Trajectory,
    ) -> Result<u64, LedgerError> {
        Ok(self.append_prefixes(issue_day, vec![t])?[0])
    }

    /// Stores several PENDING trajectories in order. Nothing is written if
    /// any of them is rejected.
    pub fn append_prefixes(
        &mut self,
        issue_day: NaiveDate,
        ts: Vec<Trajectory>,
    ) -> Result<Vec<u64>, LedgerError> {
        let mut seen = BTreeSet::new();
        for t in &ts {
            self.check_prefix(t)?;
            if !seen.insert(t.trajectory_id.clone()) {
                return Err(LedgerError::Duplicate(t.trajectory_id.clone()));
            }
        }
        let kinds = ts
            .into_iter()
            .map(|t| {
                (
                    t.trajectory_id.clone(),
                    RecordKind::Prefix(Box::new(PrefixPayload {
                        issue_day,
                        trajectory: t,
                    })),
                )
            })
            .collect();
        self.commit(kinds)
    }

    /// Resolves every PENDING trajectory of the question with `reward_fn(π̂, z)`.
    /// Returns how many changed; repeating the same outcome changes nothing.
    pub fn backfill(
        &mut self,
        question_id: &QuestionId,
        outcome: &Outcome,
        reward_fn: impl Fn(Option<f64>, Label) -> f64,
    ) -> Result<usize, LedgerError> {
        let mut any = false;
        let mut kinds = Vec::new();
        for s in self.state.of_question(question_id) {
            any = true;
            let t = &s.trajectory;
            match t.status {
                TrajectoryStatus::Resolved => {
                    let existing = t.label.expect("resolved trajectories carry a label");
                    if existing != outcome.label {
                        return Err(LedgerError::Conflict {
                            question_id: question_id.clone(),
                            existing,
                            requested: outcome.label,
                        });
                    }
                }
                TrajectoryStatus::Discarded => {}
                TrajectoryStatus::Pending => kinds.push((
                    t.trajectory_id.clone(),
                    RecordKind::Backfill {
                        label: outcome.label,
                        reward: reward_fn(t.final_probability, outcome.label),
                        resolved_at: outcome.resolved_at,
                    },
                )),
            }
        }
        if !any {
            return Err(LedgerError::UnknownQuestion(question_id.clone()));
        }
        Ok(self.commit(kinds)?.len())
    }

    /// Discards every PENDING trajectory of the question.
    pub fn discard(
        &mut self,
        question_id: &QuestionId,
        reason: &str,
        decided_at: Timestamp,
    ) -> Result<usize, LedgerError> {
        let kinds: Vec<_> = self
            .state
            .of_question(question_id)
            .filter(|s| s.trajectory.status == TrajectoryStatus::Pending)
            .map(|s| {
                (
                    s.trajectory.trajectory_id.clone(),
                    RecordKind::Discard {
                        reason: reason.to_string(),
                        decided_at,
                    },
                )
            })
            .collect();
        Ok(self.commit(kinds)?.len())
    }

    /// PENDING question ids issued on `day`, sorted.
    pub fn pending_questions(&self, day: NaiveDate) -> Vec<QuestionId> {
        let set: BTreeSet<&QuestionId> = self
            .state
            .trajectories
            .values()
            .filter(|s| s.issue_day == day && s.trajectory.status == TrajectoryStatus::Pending)
            .map(|s| &s.trajectory.question_id)
            .collect();
        set.into_iter().cloned().collect()
    }

    pub fn export_training_batch(&self, day: NaiveDate) -> Result<Vec<TrainingGroup>, LedgerError> {
        export::export_training_batch(&self.state, day)
    }
}

#[cfg(test)]
mod tests;
