//! Training export: resolved trajectories grouped by question, with masked
//! transcripts and group-relative advantages.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{LedgerError, LedgerState};
use crate::domain::{Label, QuestionId, TrajectoryId, TrajectoryStatus};
use crate::rollout::{transcript, Role, Turn};

/// Loss-mask marker for one transcript turn. Agent turns stay trainable;
/// environment and tool turns are masked.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskSpan {
    pub turn_index: usize,
    pub masked: bool,
}

pub fn mask_spans(turns: &[Turn]) -> Vec<MaskSpan> {
    turns
        .iter()
        .enumerate()
        .map(|(turn_index, t)| MaskSpan {
            turn_index,
            masked: t.role != Role::Agent,
        })
        .collect()
}

/// `(r - mean) / std` with the population standard deviation. Equal rewards
/// give all zeros.
pub fn compute_group_advantages(rewards: &[f64]) -> Result<Vec<f64>, LedgerError> {
    if rewards.is_empty() {
        return Err(LedgerError::EmptyGroup);
    }
    if rewards.iter().all(|r| *r == rewards[0]) {
        return Ok(vec![0.0; rewards.len()]);
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let std = (rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n).sqrt();
    if std == 0.0 {
        return Ok(vec![0.0; rewards.len()]);
    }
    Ok(rewards.iter().map(|r| (r - mean) / std).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingEntry {
    pub trajectory_id: TrajectoryId,
    pub rollout_index: u32,
    pub turns: Vec<Turn>,
    pub mask: Vec<MaskSpan>,
    pub final_probability: Option<f64>,
    pub reward: f64,
    pub advantage: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingGroup {
    pub group_id: String,
    pub question_id: QuestionId,
    pub issue_day: NaiveDate,
    pub label: Label,
    pub trajectories: Vec<TrainingEntry>,
}

/// One group per question issued on `day` with at least one RESOLVED
/// trajectory; PENDING and DISCARDED trajectories never appear.
pub fn export_training_batch(
    state: &LedgerState,
    day: NaiveDate,
) -> Result<Vec<TrainingGroup>, LedgerError> {
    let mut by_question: BTreeMap<&QuestionId, Vec<&crate::domain::Trajectory>> = BTreeMap::new();
    for s in state.trajectories.values() {
        if s.issue_day == day && s.trajectory.status == TrajectoryStatus::Resolved {
            by_question
                .entry(&s.trajectory.question_id)
                .or_default()
                .push(&s.trajectory);
        }
    }
    let mut groups = Vec::with_capacity(by_question.len());
    for (q, mut ts) in by_question {
        ts.sort_by_key(|t| t.rollout_index);
        let rewards: Vec<f64> = ts.iter().map(|t| t.reward.expect("resolved")).collect();
        let advantages = compute_group_advantages(&rewards)?;
        let label = ts[0].label.expect("resolved");
        let trajectories = ts
            .iter()
            .zip(rewards.iter().zip(&advantages))
            .map(|(t, (&reward, &advantage))| {
                let turns = transcript(t);
                TrainingEntry {
                    trajectory_id: t.trajectory_id.clone(),
                    rollout_index: t.rollout_index,
                    mask: mask_spans(&turns),
                    turns,
                    final_probability: t.final_probability,
                    reward,
                    advantage,
                }
            })
            .collect();
        groups.push(TrainingGroup {
            group_id: format!("{day}/{q}"),
            question_id: q.clone(),
            issue_day: day,
            label,
            trajectories,
        });
    }
    Ok(groups)
}
