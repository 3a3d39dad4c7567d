use super::*;
use crate::domain::Step;
use crate::rollout::Role;
use crate::scoring::{reward, ProbPrediction};
use chrono::{TimeZone, Utc};
use proptest::prelude::*;

fn day() -> NaiveDate {
    NaiveDate::from_ymd_opt(2026, 4, 17).unwrap()
}

fn ts() -> Timestamp {
    Utc.with_ymd_and_hms(2026, 4, 17, 18, 0, 0).unwrap()
}

fn pending(q: &str, k: u32, p: Option<f64>, searches: usize) -> Trajectory {
    let qid = QuestionId::new(q);
    Trajectory {
        trajectory_id: Trajectory::trajectory_id_for(&qid, k),
        question_id: qid,
        rollout_index: k,
        prediction_time: ts(),
        prompt: format!("Question: {q}?"),
        steps: (0..searches)
            .map(|i| Step {
                action: format!("search {i}"),
                observation: format!("result {i}"),
                issued_at: ts(),
            })
            .collect(),
        corrections: Vec::new(),
        raw_final_answer: p.map_or_else(|| "no idea".to_string(), |p| format!("FINAL: {p}")),
        final_probability: p,
        status: TrajectoryStatus::Pending,
        label: None,
        reward: None,
    }
}

fn outcome(q: &str, label: Label) -> Outcome {
    Outcome {
        question_id: q.into(),
        label,
        resolved_at: Utc.with_ymd_and_hms(2026, 4, 18, 20, 30, 0).unwrap(),
        evidence: "published record".into(),
    }
}

fn brier_reward(p: Option<f64>, z: Label) -> f64 {
    reward(&ProbPrediction::new(p, z))
}

fn four(ledger: &mut Ledger, q: &str) {
    let ps = [Some(0.5), Some(0.9), None, Some(1.0)];
    let ts = ps
        .iter()
        .enumerate()
        .map(|(k, p)| pending(q, k as u32, *p, 1))
        .collect();
    ledger.append_prefixes(day(), ts).unwrap();
}

#[test]
fn append_rejects_duplicates_and_non_pending() {
    let mut l = Ledger::in_memory();
    assert_eq!(
        l.append_prefix(day(), pending("q1", 0, Some(0.3), 1))
            .unwrap(),
        1
    );
    assert!(matches!(
        l.append_prefix(day(), pending("q1", 0, Some(0.3), 1)),
        Err(LedgerError::Duplicate(_))
    ));
    let done = pending("q2", 0, Some(0.3), 1).resolved(Label::Yes, -0.49);
    assert!(matches!(
        l.append_prefix(day(), done),
        Err(LedgerError::NotPending { .. })
    ));
    // A batch with one bad member writes nothing.
    let batch = vec![
        pending("q3", 0, Some(0.3), 1),
        pending("q1", 0, Some(0.3), 1),
    ];
    assert!(l.append_prefixes(day(), batch).is_err());
    assert!(!l.contains(&"q3-k0".into()));
}

#[test]
fn backfill_rewards_and_idempotence() {
    let mut l = Ledger::in_memory();
    four(&mut l, "q1");
    assert_eq!(
        l.backfill(&"q1".into(), &outcome("q1", Label::Yes), brier_reward)
            .unwrap(),
        4
    );
    let rewards: Vec<f64> = l
        .state()
        .of_question(&"q1".into())
        .map(|s| s.trajectory.reward.unwrap())
        .collect();
    let expected = [-0.25, -0.01, -1.0, 0.0];
    for (r, e) in rewards.iter().zip(expected) {
        assert!((r - e).abs() < 1e-12, "{rewards:?}");
    }
    let before = l.state().clone();
    assert_eq!(
        l.backfill(&"q1".into(), &outcome("q1", Label::Yes), brier_reward)
            .unwrap(),
        0
    );
    assert_eq!(l.state(), &before);
    assert!(matches!(
        l.backfill(&"q1".into(), &outcome("q1", Label::No), brier_reward),
        Err(LedgerError::Conflict { .. })
    ));
    assert!(matches!(
        l.backfill(&"nope".into(), &outcome("nope", Label::No), brier_reward),
        Err(LedgerError::UnknownQuestion(_))
    ));
}

#[test]
fn discard_only_touches_pending() {
    let mut l = Ledger::in_memory();
    four(&mut l, "q1");
    four(&mut l, "q2");
    l.backfill(&"q2".into(), &outcome("q2", Label::No), brier_reward)
        .unwrap();
    assert_eq!(l.discard(&"q1".into(), "not_published", ts()).unwrap(), 4);
    assert_eq!(l.discard(&"q1".into(), "not_published", ts()).unwrap(), 0);
    assert_eq!(l.discard(&"q2".into(), "not_published", ts()).unwrap(), 0);
    assert_eq!(l.discard(&"unknown".into(), "x", ts()).unwrap(), 0);
    assert_eq!(l.state().count(TrajectoryStatus::Discarded), 4);
    assert_eq!(l.state().count(TrajectoryStatus::Resolved), 4);
}

#[test]
fn advantage_cases() {
    assert_eq!(compute_group_advantages(&[-0.25; 4]).unwrap(), vec![0.0; 4]);
    assert_eq!(compute_group_advantages(&[-0.7]).unwrap(), vec![0.0]);
    assert!(matches!(
        compute_group_advantages(&[]),
        Err(LedgerError::EmptyGroup)
    ));
    let a = compute_group_advantages(&[0.0, -1.0]).unwrap();
    // mean -0.5, population std 0.5
    let (mean, std) = (-0.5, 0.5);
    assert!((a[0] - (0.0 - mean) / std).abs() < 1e-12);
    assert!((a[1] - (-1.0 - mean) / std).abs() < 1e-12);
}

#[test]
fn export_groups_resolved_only_with_masks() {
    let mut l = Ledger::in_memory();
    four(&mut l, "q1");
    four(&mut l, "q2");
    let mut two = pending("q3", 0, Some(0.2), 2);
    two.rollout_index = 0;
    l.append_prefix(day(), two).unwrap();
    l.backfill(&"q1".into(), &outcome("q1", Label::Yes), brier_reward)
        .unwrap();
    l.discard(&"q2".into(), "postponed", ts()).unwrap();
    l.backfill(&"q3".into(), &outcome("q3", Label::No), brier_reward)
        .unwrap();
    let groups = l.export_training_batch(day()).unwrap();
    assert_eq!(
        groups
            .iter()
            .map(|g| g.question_id.as_str())
            .collect::<Vec<_>>(),
        ["q1", "q3"]
    );
    let g1 = &groups[0];
    assert_eq!(g1.trajectories.len(), 4);
    assert!(
        g1.trajectories
            .iter()
            .map(|e| e.advantage)
            .sum::<f64>()
            .abs()
            < 1e-9
    );
    let e = &groups[1].trajectories[0];
    let tool = e
        .turns
        .iter()
        .zip(&e.mask)
        .filter(|(t, m)| t.role == Role::Tool && m.masked)
        .count();
    assert_eq!(tool, 2);
    for (t, m) in e.turns.iter().zip(&e.mask) {
        assert_eq!(m.masked, t.role != Role::Agent);
    }
    assert_eq!(e.mask.len(), e.turns.len());
    assert!(l
        .export_training_batch(day().succ_opt().unwrap())
        .unwrap()
        .is_empty());
}

#[test]
fn replay_detects_order_violations() {
    let mut l = Ledger::in_memory();
    four(&mut l, "q1");
    let t = l.state().get(&"q1-k0".into()).unwrap().trajectory.clone();
    let prefix = LedgerRecord {
        sequence_no: 2,
        trajectory_id: t.trajectory_id.clone(),
        kind: RecordKind::Prefix(Box::new(PrefixPayload {
            issue_day: day(),
            trajectory: t.clone(),
        })),
    };
    let backfill = LedgerRecord {
        sequence_no: 1,
        trajectory_id: t.trajectory_id.clone(),
        kind: RecordKind::Backfill {
            label: Label::Yes,
            reward: -0.25,
            resolved_at: ts(),
        },
    };
    assert!(matches!(
        replay([backfill.clone()]),
        Err(ReplayError::MissingPrefix { sequence_no: 1, .. })
    ));
    assert!(matches!(
        replay([prefix.clone(), backfill.clone()]),
        Err(ReplayError::OutOfOrder { sequence_no: 1, .. })
    ));
    let mut second = backfill.clone();
    second.sequence_no = 3;
    let mut third = backfill;
    third.sequence_no = 4;
    assert!(matches!(
        replay([prefix, second, third]),
        Err(ReplayError::DoubleTerminal { sequence_no: 4, .. })
    ));
}

#[test]
fn record_wire_format() {
    let rec = LedgerRecord {
        sequence_no: 7,
        trajectory_id: "q-k0".into(),
        kind: RecordKind::Discard {
            reason: "postponed".into(),
            decided_at: ts(),
        },
    };
    let json = serde_json::to_string(&rec).unwrap();
    assert!(json.contains(r#""kind":"DISCARD""#), "{json}");
    assert!(
        json.contains(r#""payload":{"reason":"postponed""#),
        "{json}"
    );
    assert_eq!(serde_json::from_str::<LedgerRecord>(&json).unwrap(), rec);
}

#[test]
fn persistent_ledger_replays_and_truncates_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let mut l = Ledger::open(dir.path()).unwrap();
    four(&mut l, "q1");
    four(&mut l, "q2");
    l.append_prefix(day().succ_opt().unwrap(), pending("q9", 0, Some(0.1), 1))
        .unwrap();
    l.backfill(&"q1".into(), &outcome("q1", Label::Yes), brier_reward)
        .unwrap();
    l.discard(&"q2".into(), "match_failed", ts()).unwrap();
    let reopened = Ledger::open(dir.path()).unwrap();
    assert_eq!(reopened.state(), l.state());
    assert_eq!(
        reopened.state().canonical_json(),
        l.state().canonical_json()
    );
    let index: LedgerIndex =
        serde_json::from_str(&fs::read_to_string(dir.path().join("index.json")).unwrap()).unwrap();
    assert_eq!(index.days[&day()].records, 16);
    assert_eq!(index.days[&day()].resolved, 4);
    assert_eq!(index.last_sequence_no, 17);

    // Cut the day log after its first ten records: still a consistent state.
    let log = day_log(dir.path(), day());
    let text = fs::read_to_string(&log).unwrap();
    let cut: String = text.lines().take(10).map(|l| format!("{l}\n")).collect();
    fs::write(&log, cut).unwrap();
    let partial = replay_dir(dir.path()).unwrap();
    assert_eq!(partial.count(TrajectoryStatus::Pending), 7);
    assert_eq!(partial.count(TrajectoryStatus::Resolved), 2);
}

#[test]
fn torn_final_record_is_dropped_and_repaired() {
    let dir = tempfile::tempdir().unwrap();
    let mut l = Ledger::open(dir.path()).unwrap();
    four(&mut l, "q1");
    let log = day_log(dir.path(), day());
    let intact = fs::read_to_string(&log).unwrap();
    fs::write(&log, format!("{intact}{{\"sequence_no\":5,\"traj")).unwrap();
    assert_eq!(replay_dir(dir.path()).unwrap(), *l.state());

    let mut reopened = Ledger::open(dir.path()).unwrap();
    assert_eq!(fs::read_to_string(&log).unwrap(), intact);
    reopened
        .append_prefix(day(), pending("q2", 0, Some(0.3), 1))
        .unwrap();
    assert_eq!(replay_dir(dir.path()).unwrap().trajectories.len(), 5);
}

#[derive(Clone, Debug)]
enum Op {
    Append { q: u8, k: u8, p: Option<u8> },
    Backfill { q: u8, z: bool },
    Discard { q: u8 },
    Replay,
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        4 => (0u8..6, 0u8..4, proptest::option::of(0u8..=100)).prop_map(|(q, k, p)| Op::Append { q, k, p }),
        2 => (0u8..6, any::<bool>()).prop_map(|(q, z)| Op::Backfill { q, z }),
        1 => (0u8..6).prop_map(|q| Op::Discard { q }),
        1 => Just(Op::Replay),
    ]
}

/// Independent check of the advantage normalization.
fn mean_and_pop_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn interleavings_keep_the_ledger_consistent(ops in proptest::collection::vec(op(), 1..60)) {
        let dir = tempfile::tempdir().unwrap();
        let mut l = Ledger::open(dir.path()).unwrap();
        for op in ops {
            match op {
                Op::Append { q, k, p } => {
                    let t = pending(&format!("q{q}"), k.into(), p.map(|p| f64::from(p) / 100.0), 1);
                    let dup = l.contains(&t.trajectory_id);
                    prop_assert_eq!(l.append_prefix(day(), t).is_err(), dup);
                }
                Op::Backfill { q, z } => {
                    let qid = QuestionId::new(format!("q{q}"));
                    let label = Label::from_bool(z);
                    let before = l.state().clone();
                    match l.backfill(&qid, &outcome(qid.as_str(), label), brier_reward) {
                        Ok(_) => {
                            // Re-applying is a no-op.
                            let snapshot = l.state().clone();
                            prop_assert_eq!(l.backfill(&qid, &outcome(qid.as_str(), label), brier_reward).unwrap(), 0);
                            prop_assert_eq!(l.state(), &snapshot);
                        }
                        Err(LedgerError::Conflict { existing, .. }) => {
                            let resolved = before.of_question(&qid).find_map(|s| s.trajectory.label);
                            prop_assert_eq!(Some(existing), resolved);
                            prop_assert_eq!(l.state(), &before);
                        }
                        Err(LedgerError::UnknownQuestion(_)) => prop_assert_eq!(l.state(), &before),
                        Err(e) => prop_assert!(false, "unexpected {e}"),
                    }
                }
                Op::Discard { q } => {
                    l.discard(&QuestionId::new(format!("q{q}")), "not_published", ts()).unwrap();
                }
                Op::Replay => {
                    prop_assert_eq!(&replay_dir(dir.path()).unwrap(), l.state());
                }
            }
            for s in l.state().trajectories.values() {
                prop_assert!(validate_trajectory(&s.trajectory).is_empty());
            }
        }
        let replayed = Ledger::open(dir.path()).unwrap();
        prop_assert_eq!(replayed.state().canonical_json(), l.state().canonical_json());

        for g in l.export_training_batch(day()).unwrap() {
            let rewards: Vec<f64> = g.trajectories.iter().map(|e| e.reward).collect();
            for e in &g.trajectories {
                let stored = &l.state().get(&e.trajectory_id).unwrap().trajectory;
                prop_assert_eq!(stored.status, TrajectoryStatus::Resolved);
                prop_assert_eq!(stored.label, Some(g.label));
                let expected = match e.final_probability {
                    Some(p) => -(p - g.label.as_f64()).powi(2),
                    None => -1.0,
                };
                prop_assert_eq!(e.reward, expected);
            }
            let adv: Vec<f64> = g.trajectories.iter().map(|e| e.advantage).collect();
            let (_, r_std) = mean_and_pop_std(&rewards);
            let (a_mean, a_std) = mean_and_pop_std(&adv);
            if r_std > 0.0 {
                prop_assert!(a_mean.abs() < 1e-6);
                prop_assert!((a_std - 1.0).abs() < 1e-6);
            } else {
                prop_assert!(adv.iter().all(|a| *a == 0.0));
            }
        }
    }
}
