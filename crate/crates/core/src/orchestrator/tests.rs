use super::*;
use crate::ledger::replay_dir;
use chrono::{TimeZone, Utc};

fn day(d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(2026, 3, d).unwrap()
}

fn config(dir: &Path, target: usize) -> CycleConfig {
    let mut cfg = CycleConfig::default();
    cfg.output_dir = dir.to_path_buf();
    cfg.seed = 11;
    cfg.cycle.target = target;
    cfg
}

fn with_source_param(mut cfg: CycleConfig, key: &str, value: &str) -> CycleConfig {
    cfg.sources[0].params.insert(key.into(), value.into());
    cfg
}

#[test]
fn full_cycle_conserves_questions_and_is_rerunnable() {
    let dir = tempfile::tempdir().unwrap();
    let orch = Orchestrator::new(config(dir.path(), 40)).unwrap();
    let ingest = orch.ingest(day(2)).unwrap();
    assert_eq!(ingest.candidates, 46);
    let issue = orch.issue(day(2)).unwrap();
    assert_eq!(issue.questions_issued, 40);
    assert_eq!(issue.rollouts_recorded, 160);
    assert_eq!(issue.rollouts_added, 160);
    assert!(issue.pipeline.filtered >= 40);

    let again = orch.issue(day(2)).unwrap();
    assert_eq!(again.rollouts_added, 0);
    assert_eq!(again.rollouts_recorded, 160);

    let report = orch.resolve(day(3)).unwrap();
    assert_eq!(report.batch_day, day(2));
    assert_eq!(
        report.questions_issued,
        report.outcomes_resolved + report.unresolved_count
    );
    assert_eq!(report.groups_exported, report.outcomes_resolved);
    assert!(report.unresolved_count > 0);
    assert_eq!(
        report.unresolved_reasons.values().sum::<usize>(),
        report.unresolved_count
    );
    let sequence = orch.open_ledger().unwrap().state().last_sequence_no;

    let bytes = fs::read(orch.layout().day_file(day(3), "cycle_report.json")).unwrap();
    assert_eq!(orch.resolve(day(3)).unwrap(), report);
    assert_eq!(
        fs::read(orch.layout().day_file(day(3), "cycle_report.json")).unwrap(),
        bytes
    );
    assert_eq!(
        orch.open_ledger().unwrap().state().last_sequence_no,
        sequence
    );

    let training: Vec<crate::ledger::TrainingGroup> =
        read_lines(&orch.layout().day_file(day(2), TRAINING_FILE)).unwrap();
    assert_eq!(training.len(), report.groups_exported);
    assert!(training.iter().all(|g| g.trajectories.len() == 4));
    assert_eq!(orch.export(day(2)).unwrap(), report.groups_exported);
}

#[test]
fn target_above_filtered_count_issues_everything() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = with_source_param(config(dir.path(), 500), "event_rate", "30");
    let orch = Orchestrator::new(cfg).unwrap();
    let issue = orch.issue(day(2)).unwrap();
    assert_eq!(issue.pipeline.candidates, 30);
    assert_eq!(issue.questions_issued, issue.pipeline.filtered);
    assert!(issue.questions_issued < 30);
}

#[test]
fn zero_candidates_give_an_empty_batch_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = with_source_param(config(dir.path(), 10), "event_rate", "0");
    let orch = Orchestrator::new(cfg).unwrap();
    assert_eq!(orch.issue(day(2)).unwrap().questions_issued, 0);
    let report = orch.resolve(day(3)).unwrap();
    assert_eq!(report.questions_issued, 0);
    assert_eq!(report.groups_exported, 0);
    assert!(report.metrics.is_none());
    assert!(orch.layout().day_file(day(3), "cycle_report.txt").exists());
}

#[test]
fn fully_resolvable_world_exports_every_question() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = with_source_param(config(dir.path(), 20), "unresolved_rate", "0");
    let orch = Orchestrator::new(cfg).unwrap();
    let issued = orch.issue(day(2)).unwrap().questions_issued;
    let report = orch.resolve(day(3)).unwrap();
    assert_eq!(report.unresolved_count, 0);
    assert_eq!(report.groups_exported, issued);
}

#[test]
fn resolve_without_a_batch_is_empty() {
    let dir = tempfile::tempdir().unwrap();
    let orch = Orchestrator::new(config(dir.path(), 10)).unwrap();
    let report = orch.resolve(day(9)).unwrap();
    assert_eq!((report.questions_issued, report.groups_exported), (0, 0));
}

#[test]
fn prompts_never_carry_descriptions_or_outcomes() {
    let dir = tempfile::tempdir().unwrap();
    let orch = Orchestrator::new(config(dir.path(), 30)).unwrap();
    orch.issue(day(2)).unwrap();
    orch.resolve(day(3)).unwrap();
    let pairs = orch.issued_questions(day(2)).unwrap();
    let ledger = orch.open_ledger().unwrap();
    for s in ledger.state().trajectories.values() {
        let pair = pairs
            .iter()
            .find(|p| p.question.id == s.trajectory.question_id)
            .unwrap();
        if let Some(d) = &pair.description {
            assert!(!s.trajectory.prompt.contains(d.as_str()));
        }
        for turn in crate::rollout::transcript(&s.trajectory) {
            assert!(!turn.text.contains("event occurred"));
            assert!(!turn.text.contains("event did not occur"));
        }
    }
}

#[test]
fn benchmark_respects_caps_lag_and_absent_types() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path(), 10);
    cfg.benchmark.pool = PoolSpec::Synthetic {
        per_type: 30,
        unresolved_rate: BTreeMap::from([(BenchmarkType::Numeric, 1.0)]),
    };
    let orch = Orchestrator::new(cfg).unwrap();
    let first = orch.benchmark(day(1)).unwrap();
    assert_eq!(first.issued_total, 50);
    assert_eq!(first.issued[&BenchmarkType::BinaryChoice], 5);
    assert_eq!(first.issued[&BenchmarkType::SimpleMc], 10);
    assert_eq!(first.issued[&BenchmarkType::DifficultMc], 15);
    assert_eq!(first.issued[&BenchmarkType::Numeric], 20);
    assert_eq!(first.scored_day, day(1) - Duration::days(2));
    assert!(first.scores.is_none());
    orch.benchmark(day(2)).unwrap();
    let third = orch.benchmark(day(3)).unwrap();
    assert_eq!(third.scored_day, day(1));
    let scores = third.scores.unwrap();
    assert_eq!(scores.day, Some(day(1)));
    let b = scores.benchmark.unwrap();
    assert_eq!(b.score(BenchmarkType::Numeric), None);
    for t in [
        BenchmarkType::BinaryChoice,
        BenchmarkType::SimpleMc,
        BenchmarkType::DifficultMc,
    ] {
        assert_eq!(b.score(t), Some(1.0), "oracle answers {t} perfectly");
    }
    assert_eq!(b.overall, Some(1.0));
}

#[test]
fn benchmark_caps_bind_on_small_pools() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path(), 10);
    cfg.benchmark.pool = PoolSpec::Synthetic {
        per_type: 3,
        unresolved_rate: BTreeMap::new(),
    };
    let orch = Orchestrator::new(cfg).unwrap();
    let r = orch.benchmark(day(1)).unwrap();
    assert_eq!(r.issued_total, 12);
    assert!(r.issued.values().all(|&n| n == 3));
}

#[test]
fn scheduler_runs_due_phases_once() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path(), 10);
    cfg.benchmark.enabled = false;
    let orch = Orchestrator::new(cfg).unwrap();
    let morning = Utc.with_ymd_and_hms(2026, 3, 2, 9, 0, 0).unwrap();
    assert!(orch.run_due(morning).unwrap().is_empty());
    assert_eq!(
        orch.next_due(morning),
        Utc.with_ymd_and_hms(2026, 3, 2, 20, 0, 0).unwrap()
    );

    let evening = Utc.with_ymd_and_hms(2026, 3, 2, 20, 10, 0).unwrap();
    assert_eq!(orch.run_due(evening).unwrap(), vec![(day(2), Phase::Issue)]);
    assert!(orch.run_due(evening).unwrap().is_empty());
    assert_eq!(
        orch.next_due(evening),
        Utc.with_ymd_and_hms(2026, 3, 2, 20, 30, 0).unwrap()
    );

    let next_day = Utc.with_ymd_and_hms(2026, 3, 3, 21, 0, 0).unwrap();
    assert_eq!(
        orch.run_due(next_day).unwrap(),
        vec![(day(3), Phase::Issue), (day(3), Phase::Resolve)]
    );
    let report: CycleReport =
        read_json(&orch.layout().day_file(day(3), "cycle_report.json")).unwrap();
    assert_eq!(report.batch_day, day(2));
    assert!(report.questions_issued > 0);
}

#[test]
fn torn_issue_resumes_to_the_same_ledger() {
    let clean = tempfile::tempdir().unwrap();
    let orch = Orchestrator::new(config(clean.path(), 15)).unwrap();
    orch.issue(day(2)).unwrap();
    orch.resolve(day(3)).unwrap();
    let expected = replay_dir(&orch.layout().ledger_dir())
        .unwrap()
        .canonical_json();

    let crashed = tempfile::tempdir().unwrap();
    let orch = Orchestrator::new(config(crashed.path(), 15)).unwrap();
    orch.issue(day(2)).unwrap();
    let log = orch
        .layout()
        .ledger_dir()
        .join("log")
        .join(format!("{}.jsonl", day(2)));
    let text = fs::read_to_string(&log).unwrap();
    let cut = text.len() / 3;
    fs::write(&log, &text[..cut]).unwrap();
    drop(orch);

    let orch = Orchestrator::new(config(crashed.path(), 15)).unwrap();
    let resumed = orch.issue(day(2)).unwrap();
    assert!(resumed.rollouts_added > 0);
    orch.resolve(day(3)).unwrap();
    assert_eq!(
        replay_dir(&orch.layout().ledger_dir())
            .unwrap()
            .canonical_json(),
        expected
    );
}

#[test]
fn simulation_is_deterministic_and_oracle_beats_constant() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path(), 30);
    cfg.benchmark.enabled = false;
    let opts = SimulationOptions::new(
        3,
        5,
        vec![AgentSpec::Oracle, AgentSpec::Constant { p: 0.5 }],
    );
    let a = simulate(&cfg, &opts).unwrap();
    let path = dir.path().join("simulation").join("simulation_report.json");
    let bytes = fs::read(&path).unwrap();
    let b = simulate(&cfg, &opts).unwrap();
    assert_eq!(a, b);
    assert_eq!(fs::read(&path).unwrap(), bytes);

    let oracle = a.run("oracle").unwrap();
    let constant = a.run("constant").unwrap();
    assert_eq!(oracle.cycles.len(), 3);
    for (o, c) in oracle.cycles.iter().zip(&constant.cycles) {
        assert_eq!(o.questions_issued, c.questions_issued);
        assert!(o.metrics.as_ref().unwrap().brier < c.metrics.as_ref().unwrap().brier);
    }
    assert!(a.summary().contains("oracle"));
}

#[test]
fn fully_unresolved_world_exports_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = with_source_param(config(dir.path(), 20), "unresolved_rate", "1");
    let opts = SimulationOptions::new(1, 5, vec![AgentSpec::Oracle]);
    let r = simulate(&cfg, &opts).unwrap();
    let cycles = &r.run("oracle").unwrap().cycles;
    assert_eq!(cycles.len(), 1);
    assert_eq!(cycles[0].groups_exported, 0);
    assert_eq!(cycles[0].unresolved_count, cycles[0].questions_issued);
}

#[test]
fn simulation_rejects_bad_options() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), 10);
    assert!(simulate(&cfg, &SimulationOptions::new(0, 1, vec![AgentSpec::Oracle])).is_err());
    assert!(simulate(&cfg, &SimulationOptions::new(1, 1, vec![])).is_err());
    assert!(simulate(
        &cfg,
        &SimulationOptions::new(1, 1, vec![AgentSpec::Oracle, AgentSpec::Oracle])
    )
    .is_err());
}

#[test]
fn score_files_reads_both_formats() {
    let dir = tempfile::tempdir().unwrap();
    let preds = dir.path().join("p.jsonl");
    let truth = dir.path().join("t.jsonl");
    fs::write(
        &preds,
        "{\"question_id\":\"a\",\"probability\":0.8}\n{\"question_id\":\"n\",\"value\":9}\n",
    )
    .unwrap();
    fs::write(
        &truth,
        "{\"question_id\":\"a\",\"label\":1}\n{\"question_id\":\"n\",\"qtype\":\"numeric\",\"history\":[1,2,3,4,5,6,7,8]}\n",
    )
    .unwrap();
    let r = score_files(&preds, &truth, "file", 1).unwrap();
    let p = r.probabilistic.unwrap();
    assert!((p.brier - 0.04).abs() < 1e-12);
    assert!(r.benchmark.unwrap().score(BenchmarkType::Numeric).unwrap() > 0.0);
}
