use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fw(config: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fw"))
        .arg("--config")
        .arg(config)
        .args(args)
        .output()
        .expect("fw runs")
}

fn stdout(o: &Output) -> String {
    assert!(
        o.status.success(),
        "fw failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn small_config(dir: &Path) -> PathBuf {
    let path = dir.join("fw.toml");
    let text = format!(
        "output_dir = {:?}\nseed = 7\n\n[cycle]\ntarget = 12\n\n[benchmark.pool]\nkind = \"synthetic\"\nper_type = 8\n",
        dir.join("out")
    );
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn daily_phases_run_in_order() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());

    assert!(stdout(&fw(&cfg, &["ingest", "--day", "2026-03-02"])).contains("candidates"));
    let issue = stdout(&fw(&cfg, &["issue", "--day", "2026-03-02"]));
    assert!(issue.contains("12 questions issued"), "{issue}");
    let resolve = stdout(&fw(&cfg, &["resolve", "--day", "2026-03-03"]));
    assert!(resolve.contains("batch issued 2026-03-02"), "{resolve}");
    assert!(stdout(&fw(&cfg, &["export", "--day", "2026-03-02"])).contains("training groups"));
    assert!(dir
        .path()
        .join("out/days/2026-03-02/training.jsonl")
        .exists());
}

#[test]
fn benchmark_then_score_the_written_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let first = stdout(&fw(&cfg, &["benchmark", "--day", "2026-03-02"]));
    assert!(first.contains("issued 29 questions"), "{first}");
    assert!(first.contains("no batch issued on 2026-02-28"));

    let day = dir.path().join("out/days/2026-03-02");
    let preds = day.join("benchmark_predictions.jsonl");
    let truth = day.join("benchmark_truth.jsonl");
    let table = stdout(&fw(
        &cfg,
        &[
            "score",
            "--in",
            preds.to_str().unwrap(),
            "--truth",
            truth.to_str().unwrap(),
            "--agent",
            "oracle",
        ],
    ));
    assert!(table.contains("S_overall"), "{table}");
    assert!(table.contains("oracle"));
}

#[test]
fn simulate_writes_reports_for_each_agent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = stdout(&fw(
        &cfg,
        &[
            "simulate",
            "--days",
            "2",
            "--agents",
            "oracle,constant,malformed",
        ],
    ));
    for agent in ["[oracle]", "[constant]", "[malformed]"] {
        assert!(out.contains(agent), "{out}");
    }
    assert!(dir
        .path()
        .join("out/simulation/simulation_report.json")
        .exists());
}

#[test]
fn cycle_runs_only_due_phases() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let early = stdout(&fw(&cfg, &["cycle", "--now", "2026-03-02T09:00:00Z"]));
    assert!(early.contains("nothing due"), "{early}");
    let evening = stdout(&fw(&cfg, &["cycle", "--now", "2026-03-02T20:45:00Z"]));
    assert!(evening.contains("ran issue for 2026-03-02"), "{evening}");
    assert!(evening.contains("ran resolve for 2026-03-02"), "{evening}");
    let again = stdout(&fw(&cfg, &["cycle", "--now", "2026-03-02T20:50:00Z"]));
    assert!(again.contains("nothing due"), "{again}");
}

#[test]
fn config_round_trips_and_errors_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let printed = stdout(&fw(&cfg, &["config"]));
    let copy = dir.path().join("copy.toml");
    fs::write(&copy, &printed).unwrap();
    assert_eq!(stdout(&fw(&copy, &["config"])), printed);

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[cycle]\ntarget = 0\n").unwrap();
    let o = fw(&bad, &["issue", "--day", "2026-03-02"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));

    let o = fw(&cfg, &["simulate", "--days", "0"]);
    assert!(!o.status.success());
}
