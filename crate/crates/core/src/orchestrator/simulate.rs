//! Multi-day closed-loop runs on a virtual clock.
//!
//! Each agent gets its own output directory and ledger under
//! `<output_dir>/simulation/<agent>`; all agents face the same questions
//! because the world and the pipeline depend only on the seed.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use super::{
    read_lines, score_lines, write_json, write_text, AgentSpec, BenchmarkReport, CycleConfig,
    CycleReport, Orchestrator, OrchestratorError, PredLine, TruthLine, BENCHMARK_PREDICTIONS_FILE,
    BENCHMARK_TRUTH_FILE,
};
use crate::domain::{QuestionDescriptionPair, TrajectoryStatus};
use crate::scoring::{render_table, ProbPrediction, ProbabilisticSummary, ScoreReport};

#[derive(Clone, Debug, PartialEq)]
pub struct SimulationOptions {
    pub days: u32,
    pub start_day: NaiveDate,
    pub seed: u64,
    pub agents: Vec<AgentSpec>,
}

impl SimulationOptions {
    pub fn new(days: u32, seed: u64, agents: Vec<AgentSpec>) -> Self {
        Self {
            days,
            start_day: NaiveDate::from_ymd_opt(2026, 1, 1).expect("valid"),
            seed,
            agents,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentRun {
    pub agent: String,
    pub output_dir: PathBuf,
    /// One per issued batch, in issue order.
    pub cycles: Vec<CycleReport>,
    pub benchmarks: Vec<BenchmarkReport>,
    /// Over every resolved trajectory and every benchmark question answered
    /// by the end of the run.
    pub final_report: ScoreReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub seed: u64,
    pub start_day: NaiveDate,
    pub days: u32,
    pub agents: Vec<AgentRun>,
}

impl SimulationReport {
    pub fn run(&self, agent: &str) -> Option<&AgentRun> {
        self.agents.iter().find(|a| a.agent == agent)
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "simulation: {} days from {}, seed {}",
            self.days, self.start_day, self.seed
        );
        for run in &self.agents {
            let _ = writeln!(s, "\n[{}]", run.agent);
            for c in &run.cycles {
                let (brier, ece) = c.metrics.as_ref().map_or(("--".into(), "--".into()), |m| {
                    (
                        format!("{:.4}", m.brier),
                        m.ece.map_or("--".into(), |e| format!("{e:.4}")),
                    )
                });
                let _ = writeln!(
                    s,
                    "  batch {}: issued {}, resolved {}, unresolved {}, groups {}, brier {brier}, ece {ece}",
                    c.batch_day, c.questions_issued, c.outcomes_resolved, c.unresolved_count, c.groups_exported
                );
            }
        }
        let finals: Vec<ScoreReport> = self.agents.iter().map(|a| a.final_report.clone()).collect();
        s.push('\n');
        s.push_str(&render_table(&finals));
        s
    }
}

/// Runs `days` virtual days for every agent, then resolves the last batch.
/// Starts from an empty `<output_dir>/simulation`.
pub fn simulate(
    config: &CycleConfig,
    opts: &SimulationOptions,
) -> Result<SimulationReport, OrchestratorError> {
    if opts.days == 0 {
        return Err(OrchestratorError::Config(
            "a simulation needs at least one day".into(),
        ));
    }
    if opts.agents.is_empty() {
        return Err(OrchestratorError::Config(
            "a simulation needs at least one agent".into(),
        ));
    }
    let names: BTreeSet<String> = opts.agents.iter().map(AgentSpec::name).collect();
    if names.len() != opts.agents.len() {
        return Err(OrchestratorError::Config(
            "agent names must be distinct".into(),
        ));
    }
    config.validate()?;
    let root = config.output_dir.join("simulation");
    if root.exists() {
        fs::remove_dir_all(&root).map_err(OrchestratorError::io(&root))?;
    }

    let mut runs = Vec::with_capacity(opts.agents.len());
    for spec in &opts.agents {
        let mut cfg = config.clone();
        cfg.seed = opts.seed;
        cfg.agent = spec.clone();
        cfg.output_dir = root.join(spec.name());
        runs.push(run_agent(Orchestrator::new(cfg)?, opts)?);
    }
    let report = SimulationReport {
        seed: opts.seed,
        start_day: opts.start_day,
        days: opts.days,
        agents: runs,
    };
    write_json(&root.join("simulation_report.json"), &report)?;
    write_text(&root.join("simulation_report.txt"), &report.summary())?;
    Ok(report)
}

fn run_agent(orch: Orchestrator, opts: &SimulationOptions) -> Result<AgentRun, OrchestratorError> {
    let agent = orch.agent_name();
    let mut cycles = Vec::new();
    let mut benchmarks = Vec::new();
    let days: Vec<NaiveDate> = (0..opts.days)
        .map(|d| opts.start_day + Duration::days(d as i64))
        .collect();
    for (i, &day) in days.iter().enumerate() {
        tracing::info!(%agent, %day, "simulated day");
        orch.ingest(day)?;
        orch.issue(day)?;
        if i > 0 {
            cycles.push(orch.resolve(day)?);
        }
        if orch.config().benchmark.enabled {
            benchmarks.push(orch.benchmark(day)?);
        }
    }
    let end = days[days.len() - 1] + Duration::days(1);
    cycles.push(orch.resolve(end)?);
    let as_of = orch.config().cycle.resolve_instant(end);

    let ledger = orch.open_ledger()?;
    let mut domain_of = HashMap::new();
    for &day in &days {
        let pairs: Vec<QuestionDescriptionPair> =
            read_lines(&orch.layout().day_file(day, super::ISSUED_FILE))?;
        for p in pairs {
            domain_of.insert(
                p.question.id.clone(),
                p.question.domain.as_str().to_string(),
            );
        }
    }
    let resolved: Vec<(String, ProbPrediction)> = ledger
        .state()
        .trajectories
        .values()
        .filter(|s| s.trajectory.status == TrajectoryStatus::Resolved)
        .map(|s| {
            let t = &s.trajectory;
            let domain = domain_of
                .get(&t.question_id)
                .cloned()
                .unwrap_or_else(|| "other".into());
            (
                domain,
                ProbPrediction::new(t.final_probability, t.label.expect("resolved")),
            )
        })
        .collect();

    let mut preds: Vec<PredLine> = Vec::new();
    let mut truths: Vec<TruthLine> = Vec::new();
    if orch.config().benchmark.enabled {
        for &day in &days {
            preds.extend(read_lines::<PredLine>(
                &orch.layout().day_file(day, BENCHMARK_PREDICTIONS_FILE),
            )?);
            truths.extend(read_lines::<TruthLine>(
                &orch.layout().day_file(day, BENCHMARK_TRUTH_FILE),
            )?);
        }
    }
    let seed = opts.seed;
    let mut final_report = score_lines(&agent, &preds, &truths, Some(as_of), seed)?;
    let all: Vec<ProbPrediction> = resolved.iter().map(|(_, p)| *p).collect();
    if !all.is_empty() {
        final_report.probabilistic = Some(ProbabilisticSummary::compute(&all, seed)?);
    }
    let final_report = final_report.with_domains(resolved.iter().map(|(d, p)| (d.as_str(), *p)));
    Ok(AgentRun {
        agent,
        output_dir: orch.layout().root().to_path_buf(),
        cycles,
        benchmarks,
        final_report,
    })
}
