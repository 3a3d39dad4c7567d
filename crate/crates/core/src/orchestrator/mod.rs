//! The daily cycle: ingest, issue, resolve, export and benchmark phases, a
//! wall-clock scheduler for live runs and a virtual-clock simulator.
//!
//! Everything a phase produces lands under `<output_dir>/days/<date>/`; the
//! ledger lives in `<output_dir>/ledger` and synthetic ground truth in
//! `<output_dir>/world/<date>/`, out of reach of agents. Every phase can be
//! re-run: it either reuses what an earlier run wrote or recomputes the same
//! bytes, and the ledger ignores work already recorded.

pub mod benchmark;
pub mod config;
pub mod simulate;

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDate};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use benchmark::{score_lines, PredLine, TruthLine};
pub use config::{AgentSpec, CycleConfig, CycleSettings, JudgeSpec, PoolSpec, SearchSpec};
pub use simulate::{simulate, AgentRun, SimulationOptions, SimulationReport};

use crate::clock::local_day;
use crate::domain::{
    BenchmarkType, CandidateEvent, QuestionDescriptionPair, QuestionId, Timestamp, Trajectory,
    TrajectoryStatus,
};
use crate::jsonl;
use crate::ledger::{Ledger, LedgerError};
use crate::prompts::{
    render_benchmark_prompt, render_prediction_prompt, select_daily_benchmark, BenchmarkQuestion,
    PromptError, PromptSet, TemplateName,
};
use crate::qpipeline::{
    Criterion, DomainRules, HashingEmbedder, HttpJudge, Judge, JudgePanel, PipelineError,
    QuestionPipeline, TemplateSet,
};
use crate::resolve::{
    resolve_batch, FileLookupResolver, Resolver, ResolverRegistry, SyntheticTruthResolver,
    Unresolved,
};
use crate::rollout::{
    run_rollout, Agent, ConstantAgent, HttpAgent, HttpSearchTool, MalformedAgent, NoisyOracleAgent,
    OracleAgent, RolloutContext, SearchTool, SimulatedSearch,
};
use crate::scoring::{reward, ProbPrediction, ProbabilisticSummary, ScoreReport, ScoringError};
use crate::seeding::derive_seed;
use crate::sources::synthetic::{generate_day, SyntheticConfig, TruthRecord};
use crate::sources::{SourceError, SourceKind, SourceRegistry};

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("{path}: {error}")]
    Io { path: PathBuf, error: io::Error },
    #[error("invalid input: {0}")]
    Input(String),
    #[error(transparent)]
    Source(#[from] SourceError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Scoring(#[from] ScoringError),
}

impl OrchestratorError {
    pub(crate) fn io(path: &Path) -> impl FnOnce(io::Error) -> Self + '_ {
        move |error| OrchestratorError::Io {
            path: path.to_path_buf(),
            error,
        }
    }
}

type Result<T, E = OrchestratorError> = std::result::Result<T, E>;

/// File locations under the output directory.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn day_dir(&self, day: NaiveDate) -> PathBuf {
        self.root.join("days").join(day.to_string())
    }

    pub fn day_file(&self, day: NaiveDate, name: &str) -> PathBuf {
        self.day_dir(day).join(name)
    }

    pub fn world_dir(&self, day: NaiveDate) -> PathBuf {
        self.root.join("world").join(day.to_string())
    }

    pub fn ledger_dir(&self) -> PathBuf {
        self.root.join("ledger")
    }

    fn marker(&self, day: NaiveDate, phase: Phase) -> PathBuf {
        self.day_file(day, &format!(".{}.done", phase.as_str()))
    }
}

pub const CANDIDATES_FILE: &str = "candidates.jsonl";
pub const ISSUED_FILE: &str = "issued.jsonl";
pub const PIPELINE_REPORT_FILE: &str = "pipeline_report.json";
pub const TRAINING_FILE: &str = "training.jsonl";
pub const RESOLUTIONS_FILE: &str = "resolutions.jsonl";
pub const BENCHMARK_FILE: &str = "benchmark.jsonl";
pub const BENCHMARK_TRUTH_FILE: &str = "benchmark_truth.jsonl";
pub const BENCHMARK_PREDICTIONS_FILE: &str = "benchmark_predictions.jsonl";
pub const BENCHMARK_TRAJECTORIES_FILE: &str = "benchmark_trajectories.jsonl";

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(OrchestratorError::io(dir))?;
    }
    Ok(())
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    create_parent(path)?;
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    fs::write(path, text).map_err(OrchestratorError::io(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(OrchestratorError::io(path))?;
    serde_json::from_str(&text)
        .map_err(|e| OrchestratorError::Input(format!("{}: {e}", path.display())))
}

fn write_lines<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    create_parent(path)?;
    jsonl::write_file(path, items).map_err(OrchestratorError::io(path))
}

pub fn read_lines<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    // Parse errors already name the file and line.
    jsonl::read_strict(path).map_err(|e| match e.kind() {
        io::ErrorKind::InvalidData => OrchestratorError::Input(e.to_string()),
        _ => OrchestratorError::io(path)(e),
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    create_parent(path)?;
    fs::write(path, text).map_err(OrchestratorError::io(path))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Ingest,
    Issue,
    Resolve,
    Export,
    Benchmark,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Ingest => "ingest",
            Phase::Issue => "issue",
            Phase::Resolve => "resolve",
            Phase::Export => "export",
            Phase::Benchmark => "benchmark",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub day: NaiveDate,
    pub candidates: usize,
    pub record_errors: usize,
    pub source_failures: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineSummary {
    pub candidates: usize,
    pub construction_failures: usize,
    pub filtered: usize,
    pub selected: usize,
    pub dropped_by: BTreeMap<String, usize>,
    pub allocation: BTreeMap<String, usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IssueReport {
    pub day: NaiveDate,
    pub pipeline: PipelineSummary,
    pub questions_issued: usize,
    /// Trajectories of this batch now in the ledger.
    pub rollouts_recorded: usize,
    /// Of those, how many this run added.
    pub rollouts_added: usize,
    pub prompt_failures: Vec<String>,
}

/// Outcome of resolving one matured batch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleReport {
    /// Day the resolve phase ran.
    pub day: NaiveDate,
    /// Day the batch was issued.
    pub batch_day: NaiveDate,
    pub agent: String,
    pub questions_issued: usize,
    pub rollouts_recorded: usize,
    pub outcomes_resolved: usize,
    pub unresolved_count: usize,
    pub unresolved_reasons: BTreeMap<String, usize>,
    pub groups_exported: usize,
    /// Over the batch's RESOLVED trajectories; absent when none resolved.
    pub metrics: Option<ProbabilisticSummary>,
}

impl CycleReport {
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "resolve {} (batch issued {}), agent {}",
            self.day, self.batch_day, self.agent
        );
        let _ = writeln!(
            s,
            "issued {} questions / {} rollouts; resolved {}, unresolved {}; exported {} groups",
            self.questions_issued,
            self.rollouts_recorded,
            self.outcomes_resolved,
            self.unresolved_count,
            self.groups_exported
        );
        for (reason, n) in &self.unresolved_reasons {
            let _ = writeln!(s, "  unresolved {reason}: {n}");
        }
        match &self.metrics {
            Some(m) => {
                let ece = m
                    .ece
                    .map_or_else(|| "--".to_string(), |e| format!("{e:.4}"));
                let _ = writeln!(
                    s,
                    "accuracy {:.4}  brier {:.4}  ece {ece}  mean reward {:.4}  (n={}, valid={})",
                    m.accuracy, m.brier, m.mean_reward, m.n, m.n_valid
                );
            }
            None => s.push_str("no resolved predictions\n"),
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub day: NaiveDate,
    pub issued: BTreeMap<BenchmarkType, usize>,
    pub issued_total: usize,
    /// The batch scored today, issued `lag_days` earlier.
    pub scored_day: NaiveDate,
    /// Absent when no batch was issued on `scored_day`.
    pub scores: Option<ScoreReport>,
}

/// Runs the phases for one configuration.
pub struct Orchestrator {
    config: CycleConfig,
    layout: Layout,
    sources: SourceRegistry,
    synthetic: Vec<(SyntheticConfig, u64)>,
    pipeline: QuestionPipeline,
    prompts: PromptSet,
}

impl Orchestrator {
    pub fn new(config: CycleConfig) -> Result<Self> {
        config.validate()?;
        let mut sources = SourceRegistry::new();
        let mut synthetic = Vec::new();
        for spec in config.effective_sources() {
            if spec.kind == SourceKind::Synthetic {
                synthetic.push(SyntheticConfig::from_params(&spec.source_id, &spec.params)?);
            }
            sources.register_spec(spec)?;
        }
        let mut resolver_keys: Vec<String> = synthetic
            .iter()
            .map(|(c, _)| c.resolver_key.clone())
            .collect();
        resolver_keys.extend(config.resolvers.iter().map(|r| r.key.clone()));
        let judges = match config.judges {
            JudgeSpec::Reference => JudgePanel::reference(resolver_keys),
            JudgeSpec::Http => JudgePanel::new(
                Criterion::ALL
                    .into_iter()
                    .map(|c| HttpJudge::from_env(c).map(|j| Box::new(j) as Box<dyn Judge>))
                    .collect::<std::result::Result<Vec<_>, String>>()
                    .map_err(OrchestratorError::Config)?,
            )?,
        };
        let templates = match &config.pipeline.templates {
            Some(p) => TemplateSet::load(p)?,
            None => TemplateSet::default(),
        };
        let rules = match &config.pipeline.domain_rules {
            Some(p) => DomainRules::load(p)?,
            None => DomainRules::default(),
        };
        let prompts = match &config.pipeline.prompts_dir {
            Some(p) => PromptSet::load_dir(p)?,
            None => PromptSet::default(),
        };
        Ok(Self {
            layout: Layout::new(&config.output_dir),
            config,
            sources,
            synthetic,
            pipeline: QuestionPipeline {
                templates,
                judges,
                rules,
                embedder: Box::new(HashingEmbedder::default()),
            },
            prompts,
        })
    }

    pub fn config(&self) -> &CycleConfig {
        &self.config
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn agent_name(&self) -> String {
        self.config.agent.name()
    }

    pub fn open_ledger(&self) -> Result<Ledger> {
        Ok(Ledger::open(self.layout.ledger_dir())?)
    }

    fn seed_for(&self, parts: &[&str]) -> u64 {
        derive_seed(self.config.seed, parts)
    }

    /// Fetches candidates for questions resolving on `day + 1` and stores
    /// them, along with the synthetic world's truth for the day.
    pub fn ingest(&self, day: NaiveDate) -> Result<IngestReport> {
        let (batch, failures) = self.sources.fetch_all(day);
        for f in &failures {
            tracing::warn!(%day, error = %f, "source failed");
        }
        let world = self.layout.world_dir(day);
        for (cfg, seed) in &self.synthetic {
            let truth: Vec<TruthRecord> = generate_day(cfg, *seed, day)?
                .into_iter()
                .map(|w| w.truth)
                .collect();
            write_lines(
                &world.join(format!("{}.truth.jsonl", cfg.source_id)),
                &truth,
            )?;
        }
        write_lines(&self.layout.day_file(day, CANDIDATES_FILE), &batch.events)?;
        if !batch.errors.is_empty() {
            write_lines(
                &self.layout.day_file(day, "ingest_errors.jsonl"),
                &batch.errors,
            )?;
        }
        let report = IngestReport {
            day,
            candidates: batch.events.len(),
            record_errors: batch.errors.len(),
            source_failures: failures.iter().map(|f| f.to_string()).collect(),
        };
        write_json(&self.layout.day_file(day, "ingest_report.json"), &report)?;
        tracing::info!(%day, candidates = report.candidates, "ingested");
        Ok(report)
    }

    fn candidates(&self, day: NaiveDate) -> Result<Vec<CandidateEvent>> {
        let path = self.layout.day_file(day, CANDIDATES_FILE);
        if !path.exists() {
            self.ingest(day)?;
        }
        read_lines(&path)
    }

    /// Latent probabilities of `day`'s synthetic events, by event key.
    fn world_truth(&self, day: NaiveDate) -> Result<Vec<(String, Vec<TruthRecord>)>> {
        let mut out = Vec::new();
        for (cfg, _) in &self.synthetic {
            let path = self
                .layout
                .world_dir(day)
                .join(format!("{}.truth.jsonl", cfg.source_id));
            let truth = if path.exists() {
                read_lines(&path)?
            } else {
                Vec::new()
            };
            out.push((cfg.resolver_key.clone(), truth));
        }
        Ok(out)
    }

    /// The batch issued on `day`, running the question pipeline the first time.
    pub fn issued_questions(&self, day: NaiveDate) -> Result<Vec<QuestionDescriptionPair>> {
        let path = self.layout.day_file(day, ISSUED_FILE);
        if path.exists() {
            return read_lines(&path);
        }
        let events = self.candidates(day)?;
        let run = self.pipeline.run(
            &events,
            self.config.cycle.target,
            self.seed_for(&["issue", &day.to_string()]),
        )?;
        let mut dropped_by = BTreeMap::new();
        for v in run.verdicts.iter().filter(|v| !v.eligible) {
            *dropped_by
                .entry(v.filter_name.as_str().to_string())
                .or_insert(0) += 1;
        }
        let summary = PipelineSummary {
            candidates: run.candidates,
            construction_failures: run.construction_failures.len(),
            filtered: run.filtered,
            selected: run.resampled.selected.len(),
            dropped_by,
            allocation: run
                .resampled
                .allocation
                .domains
                .iter()
                .map(|(d, b)| (d.as_str().to_string(), b.retained))
                .collect(),
        };
        write_json(&self.layout.day_file(day, PIPELINE_REPORT_FILE), &summary)?;
        write_lines(&path, &run.resampled.selected)?;
        Ok(run.resampled.selected)
    }

    fn build_agent(
        &self,
        latent: HashMap<QuestionId, f64>,
        answers: HashMap<QuestionId, String>,
        salt: &str,
    ) -> Result<Box<dyn Agent>> {
        Ok(match &self.config.agent {
            AgentSpec::Oracle => Box::new(OracleAgent::new(latent).with_answers(answers)),
            AgentSpec::Constant { p } => Box::new(ConstantAgent::new(*p)),
            AgentSpec::Noisy { sd } => Box::new(
                NoisyOracleAgent::new(latent, *sd, self.seed_for(&["noisy", salt]))
                    .map_err(OrchestratorError::Config)?,
            ),
            AgentSpec::Malformed => Box::new(MalformedAgent),
            AgentSpec::Http { name } => {
                Box::new(HttpAgent::from_env(name.clone()).map_err(OrchestratorError::Config)?)
            }
        })
    }

    fn build_search(&self, hints: Vec<(String, f64)>, salt: &str) -> Result<Box<dyn SearchTool>> {
        Ok(match &self.config.search {
            SearchSpec::Simulated { info_level } => Box::new(SimulatedSearch::new(
                hints,
                *info_level,
                self.seed_for(&["search", salt]),
            )),
            SearchSpec::Http => {
                Box::new(HttpSearchTool::from_env().map_err(OrchestratorError::Config)?)
            }
        })
    }

    /// Issues `day`'s batch: pipeline, prompts, K rollouts per question, and
    /// prediction-time prefixes into the ledger. Rollouts already recorded
    /// are not rerun.
    pub fn issue(&self, day: NaiveDate) -> Result<IssueReport> {
        let pairs = self.issued_questions(day)?;
        let pipeline: PipelineSummary =
            read_json(&self.layout.day_file(day, PIPELINE_REPORT_FILE))?;
        let template = self.prompts.get(TemplateName::Probabilistic);
        let mut ledger = self.open_ledger()?;

        let latent_by_event: HashMap<String, f64> = self
            .world_truth(day)?
            .into_iter()
            .flat_map(|(_, ts)| ts.into_iter().map(|t| (t.event_key, t.latent_p)))
            .collect();
        let mut latent = HashMap::new();
        let mut hints = Vec::new();
        let mut prompts = Vec::with_capacity(pairs.len());
        let mut prompt_failures = Vec::new();
        for pair in &pairs {
            let q = &pair.question;
            if let Some(p) = q
                .resolver_metadata
                .get("event_key")
                .and_then(|k| latent_by_event.get(k))
            {
                latent.insert(q.id.clone(), *p);
                hints.push((q.text.clone(), *p));
            }
            match render_prediction_prompt(q, template) {
                Ok(prompt) => prompts.push((q.id.clone(), prompt)),
                Err(e) => {
                    tracing::warn!(question = %q.id, error = %e, "prompt failed");
                    prompt_failures.push(format!("{}: {e}", q.id));
                }
            }
        }

        let salt = day.to_string();
        let agent = self.build_agent(latent, HashMap::new(), &salt)?;
        let search = self.build_search(hints, &salt)?;
        let prediction_time = self.config.cycle.issue_instant(day);
        let jobs: Vec<(usize, u32)> = prompts
            .iter()
            .enumerate()
            .flat_map(|(i, (qid, _))| {
                (0..self.config.cycle.group_size)
                    .filter(|&k| !ledger.contains(&Trajectory::trajectory_id_for(qid, k)))
                    .map(move |k| (i, k))
            })
            .collect();
        let mut fresh: Vec<Trajectory> = jobs
            .par_iter()
            .map(|&(i, k)| {
                let (qid, prompt) = &prompts[i];
                let ctx = RolloutContext {
                    question_id: qid.clone(),
                    prediction_time,
                };
                run_rollout(
                    &ctx,
                    prompt,
                    agent.as_ref(),
                    search.as_ref(),
                    &self.config.limits,
                    k,
                )
            })
            .collect();
        fresh.sort_by(|a, b| {
            (&a.question_id, a.rollout_index).cmp(&(&b.question_id, b.rollout_index))
        });
        let rollouts_added = fresh.len();
        ledger.append_prefixes(day, fresh)?;

        let report = IssueReport {
            day,
            pipeline,
            questions_issued: prompts.len(),
            rollouts_recorded: ledger
                .state()
                .trajectories
                .values()
                .filter(|s| s.issue_day == day)
                .count(),
            rollouts_added,
            prompt_failures,
        };
        write_json(&self.layout.day_file(day, "issue_report.json"), &report)?;
        tracing::info!(%day, questions = report.questions_issued, added = rollouts_added, "issued");
        Ok(report)
    }

    fn resolvers(&self, batch_day: NaiveDate) -> Result<ResolverRegistry> {
        let mut by_key: BTreeMap<String, Vec<TruthRecord>> = BTreeMap::new();
        for (key, truth) in self.world_truth(batch_day)? {
            by_key.entry(key).or_default().extend(truth);
        }
        let mut registry = ResolverRegistry::new();
        for (key, truth) in by_key {
            registry.register(Box::new(SyntheticTruthResolver::new(key, truth)));
        }
        for r in &self.config.resolvers {
            let resolver = FileLookupResolver::load(r.key.clone(), &r.path)
                .map_err(OrchestratorError::io(&r.path))?;
            registry.register(Box::new(resolver) as Box<dyn Resolver>);
        }
        Ok(registry)
    }

    /// Resolves the batch issued the day before `day`: backfills resolved
    /// questions, discards the rest, exports the training batch and reports
    /// metrics over resolved trajectories. Re-running gives the same report.
    pub fn resolve(&self, day: NaiveDate) -> Result<CycleReport> {
        let batch_day = day - Duration::days(1);
        let now = self.config.cycle.resolve_instant(day);
        let mut ledger = self.open_ledger()?;
        let issued_path = self.layout.day_file(batch_day, ISSUED_FILE);
        let pairs: Vec<QuestionDescriptionPair> = if issued_path.exists() {
            read_lines(&issued_path)?
        } else {
            Vec::new()
        };
        let questions: Vec<_> = pairs
            .iter()
            .map(|p| p.question.clone())
            .filter(|q| {
                ledger
                    .state()
                    .of_question(&q.id)
                    .any(|s| s.issue_day == batch_day)
            })
            .collect();
        let batch = resolve_batch(&questions, &self.resolvers(batch_day)?, now);

        let reward_fn = |p: Option<f64>, z| reward(&ProbPrediction::new(p, z));
        for o in &batch.outcomes {
            if let Err(e) = ledger.backfill(&o.question_id, o, reward_fn) {
                tracing::error!(question = %o.question_id, error = %e, "backfill rejected");
            }
        }
        for u in &batch.unresolved {
            ledger.discard(&u.question_id, u.reason.as_str(), now)?;
        }
        #[derive(Serialize)]
        #[serde(tag = "status", rename_all = "snake_case")]
        enum Line<'a> {
            Resolved(&'a crate::domain::Outcome),
            Unresolved(&'a Unresolved),
        }
        let mut lines: Vec<Line> = batch.outcomes.iter().map(Line::Resolved).collect();
        lines.extend(batch.unresolved.iter().map(Line::Unresolved));
        write_lines(&self.layout.day_file(batch_day, RESOLUTIONS_FILE), &lines)?;

        let groups = self.export_batch(&ledger, batch_day)?;
        let preds: Vec<ProbPrediction> = ledger
            .state()
            .trajectories
            .values()
            .filter(|s| {
                s.issue_day == batch_day && s.trajectory.status == TrajectoryStatus::Resolved
            })
            .map(|s| {
                ProbPrediction::new(
                    s.trajectory.final_probability,
                    s.trajectory.label.expect("resolved"),
                )
            })
            .collect();
        let metrics = if preds.is_empty() {
            None
        } else {
            Some(ProbabilisticSummary::compute(
                &preds,
                self.seed_for(&["metrics", &batch_day.to_string()]),
            )?)
        };
        let report = CycleReport {
            day,
            batch_day,
            agent: self.agent_name(),
            questions_issued: questions.len(),
            rollouts_recorded: ledger
                .state()
                .trajectories
                .values()
                .filter(|s| s.issue_day == batch_day)
                .count(),
            outcomes_resolved: batch.outcomes.len(),
            unresolved_count: batch.unresolved.len(),
            unresolved_reasons: batch
                .reason_counts()
                .into_iter()
                .map(|(r, n)| (r.as_str().to_string(), n))
                .collect(),
            groups_exported: groups,
            metrics,
        };
        write_json(&self.layout.day_file(day, "cycle_report.json"), &report)?;
        write_text(
            &self.layout.day_file(day, "cycle_report.txt"),
            &report.summary(),
        )?;
        tracing::info!(%day, resolved = report.outcomes_resolved, unresolved = report.unresolved_count, "resolved");
        Ok(report)
    }

    fn export_batch(&self, ledger: &Ledger, batch_day: NaiveDate) -> Result<usize> {
        let groups = ledger.export_training_batch(batch_day)?;
        write_lines(&self.layout.day_file(batch_day, TRAINING_FILE), &groups)?;
        Ok(groups.len())
    }

    /// Writes the training batch for questions issued on `day`. Returns the
    /// number of groups.
    pub fn export(&self, day: NaiveDate) -> Result<usize> {
        self.export_batch(&self.open_ledger()?, day)
    }

    fn benchmark_pool(&self, day: NaiveDate) -> Result<Vec<(BenchmarkQuestion, TruthLine)>> {
        match &self.config.benchmark.pool {
            PoolSpec::Synthetic {
                per_type,
                unresolved_rate,
            } => Ok(benchmark::synthetic_pool(
                self.seed_for(&["benchmark-pool"]),
                day,
                *per_type,
                unresolved_rate,
                &self.config.cycle,
            )),
            PoolSpec::Files { questions, truth } => {
                let questions: Vec<BenchmarkQuestion> = read_lines(questions)?;
                let truth: HashMap<QuestionId, TruthLine> = read_lines::<TruthLine>(truth)?
                    .into_iter()
                    .map(|t| (t.question_id.clone(), t))
                    .collect();
                let tz = self.config.cycle.timezone;
                Ok(questions
                    .into_iter()
                    .filter(|q| local_day(tz, q.resolution_time) == day + Duration::days(1))
                    .filter_map(|q| {
                        let t = truth.get(&q.id).cloned();
                        if t.is_none() {
                            tracing::warn!(question = %q.id, "benchmark question has no truth line");
                        }
                        t.map(|t| (q, t))
                    })
                    .collect())
            }
        }
    }

    /// Issues today's benchmark batch (within the caps) and scores the batch
    /// issued `lag_days` earlier against truth public by now.
    pub fn benchmark(&self, day: NaiveDate) -> Result<BenchmarkReport> {
        let pool = self.benchmark_pool(day)?;
        let questions: Vec<BenchmarkQuestion> = pool.iter().map(|(q, _)| q.clone()).collect();
        let chosen = select_daily_benchmark(
            &questions,
            &self.config.benchmark.caps,
            self.seed_for(&["benchmark", &day.to_string()]),
        );
        let truth_of: HashMap<&QuestionId, &TruthLine> =
            pool.iter().map(|(q, t)| (&q.id, t)).collect();
        let truths: Vec<TruthLine> = chosen.iter().map(|q| truth_of[&q.id].clone()).collect();

        let answers = truths
            .iter()
            .filter_map(|t| benchmark::oracle_answer(t).map(|a| (t.question_id.clone(), a)))
            .collect();
        let salt = format!("benchmark-{day}");
        let agent = self.build_agent(HashMap::new(), answers, &salt)?;
        let search = self.build_search(Vec::new(), &salt)?;
        let prediction_time = self.config.cycle.issue_instant(day);
        let mut rendered = Vec::with_capacity(chosen.len());
        for q in &chosen {
            rendered.push(render_benchmark_prompt(
                q,
                self.prompts.get(TemplateName::for_benchmark(q.qtype)),
            )?);
        }
        let trajectories: Vec<Trajectory> = chosen
            .par_iter()
            .zip(&rendered)
            .map(|(q, prompt)| {
                let ctx = RolloutContext {
                    question_id: q.id.clone(),
                    prediction_time,
                };
                run_rollout(
                    &ctx,
                    prompt,
                    agent.as_ref(),
                    search.as_ref(),
                    &self.config.limits,
                    0,
                )
            })
            .collect();
        let preds: Vec<PredLine> = chosen
            .iter()
            .zip(&trajectories)
            .map(|(q, t)| {
                benchmark::prediction_from_answer(
                    q.id.clone(),
                    q.qtype,
                    q.options.len(),
                    &t.raw_final_answer,
                )
            })
            .collect();
        write_lines(&self.layout.day_file(day, BENCHMARK_FILE), &chosen)?;
        write_lines(&self.layout.day_file(day, BENCHMARK_TRUTH_FILE), &truths)?;
        write_lines(
            &self.layout.day_file(day, BENCHMARK_PREDICTIONS_FILE),
            &preds,
        )?;
        write_lines(
            &self.layout.day_file(day, BENCHMARK_TRAJECTORIES_FILE),
            &trajectories,
        )?;

        let mut issued = BTreeMap::new();
        for q in &chosen {
            *issued.entry(q.qtype).or_insert(0) += 1;
        }
        let scored_day = day - Duration::days(self.config.benchmark.lag_days as i64);
        let scores =
            self.score_benchmark_batch(scored_day, self.config.cycle.resolve_instant(day))?;
        let report = BenchmarkReport {
            day,
            issued_total: chosen.len(),
            issued,
            scored_day,
            scores,
        };
        write_json(&self.layout.day_file(day, "benchmark_report.json"), &report)?;
        if let Some(s) = &report.scores {
            write_text(
                &self.layout.day_file(day, "benchmark_report.txt"),
                &crate::scoring::render_table(std::slice::from_ref(s)),
            )?;
        }
        Ok(report)
    }

    /// Scores the benchmark batch issued on `batch_day` against truth public
    /// at `as_of`. `None` when no batch was issued that day.
    pub fn score_benchmark_batch(
        &self,
        batch_day: NaiveDate,
        as_of: Timestamp,
    ) -> Result<Option<ScoreReport>> {
        let preds_path = self.layout.day_file(batch_day, BENCHMARK_PREDICTIONS_FILE);
        if !preds_path.exists() {
            return Ok(None);
        }
        let preds: Vec<PredLine> = read_lines(&preds_path)?;
        let truths: Vec<TruthLine> =
            read_lines(&self.layout.day_file(batch_day, BENCHMARK_TRUTH_FILE))?;
        let mut report = score_lines(
            &self.agent_name(),
            &preds,
            &truths,
            Some(as_of),
            self.seed_for(&["benchmark-score", &batch_day.to_string()]),
        )?;
        report.day = Some(batch_day);
        Ok(Some(report))
    }

    /// Runs whichever phases are due at `now` and not yet done: on each local
    /// day, issue (with ingest and benchmark) from the issue time, resolve
    /// from the resolve time.
    pub fn run_due(&self, now: Timestamp) -> Result<Vec<(NaiveDate, Phase)>> {
        let day = local_day(self.config.cycle.timezone, now);
        let mut ran = Vec::new();
        let mut due = vec![
            (self.config.cycle.issue_instant(day), Phase::Issue),
            (self.config.cycle.resolve_instant(day), Phase::Resolve),
        ];
        due.sort();
        for (at, phase) in due {
            let marker = self.layout.marker(day, phase);
            if at > now || marker.exists() {
                continue;
            }
            match phase {
                Phase::Issue => {
                    self.ingest(day)?;
                    self.issue(day)?;
                    if self.config.benchmark.enabled {
                        self.benchmark(day)?;
                    }
                }
                Phase::Resolve => {
                    self.resolve(day)?;
                }
                _ => unreachable!("only issue and resolve are scheduled"),
            }
            write_text(&marker, &format!("{now}\n"))?;
            ran.push((day, phase));
        }
        Ok(ran)
    }

    /// The next scheduled phase instant strictly after `now`.
    pub fn next_due(&self, now: Timestamp) -> Timestamp {
        let day = local_day(self.config.cycle.timezone, now);
        [day, day + Duration::days(1)]
            .into_iter()
            .flat_map(|d| {
                [
                    self.config.cycle.issue_instant(d),
                    self.config.cycle.resolve_instant(d),
                ]
            })
            .filter(|t| *t > now)
            .min()
            .expect("tomorrow's phases are after now")
    }
}

/// Scores prediction and truth files (see [`benchmark`] for the line formats).
pub fn score_files(preds: &Path, truth: &Path, agent: &str, seed: u64) -> Result<ScoreReport> {
    let p: Vec<PredLine> = read_lines(preds)?;
    let t: Vec<TruthLine> = read_lines(truth)?;
    score_lines(agent, &p, &t, None, seed)
}

#[cfg(test)]
mod tests;
