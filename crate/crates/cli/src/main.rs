//! `fw`: runs the daily phases, the virtual-clock simulation and offline scoring.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use chrono::{DateTime, NaiveDate, Utc};
use clap::{Parser, Subcommand};
use futureworld::orchestrator::{
    score_files, simulate, AgentSpec, CycleConfig, Orchestrator, SimulationOptions,
};
use futureworld::scoring::render_table;

#[derive(Parser, Debug)]
#[command(name = "fw", version, about = "Live future-prediction environment")]
struct Cli {
    /// TOML configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fetch the day's candidate events.
    Ingest {
        #[arg(long)]
        day: NaiveDate,
    },
    /// Build the day's questions and record the agent's rollouts.
    Issue {
        #[arg(long)]
        day: NaiveDate,
    },
    /// Resolve the batch issued the day before and export its training groups.
    Resolve {
        #[arg(long)]
        day: NaiveDate,
    },
    /// Issue the day's benchmark questions and score the lagged batch.
    Benchmark {
        #[arg(long)]
        day: NaiveDate,
    },
    /// Re-export the training groups of the batch issued on this day.
    Export {
        #[arg(long)]
        day: NaiveDate,
    },
    /// Score a prediction file against a truth file.
    Score {
        #[arg(long = "in")]
        predictions: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, default_value = "agent")]
        agent: String,
    },
    /// Run several days on a virtual clock for each scripted agent.
    Simulate {
        #[arg(long)]
        days: u32,
        /// Comma-separated: oracle, constant[:p], noisy[:sd], malformed.
        #[arg(long, value_delimiter = ',', default_value = "oracle,constant,noisy")]
        agents: Vec<AgentSpec>,
        /// First simulated day.
        #[arg(long)]
        start: Option<NaiveDate>,
    },
    /// Run the phases due now; with --live keep running on the wall clock.
    Cycle {
        #[arg(long)]
        live: bool,
        /// Pretend the current time is this instant (RFC 3339).
        #[arg(long, conflicts_with = "live")]
        now: Option<DateTime<Utc>>,
    },
    /// Print the effective configuration as TOML.
    Config,
}

fn load_config(cli: &Cli) -> Result<CycleConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            CycleConfig::load(path).with_context(|| format!("loading {}", path.display()))?
        }
        None => CycleConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    match cli.command {
        Command::Ingest { day } => {
            let r = Orchestrator::new(cfg)?.ingest(day)?;
            println!(
                "ingest {}: {} candidates, {} malformed records",
                r.day, r.candidates, r.record_errors
            );
            for f in &r.source_failures {
                println!("  source failure: {f}");
            }
        }
        Command::Issue { day } => {
            let r = Orchestrator::new(cfg)?.issue(day)?;
            let p = &r.pipeline;
            println!(
                "issue {}: {} candidates, {} passed filters, {} questions issued",
                r.day, p.candidates, p.filtered, r.questions_issued
            );
            for (criterion, n) in &p.dropped_by {
                println!("  dropped by {criterion}: {n}");
            }
            for (domain, n) in &p.allocation {
                println!("  domain {domain}: {n}");
            }
            println!(
                "rollouts: {} recorded, {} added this run",
                r.rollouts_recorded, r.rollouts_added
            );
            for f in &r.prompt_failures {
                println!("  prompt failure: {f}");
            }
        }
        Command::Resolve { day } => {
            print!("{}", Orchestrator::new(cfg)?.resolve(day)?.summary());
        }
        Command::Benchmark { day } => {
            let r = Orchestrator::new(cfg)?.benchmark(day)?;
            println!("benchmark {}: issued {} questions", r.day, r.issued_total);
            for (t, n) in &r.issued {
                println!("  {t}: {n}");
            }
            match &r.scores {
                Some(s) => print!(
                    "scored batch of {}\n{}",
                    r.scored_day,
                    render_table(std::slice::from_ref(s))
                ),
                None => println!("no batch issued on {} to score", r.scored_day),
            }
        }
        Command::Export { day } => {
            let n = Orchestrator::new(cfg)?.export(day)?;
            println!("exported {n} training groups for the batch issued {day}");
        }
        Command::Score {
            predictions,
            truth,
            agent,
        } => {
            let report = score_files(&predictions, &truth, &agent, cfg.seed)?;
            print!("{}", render_table(&[report]));
        }
        Command::Simulate {
            days,
            agents,
            start,
        } => {
            let mut opts = SimulationOptions::new(days, cfg.seed, agents);
            if let Some(start) = start {
                opts.start_day = start;
            }
            let report = simulate(&cfg, &opts)?;
            print!("{}", report.summary());
            println!(
                "\nreports under {}",
                cfg.output_dir.join("simulation").display()
            );
        }
        Command::Cycle { live, now } => {
            let orch = Orchestrator::new(cfg)?;
            if !live {
                let now = now.unwrap_or_else(Utc::now);
                let ran = orch.run_due(now)?;
                if ran.is_empty() {
                    println!("nothing due at {now}; next phase at {}", orch.next_due(now));
                }
                for (day, phase) in ran {
                    println!("ran {} for {day}", phase.as_str());
                }
                return Ok(());
            }
            loop {
                let now = Utc::now();
                for (day, phase) in orch.run_due(now)? {
                    tracing::info!(%day, phase = phase.as_str(), "phase complete");
                    println!("ran {} for {day}", phase.as_str());
                }
                let next = orch.next_due(Utc::now());
                tracing::info!(%next, "sleeping");
                let wait = (next - Utc::now()).to_std().unwrap_or_default();
                std::thread::sleep(wait);
            }
        }
        Command::Config => print!("{}", cfg.to_toml()),
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn agents_parse_from_a_list() {
        let cli = Cli::parse_from([
            "fw",
            "simulate",
            "--days",
            "2",
            "--agents",
            "oracle,constant:0.3,noisy",
        ]);
        let Command::Simulate { agents, .. } = cli.command else {
            panic!("expected simulate");
        };
        assert_eq!(agents.len(), 3);
        assert_eq!(agents[1], AgentSpec::Constant { p: 0.3 });
        assert!(
            Cli::try_parse_from(["fw", "simulate", "--days", "2", "--agents", "psychic"]).is_err()
        );
    }

    #[test]
    fn live_and_now_conflict() {
        assert!(
            Cli::try_parse_from(["fw", "cycle", "--live", "--now", "2026-03-02T20:10:00Z"])
                .is_err()
        );
    }
}
