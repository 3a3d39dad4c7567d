//! Declarative cycle configuration, read from a single TOML file.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{Duration, NaiveDate, NaiveTime};
use chrono_tz::Tz;
use serde::{Deserialize, Serialize};

use super::OrchestratorError;
use crate::clock::local_instant;
use crate::domain::{BenchmarkType, DomainLabel, Metadata, SourceId, Timestamp};
use crate::prompts::BenchmarkCaps;
use crate::rollout::{RolloutLimits, DEFAULT_GROUP_SIZE};
use crate::sources::synthetic::DEFAULT_UNRESOLVED_RATE;
use crate::sources::{SourceKind, SourceSpec};

pub const DEFAULT_SEED: u64 = 20_260_417;
pub const DEFAULT_TARGET: usize = 500;

mod clock_time {
    use chrono::NaiveTime;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(t: &NaiveTime, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&t.format("%H:%M").to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<NaiveTime, D::Error> {
        let s = String::deserialize(d)?;
        crate::clock::parse_clock_time(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnresolvedPolicy {
    #[default]
    Discard,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CycleSettings {
    #[serde(with = "clock_time")]
    pub issue_time: NaiveTime,
    #[serde(with = "clock_time")]
    pub resolve_time: NaiveTime,
    pub timezone: Tz,
    /// Questions issued per day after resampling (M).
    pub target: usize,
    /// Rollouts per question (K).
    pub group_size: u32,
    pub unresolved_policy: UnresolvedPolicy,
}

impl Default for CycleSettings {
    fn default() -> Self {
        Self {
            issue_time: NaiveTime::from_hms_opt(20, 0, 0).expect("valid"),
            resolve_time: NaiveTime::from_hms_opt(20, 30, 0).expect("valid"),
            timezone: Tz::UTC,
            target: DEFAULT_TARGET,
            group_size: DEFAULT_GROUP_SIZE,
            unresolved_policy: UnresolvedPolicy::Discard,
        }
    }
}

impl CycleSettings {
    pub fn issue_instant(&self, day: NaiveDate) -> Timestamp {
        local_instant(self.timezone, day, self.issue_time)
    }

    /// When the resolve phase runs on `day` (for the batch issued the day before).
    pub fn resolve_instant(&self, day: NaiveDate) -> Timestamp {
        local_instant(self.timezone, day, self.resolve_time)
    }
}

/// Where daily benchmark questions come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PoolSpec {
    /// Generated questions; `unresolved_rate` gives, per type, the share whose
    /// answer is never published.
    Synthetic {
        #[serde(default = "default_pool_size")]
        per_type: usize,
        #[serde(default)]
        unresolved_rate: BTreeMap<BenchmarkType, f64>,
    },
    /// A question file (one `BenchmarkQuestion` per line) and a truth file.
    /// Questions are offered on the day before their resolution day.
    Files { questions: PathBuf, truth: PathBuf },
}

fn default_pool_size() -> usize {
    40
}

impl Default for PoolSpec {
    fn default() -> Self {
        PoolSpec::Synthetic {
            per_type: default_pool_size(),
            unresolved_rate: BTreeMap::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkSettings {
    pub enabled: bool,
    /// Days between issuing a benchmark batch and scoring it.
    pub lag_days: u32,
    pub caps: BenchmarkCaps,
    pub pool: PoolSpec,
}

impl Default for BenchmarkSettings {
    fn default() -> Self {
        Self {
            enabled: true,
            lag_days: 2,
            caps: BenchmarkCaps::default(),
            pool: PoolSpec::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AgentSpec {
    #[default]
    Oracle,
    Constant {
        #[serde(default = "half")]
        p: f64,
    },
    Noisy {
        #[serde(default = "default_noise")]
        sd: f64,
    },
    Malformed,
    Http {
        #[serde(default = "default_remote")]
        name: String,
    },
}

fn half() -> f64 {
    0.5
}

fn default_noise() -> f64 {
    0.1
}

fn default_remote() -> String {
    "remote".into()
}

impl AgentSpec {
    pub fn name(&self) -> String {
        match self {
            AgentSpec::Oracle => "oracle".into(),
            AgentSpec::Constant { .. } => "constant".into(),
            AgentSpec::Noisy { .. } => "noisy".into(),
            AgentSpec::Malformed => "malformed".into(),
            AgentSpec::Http { name } => name.clone(),
        }
    }
}

impl fmt::Display for AgentSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// `oracle`, `constant[:p]`, `noisy[:sd]`, `malformed`, `http[:name]`.
impl FromStr for AgentSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, arg) = match s.trim().split_once(':') {
            Some((k, a)) => (k, Some(a)),
            None => (s.trim(), None),
        };
        let number = |a: &str| a.parse::<f64>().map_err(|e| format!("agent {s:?}: {e}"));
        match (kind, arg) {
            ("oracle", None) => Ok(AgentSpec::Oracle),
            ("malformed", None) => Ok(AgentSpec::Malformed),
            ("constant", a) => Ok(AgentSpec::Constant {
                p: a.map(number).transpose()?.unwrap_or(0.5),
            }),
            ("noisy", a) => Ok(AgentSpec::Noisy {
                sd: a.map(number).transpose()?.unwrap_or(default_noise()),
            }),
            ("http", a) => Ok(AgentSpec::Http {
                name: a.map_or_else(default_remote, str::to_string),
            }),
            _ => Err(format!(
                "unknown agent {s:?} (expected oracle, constant, noisy, malformed or http)"
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SearchSpec {
    Simulated {
        #[serde(default = "default_info_level")]
        info_level: f64,
    },
    Http,
}

fn default_info_level() -> f64 {
    0.8
}

impl Default for SearchSpec {
    fn default() -> Self {
        SearchSpec::Simulated {
            info_level: default_info_level(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum JudgeSpec {
    #[default]
    Reference,
    Http,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineFiles {
    pub templates: Option<PathBuf>,
    pub domain_rules: Option<PathBuf>,
    pub prompts_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResolverKind {
    FileLookup,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolverSpec {
    pub key: String,
    pub kind: ResolverKind,
    pub path: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CycleConfig {
    pub output_dir: PathBuf,
    pub seed: u64,
    pub cycle: CycleSettings,
    pub limits: RolloutLimits,
    pub benchmark: BenchmarkSettings,
    pub agent: AgentSpec,
    pub search: SearchSpec,
    pub judges: JudgeSpec,
    pub pipeline: PipelineFiles,
    #[serde(rename = "source")]
    pub sources: Vec<SourceSpec>,
    #[serde(rename = "resolver")]
    pub resolvers: Vec<ResolverSpec>,
}

impl Default for CycleConfig {
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from("fw-out"),
            seed: DEFAULT_SEED,
            cycle: CycleSettings::default(),
            limits: RolloutLimits::default(),
            benchmark: BenchmarkSettings::default(),
            agent: AgentSpec::default(),
            search: SearchSpec::default(),
            judges: JudgeSpec::default(),
            pipeline: PipelineFiles::default(),
            sources: vec![SourceSpec {
                source_id: SourceId::new("world"),
                kind: SourceKind::Synthetic,
                domain_hint: DomainLabel::other(),
                params: Metadata::new(),
            }],
            resolvers: Vec::new(),
        }
    }
}

/// Synthetic-source parameters the cycle supplies when a source leaves them out.
const CYCLE_OWNED: [&str; 3] = ["timezone", "issue_time", "resolve_time"];

impl CycleConfig {
    pub fn parse(text: &str) -> Result<Self, OrchestratorError> {
        let cfg: CycleConfig =
            toml::from_str(text).map_err(|e| OrchestratorError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, OrchestratorError> {
        let text = std::fs::read_to_string(path).map_err(OrchestratorError::io(path))?;
        Self::parse(&text)
            .map_err(|e| OrchestratorError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), OrchestratorError> {
        let bad = |m: String| Err(OrchestratorError::Config(m));
        if self.cycle.target == 0 {
            return bad("cycle.target must be at least 1".into());
        }
        if self.cycle.group_size == 0 {
            return bad("cycle.group_size must be at least 1".into());
        }
        self.limits.check().map_err(OrchestratorError::Config)?;
        // Checked over a whole year so DST transitions are covered.
        let year = NaiveDate::from_ymd_opt(2026, 1, 1).expect("valid");
        for d in 0..366 {
            let t = year + Duration::days(d);
            if self.cycle.resolve_instant(t + Duration::days(1)) <= self.cycle.issue_instant(t) {
                return bad(format!(
                    "resolve_time {} on {} is not after issue_time {} on {t}",
                    self.cycle.resolve_time,
                    t + Duration::days(1),
                    self.cycle.issue_time
                ));
            }
        }
        let mut ids = BTreeSet::new();
        for s in &self.sources {
            if !ids.insert(&s.source_id) {
                return bad(format!("duplicate source {}", s.source_id));
            }
            if s.kind == SourceKind::Synthetic {
                let own = [
                    self.cycle.timezone.name().to_string(),
                    self.cycle.issue_time.format("%H:%M").to_string(),
                    self.cycle.resolve_time.format("%H:%M").to_string(),
                ];
                for (key, expected) in CYCLE_OWNED.iter().zip(own) {
                    if let Some(v) = s.params.get(*key) {
                        let same = match *key {
                            "timezone" => v.parse::<Tz>().is_ok_and(|tz| tz.name() == expected),
                            _ => crate::clock::parse_clock_time(v)
                                .is_ok_and(|t| t.format("%H:%M").to_string() == expected),
                        };
                        if !same {
                            return bad(format!(
                                "source {}: {key}={v} disagrees with the cycle's {expected}",
                                s.source_id
                            ));
                        }
                    }
                }
            }
        }
        let mut keys = BTreeSet::new();
        for r in &self.resolvers {
            if !keys.insert(&r.key) {
                return bad(format!("duplicate resolver {}", r.key));
            }
        }
        if let PoolSpec::Synthetic {
            unresolved_rate, ..
        } = &self.benchmark.pool
        {
            if let Some((t, r)) = unresolved_rate
                .iter()
                .find(|(_, r)| !(0.0..=1.0).contains(*r))
            {
                return bad(format!(
                    "benchmark unresolved_rate for {t} is {r}, outside [0, 1]"
                ));
            }
        }
        match &self.search {
            SearchSpec::Simulated { info_level } if !(0.0..=1.0).contains(info_level) => {
                return bad(format!("search.info_level {info_level} is outside [0, 1]"))
            }
            _ => {}
        }
        match &self.agent {
            AgentSpec::Constant { p } if !(0.0..=1.0).contains(p) => {
                bad(format!("constant agent p={p} is outside [0, 1]"))
            }
            AgentSpec::Noisy { sd } if !(sd.is_finite() && *sd >= 0.0) => {
                bad(format!("noisy agent sd={sd} is invalid"))
            }
            _ => Ok(()),
        }
    }

    /// Source specs with the parameters a synthetic source left out filled in
    /// from the cycle: seed, clock, and a candidate volume of 1.15 M.
    pub fn effective_sources(&self) -> Vec<SourceSpec> {
        self.sources
            .iter()
            .map(|s| {
                let mut s = s.clone();
                if s.kind == SourceKind::Synthetic {
                    let defaults = [
                        ("seed", self.seed.to_string()),
                        (
                            "event_rate",
                            (self.cycle.target as f64 * 1.15).ceil().to_string(),
                        ),
                        ("latent_p_min", "0".into()),
                        ("latent_p_max", "1".into()),
                        ("unresolved_rate", DEFAULT_UNRESOLVED_RATE.to_string()),
                        ("timezone", self.cycle.timezone.name().to_string()),
                        (
                            "issue_time",
                            self.cycle.issue_time.format("%H:%M").to_string(),
                        ),
                        (
                            "resolve_time",
                            self.cycle.resolve_time.format("%H:%M").to_string(),
                        ),
                    ];
                    for (k, v) in defaults {
                        s.params.entry(k.to_string()).or_insert(v);
                    }
                }
                s
            })
            .collect()
    }
}
