//! Seeded synthetic event world with its own ground truth.
//!
//! Each day is generated independently from `(seed, source_id, day)`, so a world
//! can be extended without changing days already generated. Resolvability and
//! labels are assigned by systematic sampling: every event is still marginally
//! Bernoulli with the configured rate (resp. its latent probability), but the
//! realized counts track the expectation to within one event per stratum.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use chrono::{Duration, NaiveDate, NaiveTime};
use chrono_tz::Tz;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use super::SourceError;
use crate::clock::{local_instant, parse_clock_time, parse_timezone};
use crate::domain::{CandidateEvent, Label, Metadata, SourceId, Timestamp};
use crate::jsonl;
use crate::seeding::rng_for;

pub const DEFAULT_UNRESOLVED_RATE: f64 = 0.3565;
const DEFAULT_VOCABULARY: &str = include_str!("../../assets/synthetic_vocabulary.toml");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IneligibleKind {
    Unsafe,
    Trivial,
    Unroutable,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub name: String,
    pub template: String,
    #[serde(default)]
    pub weight: f64,
    #[serde(default)]
    pub ineligible: Option<IneligibleKind>,
    #[serde(default)]
    pub resolver_key: Option<String>,
    pub fields: BTreeMap<String, Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub generator: Vec<Generator>,
}

impl Vocabulary {
    pub fn parse(text: &str) -> Result<Self, String> {
        let v: Vocabulary = toml::from_str(text).map_err(|e| e.to_string())?;
        if !v
            .generator
            .iter()
            .any(|g| g.ineligible.is_none() && g.weight > 0.0)
        {
            return Err(
                "vocabulary needs at least one eligible generator with positive weight".into(),
            );
        }
        if let Some(g) = v
            .generator
            .iter()
            .find(|g| g.fields.values().any(|vals| vals.is_empty()))
        {
            return Err(format!("generator {} has a field with no values", g.name));
        }
        Ok(v)
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::parse(&text)
    }
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::parse(DEFAULT_VOCABULARY).expect("bundled vocabulary parses")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub source_id: SourceId,
    /// Candidate events per day.
    pub event_rate: usize,
    pub latent_p_min: f64,
    pub latent_p_max: f64,
    /// Shape of the symmetric Beta law latent probabilities are drawn from
    /// (1 = uniform, < 1 favours confident events).
    pub latent_p_shape: f64,
    pub unresolved_rate: f64,
    /// Shares of unresolved events reported as postponed and as unmatchable.
    pub postponed_share: f64,
    pub mismatch_share: f64,
    pub ineligible_rate: f64,
    pub timezone: Tz,
    pub issue_time: NaiveTime,
    pub resolve_time: NaiveTime,
    pub start_day: NaiveDate,
    pub days: u32,
    pub resolver_key: String,
    pub vocabulary: Vocabulary,
}

impl SyntheticConfig {
    pub fn new(source_id: impl Into<SourceId>, start_day: NaiveDate) -> Self {
        Self {
            source_id: source_id.into(),
            event_rate: 100,
            latent_p_min: 0.0,
            latent_p_max: 1.0,
            latent_p_shape: 0.5,
            unresolved_rate: DEFAULT_UNRESOLVED_RATE,
            postponed_share: 0.2,
            mismatch_share: 0.1,
            ineligible_rate: 0.06,
            timezone: Tz::UTC,
            issue_time: NaiveTime::from_hms_opt(20, 0, 0).expect("valid"),
            resolve_time: NaiveTime::from_hms_opt(20, 30, 0).expect("valid"),
            start_day,
            days: 1,
            resolver_key: "synthetic".into(),
            vocabulary: Vocabulary::default(),
        }
    }

    pub fn validate(&self) -> Result<(), SourceError> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(SourceError::InvalidConfig(format!(
                    "{name}={v} is outside [0, 1]"
                )))
            }
        };
        unit("latent_p_min", self.latent_p_min)?;
        unit("latent_p_max", self.latent_p_max)?;
        unit("unresolved_rate", self.unresolved_rate)?;
        unit("postponed_share", self.postponed_share)?;
        unit("mismatch_share", self.mismatch_share)?;
        unit("ineligible_rate", self.ineligible_rate)?;
        if self.latent_p_min > self.latent_p_max {
            return Err(SourceError::InvalidConfig(format!(
                "latent_p_min {} exceeds latent_p_max {}",
                self.latent_p_min, self.latent_p_max
            )));
        }
        if self.postponed_share + self.mismatch_share > 1.0 {
            return Err(SourceError::InvalidConfig(
                "postponed_share + mismatch_share exceeds 1".into(),
            ));
        }
        if !(self.latent_p_shape.is_finite() && self.latent_p_shape > 0.0) {
            return Err(SourceError::InvalidConfig(format!(
                "latent_p_shape must be positive, got {}",
                self.latent_p_shape
            )));
        }
        Ok(())
    }

    /// Reads a config from source params. Returns the config and the seed.
    pub fn from_params(
        source_id: &SourceId,
        params: &Metadata,
    ) -> Result<(Self, u64), SourceError> {
        let missing = |p: &str| SourceError::MissingParam {
            source_id: source_id.clone(),
            param: p.into(),
        };
        let invalid = |p: &str, reason: String| SourceError::InvalidParam {
            source_id: source_id.clone(),
            param: p.into(),
            reason,
        };
        fn num<T: std::str::FromStr>(params: &Metadata, key: &str) -> Option<Result<T, String>>
        where
            T::Err: std::fmt::Display,
        {
            params
                .get(key)
                .map(|v| v.trim().parse::<T>().map_err(|e| e.to_string()))
        }
        let required_f64 = |key: &str| -> Result<f64, SourceError> {
            num::<f64>(params, key)
                .ok_or_else(|| missing(key))?
                .map_err(|e| invalid(key, e))
        };

        let seed = num::<u64>(params, "seed")
            .ok_or_else(|| missing("seed"))?
            .map_err(|e| invalid("seed", e))?;
        let start_day = match params.get("start_day") {
            Some(s) => NaiveDate::parse_from_str(s, "%Y-%m-%d")
                .map_err(|e| invalid("start_day", e.to_string()))?,
            None => NaiveDate::from_ymd_opt(2026, 1, 1).expect("valid"),
        };
        let mut cfg = Self::new(source_id.clone(), start_day);
        cfg.event_rate = num::<usize>(params, "event_rate")
            .ok_or_else(|| missing("event_rate"))?
            .map_err(|e| invalid("event_rate", e))?;
        cfg.latent_p_min = required_f64("latent_p_min")?;
        cfg.latent_p_max = required_f64("latent_p_max")?;
        cfg.unresolved_rate = required_f64("unresolved_rate")?;
        for (key, slot) in [
            ("latent_p_shape", &mut cfg.latent_p_shape),
            ("postponed_share", &mut cfg.postponed_share),
            ("mismatch_share", &mut cfg.mismatch_share),
            ("ineligible_rate", &mut cfg.ineligible_rate),
        ] {
            if let Some(v) = num::<f64>(params, key) {
                *slot = v.map_err(|e| invalid(key, e))?;
            }
        }
        if let Some(v) = num::<u32>(params, "days") {
            cfg.days = v.map_err(|e| invalid("days", e))?;
        }
        if let Some(tz) = params.get("timezone") {
            cfg.timezone = parse_timezone(tz).map_err(|e| invalid("timezone", e))?;
        }
        if let Some(t) = params.get("issue_time") {
            cfg.issue_time = parse_clock_time(t).map_err(|e| invalid("issue_time", e))?;
        }
        if let Some(t) = params.get("resolve_time") {
            cfg.resolve_time = parse_clock_time(t).map_err(|e| invalid("resolve_time", e))?;
        }
        if let Some(k) = params.get("resolver_key") {
            cfg.resolver_key = k.clone();
        }
        if let Some(path) = params.get("vocabulary") {
            cfg.vocabulary =
                Vocabulary::load(Path::new(path)).map_err(|e| invalid("vocabulary", e))?;
        }
        cfg.validate()?;
        Ok((cfg, seed))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthStatus {
    Published,
    NotPublished,
    Postponed,
}

/// Ground truth for one event, keyed by `event_key`. Only resolvers read this.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub event_key: String,
    /// Identifier carried by the published record; differs from the event's
    /// own identifier when the publication cannot be matched.
    pub identifier: String,
    pub latent_p: f64,
    pub realized_label: Label,
    pub will_resolve: bool,
    pub status: TruthStatus,
    pub published_at: Timestamp,
    pub evidence: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldEvent {
    pub event: CandidateEvent,
    pub eligible: bool,
    pub truth: TruthRecord,
}

impl WorldEvent {
    pub fn latent_p(&self) -> f64 {
        self.truth.latent_p
    }

    pub fn realized_label(&self) -> Label {
        self.truth.realized_label
    }

    pub fn will_resolve(&self) -> bool {
        self.truth.will_resolve
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticWorld {
    pub seed: u64,
    pub events: Vec<WorldEvent>,
}

impl SyntheticWorld {
    pub fn truth(&self) -> Vec<TruthRecord> {
        self.events.iter().map(|e| e.truth.clone()).collect()
    }

    /// Writes `events.jsonl` (agent-safe candidates) and the sidecar `truth.jsonl`.
    pub fn persist(&self, dir: &Path) -> std::io::Result<()> {
        let events: Vec<_> = self.events.iter().map(|e| e.event.clone()).collect();
        jsonl::write_file(&dir.join("events.jsonl"), &events)?;
        jsonl::write_file(&dir.join("truth.jsonl"), &self.truth())
    }
}

pub fn generate_synthetic_world(
    config: &SyntheticConfig,
    seed: u64,
) -> Result<SyntheticWorld, SourceError> {
    config.validate()?;
    let mut events = Vec::new();
    for d in 0..config.days {
        events.extend(generate_day(
            config,
            seed,
            config.start_day + Duration::days(d as i64),
        )?);
    }
    Ok(SyntheticWorld { seed, events })
}

/// Indicator draws whose running sum tracks the running sum of `probs`:
/// draw `i` is 1 iff `floor(C_i + u)` steps up, with `C_i` the cumulative sum and
/// `u` one uniform offset. Each draw is marginally Bernoulli(`probs[i]`).
fn systematic_draws(probs: &[f64], offset: f64) -> Vec<bool> {
    let mut out = Vec::with_capacity(probs.len());
    let mut cum = 0.0_f64;
    for &p in probs {
        let before = (cum + offset).floor();
        cum += p;
        out.push((cum + offset).floor() > before);
    }
    out
}

struct Draft {
    generator: usize,
    fields: BTreeMap<String, String>,
    latent_p: f64,
}

pub fn generate_day(
    config: &SyntheticConfig,
    seed: u64,
    day: NaiveDate,
) -> Result<Vec<WorldEvent>, SourceError> {
    config.validate()?;
    let day_tag = day.format("%Y-%m-%d").to_string();
    let mut rng = rng_for(seed, &["synthetic", config.source_id.as_str(), &day_tag]);
    let vocab = &config.vocabulary;
    let eligible: Vec<usize> = (0..vocab.generator.len())
        .filter(|&i| vocab.generator[i].ineligible.is_none() && vocab.generator[i].weight > 0.0)
        .collect();
    let ineligible: Vec<usize> = (0..vocab.generator.len())
        .filter(|&i| vocab.generator[i].ineligible.is_some())
        .collect();
    let total_weight: f64 = eligible.iter().map(|&i| vocab.generator[i].weight).sum();
    let beta = Beta::new(config.latent_p_shape, config.latent_p_shape)
        .map_err(|e| SourceError::InvalidConfig(e.to_string()))?;

    let mut seen = BTreeSet::new();
    let mut drafts = Vec::with_capacity(config.event_rate);
    for _ in 0..config.event_rate {
        let generator = if !ineligible.is_empty() && rng.random::<f64>() < config.ineligible_rate {
            *ineligible.choose(&mut rng).expect("non-empty")
        } else {
            let mut x = rng.random::<f64>() * total_weight;
            let mut pick = *eligible.last().expect("validated vocabulary");
            for &i in &eligible {
                x -= vocab.generator[i].weight;
                if x < 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        };
        let g = &vocab.generator[generator];
        // Re-draw field combinations a few times to avoid same-day duplicates.
        let mut fields = BTreeMap::new();
        for _ in 0..16 {
            fields = g
                .fields
                .iter()
                .map(|(k, vals)| (k.clone(), vals.choose(&mut rng).expect("non-empty").clone()))
                .collect();
            if seen.insert((generator, fields.clone())) {
                break;
            }
        }
        let latent_p = config.latent_p_min
            + (config.latent_p_max - config.latent_p_min) * beta.sample(&mut rng);
        drafts.push(Draft {
            generator,
            fields,
            latent_p,
        });
    }

    let n = drafts.len();
    let is_eligible: Vec<bool> = drafts
        .iter()
        .map(|d| vocab.generator[d.generator].ineligible.is_none())
        .collect();

    // Resolvability: systematic over eligible events in a shuffled order.
    let mut will_resolve = vec![true; n];
    let mut order: Vec<usize> = (0..n).filter(|&i| is_eligible[i]).collect();
    order.shuffle(&mut rng);
    let unresolved = systematic_draws(&vec![config.unresolved_rate; order.len()], rng.random());
    for (&i, &u) in order.iter().zip(&unresolved) {
        will_resolve[i] = !u;
    }
    for i in (0..n).filter(|&i| !is_eligible[i]) {
        will_resolve[i] = rng.random::<f64>() >= config.unresolved_rate;
    }

    // Labels: systematic over resolving eligible events sorted by latent p, so
    // realized frequencies track latent probabilities within any p-interval.
    let mut label = vec![false; n];
    let mut by_p: Vec<usize> = (0..n)
        .filter(|&i| is_eligible[i] && will_resolve[i])
        .collect();
    by_p.sort_by(|&a, &b| {
        drafts[a]
            .latent_p
            .total_cmp(&drafts[b].latent_p)
            .then(a.cmp(&b))
    });
    let probs: Vec<f64> = by_p.iter().map(|&i| drafts[i].latent_p).collect();
    for (&i, z) in by_p.iter().zip(systematic_draws(&probs, rng.random())) {
        label[i] = z;
    }
    for i in (0..n).filter(|&i| !(is_eligible[i] && will_resolve[i])) {
        label[i] = rng.random::<f64>() < drafts[i].latent_p;
    }

    let observed_at = local_instant(config.timezone, day, config.issue_time);
    let resolution_day = day + Duration::days(1);
    let expected_resolution = local_instant(config.timezone, resolution_day, config.resolve_time);
    let date_text = resolution_day.format("%B %-d").to_string();

    let mut out = Vec::with_capacity(n);
    for (i, d) in drafts.into_iter().enumerate() {
        let g = &vocab.generator[d.generator];
        let event_key = format!("{}-{}-{:05}", config.source_id, day_tag, i);
        let mut payload: Metadata = d.fields;
        payload.insert("template".into(), g.template.clone());
        payload.insert("date".into(), date_text.clone());
        payload.insert("event_key".into(), event_key.clone());
        payload.insert("identifier".into(), event_key.clone());
        let resolver_key = g
            .resolver_key
            .clone()
            .unwrap_or_else(|| config.resolver_key.clone());

        let status = if will_resolve[i] {
            TruthStatus::Published
        } else {
            let r: f64 = rng.random();
            if r < config.postponed_share {
                TruthStatus::Postponed
            } else if r < config.postponed_share + config.mismatch_share {
                // Published, but under an identifier that does not match.
                TruthStatus::Published
            } else {
                TruthStatus::NotPublished
            }
        };
        let identifier = if !will_resolve[i] && status == TruthStatus::Published {
            format!("{event_key}/revised")
        } else {
            event_key.clone()
        };
        let realized_label = Label::from_bool(label[i]);
        let evidence = format!(
            "{identifier}: {} (published record)",
            if label[i] {
                "event occurred"
            } else {
                "event did not occur"
            }
        );
        out.push(WorldEvent {
            event: CandidateEvent {
                source_id: config.source_id.clone(),
                source_url: format!("synthetic://{}/{}", config.source_id, event_key),
                observed_at,
                payload,
                expected_resolution,
                resolver_key,
            },
            eligible: is_eligible[i],
            truth: TruthRecord {
                event_key,
                identifier,
                latent_p: d.latent_p,
                realized_label,
                will_resolve: will_resolve[i],
                status,
                published_at: expected_resolution - Duration::hours(2),
                evidence,
            },
        });
    }
    Ok(out)
}
