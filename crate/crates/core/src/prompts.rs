//! Agent-facing prompts for training questions and the four benchmark formats.
//!
//! Template bodies are plain text files with a `<QUESTION>` placeholder and,
//! for choice formats, an `<OPTIONS>` placeholder. The bundled set lives in
//! `assets/prompts/`; [`PromptSet::load_dir`] overrides any of them.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{BenchmarkType, Question, QuestionId, Timestamp};
use crate::seeding::rng_for;

pub const QUESTION_PLACEHOLDER: &str = "<QUESTION>";
pub const OPTIONS_PLACEHOLDER: &str = "<OPTIONS>";
pub const DAILY_BENCHMARK_TOTAL: usize = 50;

#[derive(Debug, Error, PartialEq)]
pub enum PromptError {
    #[error("template {template} must contain {placeholder} exactly once (found {count})")]
    Placeholder {
        template: TemplateName,
        placeholder: &'static str,
        count: usize,
    },
    #[error("template {template} cannot render a {expected} prompt")]
    WrongTemplate {
        template: TemplateName,
        expected: TemplateName,
    },
    #[error("{qtype} question {id} has {count} options, allowed {min}..={max}")]
    OptionCount {
        id: QuestionId,
        qtype: BenchmarkType,
        count: usize,
        min: usize,
        max: usize,
    },
    #[error("reading {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateName {
    Probabilistic,
    BinaryChoice,
    SimpleMc,
    DifficultMc,
    Numeric,
}

impl TemplateName {
    pub const ALL: [TemplateName; 5] = [
        TemplateName::Probabilistic,
        TemplateName::BinaryChoice,
        TemplateName::SimpleMc,
        TemplateName::DifficultMc,
        TemplateName::Numeric,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateName::Probabilistic => "probabilistic",
            TemplateName::BinaryChoice => "binary_choice",
            TemplateName::SimpleMc => "simple_mc",
            TemplateName::DifficultMc => "difficult_mc",
            TemplateName::Numeric => "numeric",
        }
    }

    pub fn for_benchmark(t: BenchmarkType) -> Self {
        match t {
            BenchmarkType::BinaryChoice => TemplateName::BinaryChoice,
            BenchmarkType::SimpleMc => TemplateName::SimpleMc,
            BenchmarkType::DifficultMc => TemplateName::DifficultMc,
            BenchmarkType::Numeric => TemplateName::Numeric,
        }
    }

    fn needs_options(self) -> bool {
        matches!(
            self,
            TemplateName::BinaryChoice | TemplateName::SimpleMc | TemplateName::DifficultMc
        )
    }

    fn bundled(self) -> &'static str {
        match self {
            TemplateName::Probabilistic => include_str!("../assets/prompts/probabilistic.txt"),
            TemplateName::BinaryChoice => include_str!("../assets/prompts/binary_choice.txt"),
            TemplateName::SimpleMc => include_str!("../assets/prompts/simple_mc.txt"),
            TemplateName::DifficultMc => include_str!("../assets/prompts/difficult_mc.txt"),
            TemplateName::Numeric => include_str!("../assets/prompts/numeric.txt"),
        }
    }
}

impl fmt::Display for TemplateName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub name: TemplateName,
    pub body: String,
}

impl PromptTemplate {
    /// Checks that every required placeholder appears exactly once. Templates
    /// without options must not mention `<OPTIONS>` at all.
    pub fn new(name: TemplateName, body: impl Into<String>) -> Result<Self, PromptError> {
        let body = body.into();
        let q = body.matches(QUESTION_PLACEHOLDER).count();
        if q != 1 {
            return Err(PromptError::Placeholder {
                template: name,
                placeholder: QUESTION_PLACEHOLDER,
                count: q,
            });
        }
        let o = body.matches(OPTIONS_PLACEHOLDER).count();
        if o != usize::from(name.needs_options()) {
            return Err(PromptError::Placeholder {
                template: name,
                placeholder: OPTIONS_PLACEHOLDER,
                count: o,
            });
        }
        Ok(Self { name, body })
    }

    fn fill(&self, question: &str, options: Option<&str>) -> String {
        // Split on the placeholder rather than `replace` so placeholder-like text
        // inside the question is left alone.
        let (head, tail) = self
            .body
            .split_once(QUESTION_PLACEHOLDER)
            .expect("checked at construction");
        let (head, tail) = match options {
            Some(opts) => match (
                head.split_once(OPTIONS_PLACEHOLDER),
                tail.split_once(OPTIONS_PLACEHOLDER),
            ) {
                (Some((a, b)), _) => (format!("{a}{opts}{b}"), tail.to_string()),
                (_, Some((a, b))) => (head.to_string(), format!("{a}{opts}{b}")),
                _ => (head.to_string(), tail.to_string()),
            },
            None => (head.to_string(), tail.to_string()),
        };
        format!("{head}{question}{tail}").trim_end().to_string()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PromptSet {
    templates: BTreeMap<TemplateName, PromptTemplate>,
}

impl Default for PromptSet {
    fn default() -> Self {
        let templates = TemplateName::ALL
            .into_iter()
            .map(|n| {
                (
                    n,
                    PromptTemplate::new(n, n.bundled()).expect("bundled template is valid"),
                )
            })
            .collect();
        Self { templates }
    }
}

impl PromptSet {
    /// Bundled templates, overridden by any `<name>.txt` present in `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self, PromptError> {
        let mut set = Self::default();
        for name in TemplateName::ALL {
            let path = dir.join(format!("{name}.txt"));
            if !path.exists() {
                continue;
            }
            let body = std::fs::read_to_string(&path).map_err(|e| PromptError::Io {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            set.templates.insert(name, PromptTemplate::new(name, body)?);
        }
        Ok(set)
    }

    pub fn get(&self, name: TemplateName) -> &PromptTemplate {
        &self.templates[&name]
    }
}

/// Renders the training prompt. Only the question is visible to the agent;
/// its description stays with the pair and never reaches this function.
pub fn render_prediction_prompt(
    q: &Question,
    tmpl: &PromptTemplate,
) -> Result<String, PromptError> {
    if tmpl.name != TemplateName::Probabilistic {
        return Err(PromptError::WrongTemplate {
            template: tmpl.name,
            expected: TemplateName::Probabilistic,
        });
    }
    Ok(tmpl.fill(&q.text, None))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkQuestion {
    pub id: QuestionId,
    pub qtype: BenchmarkType,
    pub text: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub options: Vec<String>,
    pub resolution_time: Timestamp,
    pub resolver_key: String,
    /// Trailing values for numeric questions, excluding the value being predicted.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub history: Vec<f64>,
}

impl BenchmarkQuestion {
    pub fn check(&self) -> Result<(), PromptError> {
        let (min, max) = self.qtype.option_bounds();
        let count = self.options.len();
        if count < min || count > max {
            return Err(PromptError::OptionCount {
                id: self.id.clone(),
                qtype: self.qtype,
                count,
                min,
                max,
            });
        }
        Ok(())
    }
}

/// `A`, `B`, ... for option index `i` (< 26).
pub fn option_letter(i: usize) -> char {
    (b'A' + i as u8) as char
}

/// Index of an option letter, case-insensitive.
pub fn letter_index(c: char) -> Option<usize> {
    let c = c.to_ascii_uppercase();
    c.is_ascii_uppercase().then(|| (c as u8 - b'A') as usize)
}

pub fn render_options(options: &[String]) -> String {
    options
        .iter()
        .enumerate()
        .map(|(i, o)| format!("{}. {o}", option_letter(i)))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn render_benchmark_prompt(
    bq: &BenchmarkQuestion,
    tmpl: &PromptTemplate,
) -> Result<String, PromptError> {
    let expected = TemplateName::for_benchmark(bq.qtype);
    if tmpl.name != expected {
        return Err(PromptError::WrongTemplate {
            template: tmpl.name,
            expected,
        });
    }
    bq.check()?;
    let options = expected
        .needs_options()
        .then(|| render_options(&bq.options));
    Ok(tmpl.fill(&bq.text, options.as_deref()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkCaps {
    pub per_type: BTreeMap<BenchmarkType, usize>,
    pub total: usize,
}

impl Default for BenchmarkCaps {
    fn default() -> Self {
        Self {
            per_type: BenchmarkType::ALL
                .into_iter()
                .map(|t| (t, t.default_cap()))
                .collect(),
            total: DAILY_BENCHMARK_TOTAL,
        }
    }
}

impl BenchmarkCaps {
    pub fn cap(&self, t: BenchmarkType) -> usize {
        self.per_type.get(&t).copied().unwrap_or(0)
    }
}

/// Seeded uniform sample per type, up to each type's cap and the overall
/// total (filled in type order). Output is grouped by type, then sorted by id.
pub fn select_daily_benchmark(
    pool: &[BenchmarkQuestion],
    caps: &BenchmarkCaps,
    seed: u64,
) -> Vec<BenchmarkQuestion> {
    use rand::seq::SliceRandom;

    let mut out = Vec::new();
    for t in BenchmarkType::ALL {
        let mut of_type: Vec<&BenchmarkQuestion> = pool.iter().filter(|q| q.qtype == t).collect();
        of_type.sort_by(|a, b| a.id.cmp(&b.id));
        let room = caps.total.saturating_sub(out.len());
        let n = caps.cap(t).min(of_type.len()).min(room);
        let mut rng = rng_for(seed, &["benchmark", t.as_str()]);
        let (chosen, _) = of_type.partial_shuffle(&mut rng, n);
        let mut chosen: Vec<BenchmarkQuestion> = chosen.iter().map(|q| (*q).clone()).collect();
        chosen.sort_by(|a, b| a.id.cmp(&b.id));
        out.extend(chosen);
    }
    out
}
