//! In-process agents and a simulated search tool for closed-loop runs.
//!
//! Every scripted agent searches once with the question text, then answers.

use std::collections::HashMap;
use std::time::Duration;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{Agent, AgentError, AgentMove, AgentRequest, Role, SearchError, SearchTool};
use crate::domain::{QuestionId, TrajectoryId};
use crate::seeding::{rng_for, unit_hash};

/// The question line of a rendered prompt (`Question: ...`), or the first
/// non-empty line.
pub fn question_text(prompt: &str) -> &str {
    prompt
        .lines()
        .find_map(|l| l.trim().strip_prefix("Question:").map(str::trim))
        .or_else(|| prompt.lines().map(str::trim).find(|l| !l.is_empty()))
        .unwrap_or("")
}

/// Question id encoded in a `{question_id}-k{index}` trajectory id.
pub fn question_of(trajectory_id: &TrajectoryId) -> QuestionId {
    let s = trajectory_id.as_str();
    QuestionId::new(s.rsplit_once("-k").map_or(s, |(q, _)| q))
}

fn first_move(request: &AgentRequest) -> Option<AgentMove> {
    let searched = request.turns.iter().any(|t| t.role == Role::Tool);
    (!searched).then(|| AgentMove::Search {
        query: request
            .turns
            .first()
            .map(|t| question_text(&t.text).to_string())
            .unwrap_or_default(),
    })
}

fn final_answer(p: f64) -> AgentMove {
    AgentMove::Final {
        answer: format!("FINAL: {p}"),
    }
}

/// Answers with the latent probability of each question, or with a stored
/// raw answer for questions that are not probabilistic.
pub struct OracleAgent {
    latent: HashMap<QuestionId, f64>,
    answers: HashMap<QuestionId, String>,
}

impl OracleAgent {
    pub fn new(latent: HashMap<QuestionId, f64>) -> Self {
        Self {
            latent,
            answers: HashMap::new(),
        }
    }

    /// Raw answers (`FINAL: A, C`, `FINAL: 12.5`) that take precedence over
    /// latent probabilities.
    pub fn with_answers(mut self, answers: HashMap<QuestionId, String>) -> Self {
        self.answers = answers;
        self
    }
}

impl Agent for OracleAgent {
    fn name(&self) -> &str {
        "oracle"
    }

    fn next_move(&self, request: &AgentRequest, _: Duration) -> Result<AgentMove, AgentError> {
        if let Some(m) = first_move(request) {
            return Ok(m);
        }
        let q = question_of(&request.trajectory_id);
        if let Some(answer) = self.answers.get(&q) {
            return Ok(AgentMove::Final {
                answer: answer.clone(),
            });
        }
        let p = self
            .latent
            .get(&q)
            .ok_or_else(|| AgentError::Protocol(format!("oracle knows nothing about {q}")))?;
        Ok(final_answer(*p))
    }
}

/// Latent probability plus Gaussian noise, clipped to [0, 1]. The noise is
/// seeded by trajectory id, so each rollout in a group differs.
pub struct NoisyOracleAgent {
    latent: HashMap<QuestionId, f64>,
    noise: Normal<f64>,
    seed: u64,
}

impl NoisyOracleAgent {
    pub fn new(latent: HashMap<QuestionId, f64>, sd: f64, seed: u64) -> Result<Self, String> {
        let noise = Normal::new(0.0, sd).map_err(|e| e.to_string())?;
        Ok(Self {
            latent,
            noise,
            seed,
        })
    }
}

impl Agent for NoisyOracleAgent {
    fn name(&self) -> &str {
        "noisy"
    }

    fn next_move(&self, request: &AgentRequest, _: Duration) -> Result<AgentMove, AgentError> {
        if let Some(m) = first_move(request) {
            return Ok(m);
        }
        let q = question_of(&request.trajectory_id);
        let p = self
            .latent
            .get(&q)
            .ok_or_else(|| AgentError::Protocol(format!("noisy oracle knows nothing about {q}")))?;
        let mut rng = rng_for(self.seed, &["noisy-agent", request.trajectory_id.as_str()]);
        Ok(final_answer(
            (p + self.noise.sample(&mut rng)).clamp(0.0, 1.0),
        ))
    }
}

pub struct ConstantAgent {
    p: f64,
}

impl ConstantAgent {
    pub fn new(p: f64) -> Self {
        Self { p }
    }
}

impl Agent for ConstantAgent {
    fn name(&self) -> &str {
        "constant"
    }

    fn next_move(&self, request: &AgentRequest, _: Duration) -> Result<AgentMove, AgentError> {
        Ok(first_move(request).unwrap_or_else(|| final_answer(self.p)))
    }
}

/// Searches, then answers without an envelope.
pub struct MalformedAgent;

impl Agent for MalformedAgent {
    fn name(&self) -> &str {
        "malformed"
    }

    fn next_move(&self, request: &AgentRequest, _: Duration) -> Result<AgentMove, AgentError> {
        Ok(first_move(request).unwrap_or_else(|| AgentMove::Final {
            answer: "I think this is fairly likely, maybe 0.6 or so.".into(),
        }))
    }
}

/// Deterministic snippets from hashing (seed, query). A query naming a known
/// question also gets a hint of its latent probability, blurred more as
/// `info_level` drops. Realized outcomes are never known here.
pub struct SimulatedSearch {
    hints: HashMap<String, f64>,
    info_level: f64,
    seed: u64,
}

fn normalize(text: &str) -> String {
    text.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

impl SimulatedSearch {
    /// `hints` maps question text to latent probability.
    pub fn new(hints: impl IntoIterator<Item = (String, f64)>, info_level: f64, seed: u64) -> Self {
        Self {
            hints: hints.into_iter().map(|(q, p)| (normalize(&q), p)).collect(),
            info_level: info_level.clamp(0.0, 1.0),
            seed,
        }
    }
}

const OUTLETS: [&str; 6] = [
    "Daily Ledger",
    "Metro Wire",
    "Market Desk",
    "Weather Watch",
    "Sports Line",
    "Policy Brief",
];

impl SearchTool for SimulatedSearch {
    fn search(&self, query: &str, top_k: usize) -> Result<Vec<String>, SearchError> {
        let key = normalize(query);
        let mut rng = rng_for(self.seed, &["search", &key]);
        let mut out = Vec::with_capacity(top_k);
        if let Some(&p) = self.hints.get(&key) {
            let spread = 0.25 * (1.0 - self.info_level);
            let hint = (p + spread * (2.0 * rng.random::<f64>() - 1.0)).clamp(0.0, 1.0);
            out.push(format!(
                "{}: forecasters currently put the chance at about {:.0}%.",
                OUTLETS[rng.random_range(0..OUTLETS.len())],
                100.0 * hint
            ));
        }
        while out.len() < top_k {
            let i = out.len();
            let tag = (unit_hash(self.seed, &["snippet", &key, &i.to_string()]) * 1e6) as u64;
            out.push(format!(
                "{} #{tag:06}: background coverage related to \"{query}\".",
                OUTLETS[rng.random_range(0..OUTLETS.len())]
            ));
        }
        out.truncate(top_k);
        Ok(out)
    }
}
