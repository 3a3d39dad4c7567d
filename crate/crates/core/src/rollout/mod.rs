//! Turn-based agent rollouts. The environment sends the conversation so far,
//! the agent answers with a search or a final answer, and search results come
//! back as tool turns. The result is a PENDING trajectory holding exactly the
//! prediction-time prefix.

pub mod http;
pub mod scripted;

use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    Correction, QuestionId, Step, Timestamp, Trajectory, TrajectoryId, TrajectoryStatus,
};

pub use http::{HttpAgent, HttpSearchTool};
pub use scripted::{ConstantAgent, MalformedAgent, NoisyOracleAgent, OracleAgent, SimulatedSearch};

pub const DEFAULT_GROUP_SIZE: u32 = 4;
pub const DEFAULT_TOP_K: usize = 3;
pub const SEARCH_PREFIX: &str = "SEARCH: ";
pub const ENVELOPE: &str = "FINAL:";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Environment,
    Agent,
    Tool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub role: Role,
    pub text: String,
}

impl Turn {
    pub fn new(role: Role, text: impl Into<String>) -> Self {
        Self {
            role,
            text: text.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentRequest {
    pub trajectory_id: TrajectoryId,
    pub rollout_index: u32,
    pub turns: Vec<Turn>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AgentMove {
    Search { query: String },
    Final { answer: String },
}

impl AgentMove {
    /// Text of the agent turn this move produces in the transcript.
    pub fn turn_text(&self) -> String {
        match self {
            AgentMove::Search { query } => format!("{SEARCH_PREFIX}{query}"),
            AgentMove::Final { answer } => answer.clone(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("agent transport: {0}")]
    Transport(String),
    #[error("agent did not answer in time")]
    Timeout,
    #[error("agent protocol: {0}")]
    Protocol(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SearchError {
    #[error("search transport: {0}")]
    Transport(String),
    #[error("search protocol: {0}")]
    Protocol(String),
}

/// Anything that picks the next move given the conversation so far. Must be
/// callable from many rollouts at once.
pub trait Agent: Send + Sync {
    fn name(&self) -> &str;
    fn next_move(&self, request: &AgentRequest, timeout: Duration)
        -> Result<AgentMove, AgentError>;
}

pub trait SearchTool: Send + Sync {
    fn search(&self, query: &str, top_k: usize) -> Result<Vec<String>, SearchError>;
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RolloutLimits {
    pub max_steps: usize,
    #[serde(with = "duration_secs")]
    pub per_move_timeout: Duration,
    pub min_searches: usize,
    pub top_k: usize,
}

mod duration_secs {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let secs = f64::deserialize(d)?;
        Duration::try_from_secs_f64(secs).map_err(serde::de::Error::custom)
    }
}

impl Default for RolloutLimits {
    fn default() -> Self {
        Self {
            max_steps: 8,
            per_move_timeout: Duration::from_secs(60),
            min_searches: 1,
            top_k: DEFAULT_TOP_K,
        }
    }
}

impl RolloutLimits {
    pub fn check(&self) -> Result<(), String> {
        if self.max_steps == 0 {
            return Err("max_steps must be at least 1".into());
        }
        if self.min_searches > self.max_steps {
            return Err(format!(
                "min_searches {} exceeds max_steps {}",
                self.min_searches, self.max_steps
            ));
        }
        Ok(())
    }
}

/// Notice sent after a final answer that came before enough searches.
pub fn corrective_notice(min_searches: usize) -> String {
    format!(
        "Your answer was not accepted: use the search tool at least {min_searches} time(s) before giving a final answer."
    )
}

/// Text shown to the agent when the search tool fails.
pub fn search_failure_observation(err: &SearchError) -> String {
    format!("[search unavailable: {err}]")
}

pub fn render_observation(snippets: &[String]) -> String {
    snippets.join("\n\n")
}

fn envelope_value(answer: &str) -> Option<&str> {
    let mut found = None;
    for line in answer.lines() {
        let line = line.trim();
        let Some(head) = line.get(..ENVELOPE.len()) else {
            continue;
        };
        if head.eq_ignore_ascii_case(ENVELOPE) {
            if found.is_some() {
                return None;
            }
            found = Some(line[ENVELOPE.len()..].trim());
        }
    }
    found
}

fn parse_number(s: &str) -> Option<f64> {
    let (digits, scale) = match s.strip_suffix('%') {
        Some(d) => (d.trim_end(), 100.0),
        None => (s, 1.0),
    };
    if digits.is_empty()
        || !digits
            .chars()
            .all(|c| c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E'))
    {
        return None;
    }
    let v: f64 = digits.parse().ok()?;
    v.is_finite().then_some(v / scale)
}

/// Value of the single `FINAL: <number>` line, as a probability. Percentages
/// are divided by 100. No envelope, several envelopes, or a value outside
/// [0, 1] yields `None`.
pub fn parse_final_probability(answer: &str) -> Option<f64> {
    let p = parse_number(envelope_value(answer)?)?;
    (0.0..=1.0).contains(&p).then_some(p)
}

/// Numeric benchmark answer: `FINAL: <number>` with no range restriction.
pub fn parse_final_value(answer: &str) -> Option<f64> {
    let v = envelope_value(answer)?;
    if v.ends_with('%') {
        return None;
    }
    parse_number(v)
}

/// Choice benchmark answer: `FINAL: A, C` over `n_options` options. Returns
/// the selection vector, or `None` when no valid letter is given or any token
/// is not an in-range letter.
pub fn parse_final_choice(answer: &str, n_options: usize) -> Option<Vec<bool>> {
    let v = envelope_value(answer)?;
    let mut selected = vec![false; n_options];
    let mut any = false;
    for token in v
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
    {
        let token = token.trim_end_matches('.');
        let mut chars = token.chars();
        let (Some(c), None) = (chars.next(), chars.next()) else {
            return None;
        };
        let i = crate::prompts::letter_index(c).filter(|&i| i < n_options)?;
        selected[i] = true;
        any = true;
    }
    any.then_some(selected)
}

/// Identity and timing of one rollout.
#[derive(Clone, Debug, PartialEq)]
pub struct RolloutContext {
    pub question_id: QuestionId,
    pub prediction_time: Timestamp,
}

enum Ending {
    Answer(String),
    Invalid,
}

/// Runs one rollout to completion. Never fails: transport errors, timeouts,
/// a repeated early answer, or running past `max_steps` all end the rollout
/// with an empty raw answer and no probability.
pub fn run_rollout(
    ctx: &RolloutContext,
    prompt: &str,
    agent: &dyn Agent,
    search_tool: &dyn SearchTool,
    limits: &RolloutLimits,
    k: u32,
) -> Trajectory {
    let trajectory_id = Trajectory::trajectory_id_for(&ctx.question_id, k);
    let mut request = AgentRequest {
        trajectory_id: trajectory_id.clone(),
        rollout_index: k,
        turns: vec![Turn::new(Role::Environment, prompt)],
    };
    let mut steps: Vec<Step> = Vec::new();
    let mut corrections: Vec<Correction> = Vec::new();

    let ending = loop {
        let started = Instant::now();
        let mv = match agent.next_move(&request, limits.per_move_timeout) {
            Ok(mv) if started.elapsed() <= limits.per_move_timeout => mv,
            Ok(_) | Err(AgentError::Timeout) => {
                tracing::warn!(%trajectory_id, "agent timed out");
                break Ending::Invalid;
            }
            Err(e) => {
                tracing::warn!(%trajectory_id, error = %e, "agent failed");
                break Ending::Invalid;
            }
        };
        match mv {
            AgentMove::Search { query } => {
                if steps.len() >= limits.max_steps {
                    tracing::debug!(%trajectory_id, "step limit exceeded");
                    break Ending::Invalid;
                }
                let observation = match search_tool.search(&query, limits.top_k) {
                    Ok(snippets) => render_observation(&snippets),
                    Err(e) => search_failure_observation(&e),
                };
                request
                    .turns
                    .push(Turn::new(Role::Agent, format!("{SEARCH_PREFIX}{query}")));
                request
                    .turns
                    .push(Turn::new(Role::Tool, observation.clone()));
                steps.push(Step {
                    action: query,
                    observation,
                    issued_at: ctx.prediction_time,
                });
            }
            AgentMove::Final { answer } => {
                if steps.len() >= limits.min_searches {
                    break Ending::Answer(answer);
                }
                if corrections.is_empty() {
                    let notice = corrective_notice(limits.min_searches);
                    request.turns.push(Turn::new(Role::Agent, answer.clone()));
                    request
                        .turns
                        .push(Turn::new(Role::Environment, notice.clone()));
                    corrections.push(Correction {
                        after_step: steps.len(),
                        rejected_answer: answer,
                        notice: Some(notice),
                    });
                } else {
                    corrections.push(Correction {
                        after_step: steps.len(),
                        rejected_answer: answer,
                        notice: None,
                    });
                    break Ending::Invalid;
                }
            }
        }
    };

    let (raw_final_answer, final_probability) = match ending {
        Ending::Answer(a) => {
            let p = parse_final_probability(&a);
            (a, p)
        }
        Ending::Invalid => (String::new(), None),
    };
    Trajectory {
        trajectory_id,
        question_id: ctx.question_id.clone(),
        rollout_index: k,
        prediction_time: ctx.prediction_time,
        prompt: prompt.to_string(),
        steps,
        corrections,
        raw_final_answer,
        final_probability,
        status: TrajectoryStatus::Pending,
        label: None,
        reward: None,
    }
}

/// `k` rollouts of the same question, run concurrently, ordered by index.
pub fn run_group(
    ctx: &RolloutContext,
    prompt: &str,
    agent: &dyn Agent,
    search_tool: &dyn SearchTool,
    limits: &RolloutLimits,
    k: u32,
) -> Vec<Trajectory> {
    (0..k)
        .into_par_iter()
        .map(|i| run_rollout(ctx, prompt, agent, search_tool, limits, i))
        .collect()
}

/// The conversation a trajectory records, rebuilt from its steps and
/// corrections. Every request the agent saw is a prefix of this sequence; the
/// last agent turn is the final answer when there is one.
pub fn transcript(t: &Trajectory) -> Vec<Turn> {
    let mut turns = vec![Turn::new(Role::Environment, t.prompt.clone())];
    let mut corrections = t.corrections.iter().peekable();
    for i in 0..=t.steps.len() {
        while let Some(c) = corrections.next_if(|c| c.after_step == i) {
            turns.push(Turn::new(Role::Agent, c.rejected_answer.clone()));
            if let Some(n) = &c.notice {
                turns.push(Turn::new(Role::Environment, n.clone()));
            }
        }
        if let Some(step) = t.steps.get(i) {
            turns.push(Turn::new(
                Role::Agent,
                format!("{SEARCH_PREFIX}{}", step.action),
            ));
            turns.push(Turn::new(Role::Tool, step.observation.clone()));
        }
    }
    if !t.raw_final_answer.is_empty() {
        turns.push(Turn::new(Role::Agent, t.raw_final_answer.clone()));
    }
    turns
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{TimeZone, Utc};
    use proptest::prelude::*;
    use std::sync::Mutex;

    /// Plays back a fixed move list and records every request.
    struct Script {
        moves: Vec<Result<AgentMove, AgentError>>,
        seen: Mutex<Vec<AgentRequest>>,
    }

    impl Script {
        fn new(moves: Vec<Result<AgentMove, AgentError>>) -> Self {
            Self {
                moves,
                seen: Mutex::new(Vec::new()),
            }
        }
    }

    impl Agent for Script {
        fn name(&self) -> &str {
            "script"
        }

        fn next_move(&self, request: &AgentRequest, _: Duration) -> Result<AgentMove, AgentError> {
            let mut seen = self.seen.lock().unwrap();
            let i = seen.len();
            seen.push(request.clone());
            self.moves
                .get(i)
                .cloned()
                .unwrap_or(Err(AgentError::Protocol("script exhausted".into())))
        }
    }

    struct Echo;

    impl SearchTool for Echo {
        fn search(&self, query: &str, top_k: usize) -> Result<Vec<String>, SearchError> {
            Ok((0..top_k)
                .map(|i| format!("result {i} for {query}"))
                .collect())
        }
    }

    struct Down;

    impl SearchTool for Down {
        fn search(&self, _: &str, _: usize) -> Result<Vec<String>, SearchError> {
            Err(SearchError::Transport("connection refused".into()))
        }
    }

    fn search(q: &str) -> Result<AgentMove, AgentError> {
        Ok(AgentMove::Search { query: q.into() })
    }

    fn fin(a: &str) -> Result<AgentMove, AgentError> {
        Ok(AgentMove::Final { answer: a.into() })
    }

    fn ctx() -> RolloutContext {
        RolloutContext {
            question_id: "q1".into(),
            prediction_time: Utc.with_ymd_and_hms(2026, 4, 17, 18, 0, 0).unwrap(),
        }
    }

    fn run(moves: Vec<Result<AgentMove, AgentError>>) -> (Trajectory, Script) {
        let agent = Script::new(moves);
        let t = run_rollout(
            &ctx(),
            "Question: will it rain?",
            &agent,
            &Echo,
            &RolloutLimits::default(),
            0,
        );
        (t, agent)
    }

    fn check_transcript(t: &Trajectory, agent: &Script) {
        let full = transcript(t);
        for req in agent.seen.lock().unwrap().iter() {
            assert_eq!(req.turns[..], full[..req.turns.len()]);
        }
    }

    #[test]
    fn happy_path() {
        let (t, agent) = run(vec![search("rain"), fin("FINAL: 0.7")]);
        assert_eq!(t.steps.len(), 1);
        assert_eq!(t.final_probability, Some(0.7));
        assert_eq!(t.status, TrajectoryStatus::Pending);
        assert!(t.label.is_none() && t.reward.is_none());
        assert!(crate::domain::validate_trajectory(&t).is_empty());
        check_transcript(&t, &agent);
    }

    #[test]
    fn early_answer_is_corrected_once() {
        let (t, agent) = run(vec![fin("FINAL: 0.9"), search("rain"), fin("FINAL: 0.6")]);
        assert_eq!(t.final_probability, Some(0.6));
        assert_eq!(t.corrections.len(), 1);
        let seen = agent.seen.lock().unwrap().clone();
        assert_eq!(seen[1].turns.last().unwrap().role, Role::Environment);
        check_transcript(&t, &agent);
    }

    #[test]
    fn second_early_answer_is_invalid() {
        let (t, agent) = run(vec![fin("FINAL: 0.9"), fin("FINAL: 0.9")]);
        assert_eq!(t.raw_final_answer, "");
        assert_eq!(t.final_probability, None);
        assert!(crate::domain::validate_trajectory(&t).is_empty());
        check_transcript(&t, &agent);
    }

    #[test]
    fn step_overflow_and_errors_are_invalid() {
        let (t, _) = run((0..9).map(|i| search(&format!("q{i}"))).collect());
        assert_eq!(t.steps.len(), 8);
        assert_eq!(t.final_probability, None);
        let (t, _) = run(vec![search("x"), Err(AgentError::Timeout)]);
        assert_eq!(
            (t.raw_final_answer.as_str(), t.final_probability),
            ("", None)
        );
        let (t, _) = run(vec![Err(AgentError::Transport("reset".into()))]);
        assert_eq!(t.final_probability, None);
    }

    #[test]
    fn unparseable_answer_is_kept_but_invalid() {
        let (t, _) = run(vec![search("x"), fin("I think 0.65")]);
        assert_eq!(t.raw_final_answer, "I think 0.65");
        assert_eq!(t.final_probability, None);
    }

    #[test]
    fn search_failure_becomes_an_observation() {
        let agent = Script::new(vec![search("x"), fin("FINAL: 0.2")]);
        let t = run_rollout(&ctx(), "p", &agent, &Down, &RolloutLimits::default(), 2);
        assert!(t.steps[0].observation.contains("search unavailable"));
        assert_eq!(t.final_probability, Some(0.2));
        assert_eq!(t.trajectory_id.as_str(), "q1-k2");
    }

    #[test]
    fn group_has_k_ordered_rollouts() {
        let agent = ConstantAgent::new(0.5);
        let g = run_group(
            &ctx(),
            "Question: x?",
            &agent,
            &Echo,
            &RolloutLimits::default(),
            4,
        );
        assert_eq!(
            g.iter().map(|t| t.rollout_index).collect::<Vec<_>>(),
            [0, 1, 2, 3]
        );
        assert!(g.iter().all(|t| t.final_probability == Some(0.5)));
        assert_eq!(
            run_group(&ctx(), "x", &agent, &Echo, &RolloutLimits::default(), 1).len(),
            1
        );
    }

    #[test]
    fn move_wire_format() {
        let m: AgentMove =
            serde_json::from_str(r#"{"kind":"search","query":"dallas weather"}"#).unwrap();
        assert_eq!(
            m,
            AgentMove::Search {
                query: "dallas weather".into()
            }
        );
        let m: AgentMove =
            serde_json::from_str(r#"{"kind":"final","answer":"FINAL: 0.4"}"#).unwrap();
        assert_eq!(
            serde_json::to_string(&m).unwrap(),
            r#"{"kind":"final","answer":"FINAL: 0.4"}"#
        );
        assert!(serde_json::from_str::<AgentMove>(r#"{"kind":"search"}"#).is_err());
        assert!(serde_json::from_str::<AgentMove>(r#"{"kind":"browse","url":"x"}"#).is_err());
    }

    #[test]
    fn probability_envelope() {
        assert_eq!(parse_final_probability("FINAL: 0.65"), Some(0.65));
        assert_eq!(parse_final_probability("FINAL: 65%"), Some(0.65));
        assert_eq!(parse_final_probability("reasoning...\nfinal: 1"), Some(1.0));
        assert_eq!(parse_final_probability("I think 0.65"), None);
        assert_eq!(parse_final_probability("FINAL: 1.2"), None);
        assert_eq!(parse_final_probability("FINAL: -0.1"), None);
        assert_eq!(parse_final_probability("FINAL: 0.3\nFINAL: 0.4"), None);
        assert_eq!(parse_final_probability("FINAL: NaN"), None);
        assert_eq!(parse_final_probability("FINAL: about 0.3"), None);
        assert_eq!(parse_final_probability("FINAL:"), None);
    }

    #[test]
    fn choice_and_value_envelopes() {
        assert_eq!(parse_final_choice("FINAL: A", 2), Some(vec![true, false]));
        assert_eq!(
            parse_final_choice("FINAL: A, c", 3),
            Some(vec![true, false, true])
        );
        assert_eq!(parse_final_choice("FINAL: D", 3), None);
        assert_eq!(parse_final_choice("FINAL: maybe", 3), None);
        assert_eq!(parse_final_choice("FINAL: ", 3), None);
        assert_eq!(parse_final_value("FINAL: -3.5"), Some(-3.5));
        assert_eq!(parse_final_value("FINAL: 35%"), None);
    }

    proptest! {
        #[test]
        fn parse_is_pure(s in ".{0,40}") {
            prop_assert_eq!(parse_final_probability(&s), parse_final_probability(&s));
            if let Some(p) = parse_final_probability(&s) {
                prop_assert!((0.0..=1.0).contains(&p));
            }
        }

        #[test]
        fn printed_probabilities_round_trip(p in 0.0f64..=1.0) {
            prop_assert_eq!(parse_final_probability(&format!("FINAL: {p}")), Some(p));
        }

        #[test]
        fn completed_rollouts_searched_enough(moves in proptest::collection::vec(any::<bool>(), 1..12)) {
            let script: Vec<_> = moves.iter().enumerate()
                .map(|(i, &s)| if s { search(&format!("q{i}")) } else { fin("FINAL: 0.5") })
                .collect();
            let (t, agent) = run(script);
            if t.final_probability.is_some() {
                prop_assert!(!t.steps.is_empty());
            }
            prop_assert!(t.steps.len() <= 8);
            prop_assert!(crate::domain::validate_trajectory(&t).is_empty());
            check_transcript(&t, &agent);
        }
    }
}
