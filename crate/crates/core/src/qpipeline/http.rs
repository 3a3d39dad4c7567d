//! Remote judges. POST `{criterion, question, resolution_time, resolver_key,
//! description}` and receive `{eligible, reason}`.

use std::time::Duration;

use reqwest::blocking::Client;
use serde::Serialize;

use super::filter::{Criterion, Judge, JudgeDecision, JudgeError};
use crate::domain::{Question, Timestamp};

pub const JUDGE_URL_VAR: &str = "FW_JUDGE_URL";
pub const JUDGE_KEY_VAR: &str = "FW_JUDGE_KEY";

const JUDGE_TIMEOUT: Duration = Duration::from_secs(60);

#[derive(Serialize)]
struct JudgeRequest<'a> {
    criterion: Criterion,
    question: &'a str,
    resolution_time: Timestamp,
    resolver_key: &'a str,
    description: Option<&'a str>,
}

pub struct HttpJudge {
    criterion: Criterion,
    url: String,
    key: Option<String>,
    client: Client,
}

impl HttpJudge {
    pub fn new(criterion: Criterion, url: impl Into<String>, key: Option<String>) -> Self {
        Self {
            criterion,
            url: url.into(),
            key,
            client: Client::new(),
        }
    }

    pub fn from_env(criterion: Criterion) -> Result<Self, String> {
        let url =
            std::env::var(JUDGE_URL_VAR).map_err(|_| format!("{JUDGE_URL_VAR} is not set"))?;
        let key = std::env::var(JUDGE_KEY_VAR).ok().filter(|k| !k.is_empty());
        Ok(Self::new(criterion, url, key))
    }
}

impl Judge for HttpJudge {
    fn criterion(&self) -> Criterion {
        self.criterion
    }

    fn judge(
        &self,
        question: &Question,
        description: Option<&str>,
    ) -> Result<JudgeDecision, JudgeError> {
        let mut req = self
            .client
            .post(&self.url)
            .timeout(JUDGE_TIMEOUT)
            .json(&JudgeRequest {
                criterion: self.criterion,
                question: &question.text,
                resolution_time: question.resolution_time,
                resolver_key: &question.resolver_key,
                description,
            });
        if let Some(k) = &self.key {
            req = req.bearer_auth(k);
        }
        let resp = req
            .send()
            .map_err(|e| JudgeError::Transport(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(JudgeError::Transport(format!("HTTP {}", resp.status())));
        }
        resp.json::<JudgeDecision>()
            .map_err(|e| JudgeError::BadResponse(e.to_string()))
    }
}
