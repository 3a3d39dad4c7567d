//! HTTP bindings for remote agents and search services.
//!
//! Agent: POST the [`AgentRequest`] as JSON, receive an [`AgentMove`].
//! Search: POST `{query, top_k}`, receive `{snippets: [...]}`. A key, when
//! set, is sent as a bearer token.

use std::time::Duration;

use reqwest::blocking::Client;
use serde::{Deserialize, Serialize};

use super::{Agent, AgentError, AgentMove, AgentRequest, SearchError, SearchTool};

pub const AGENT_URL_VAR: &str = "FW_AGENT_URL";
pub const AGENT_KEY_VAR: &str = "FW_AGENT_KEY";
pub const SEARCH_URL_VAR: &str = "FW_SEARCH_URL";
pub const SEARCH_KEY_VAR: &str = "FW_SEARCH_KEY";

const SEARCH_TIMEOUT: Duration = Duration::from_secs(30);

fn env_endpoint(url_var: &str, key_var: &str) -> Result<(String, Option<String>), String> {
    let url = std::env::var(url_var).map_err(|_| format!("{url_var} is not set"))?;
    Ok((url, std::env::var(key_var).ok().filter(|k| !k.is_empty())))
}

fn post(
    client: &Client,
    url: &str,
    key: Option<&str>,
    timeout: Duration,
) -> reqwest::blocking::RequestBuilder {
    let req = client.post(url).timeout(timeout);
    match key {
        Some(k) => req.bearer_auth(k),
        None => req,
    }
}

pub struct HttpAgent {
    name: String,
    url: String,
    key: Option<String>,
    client: Client,
}

impl HttpAgent {
    pub fn new(name: impl Into<String>, url: impl Into<String>, key: Option<String>) -> Self {
        Self {
            name: name.into(),
            url: url.into(),
            key,
            client: Client::new(),
        }
    }

    pub fn from_env(name: impl Into<String>) -> Result<Self, String> {
        let (url, key) = env_endpoint(AGENT_URL_VAR, AGENT_KEY_VAR)?;
        Ok(Self::new(name, url, key))
    }
}

impl Agent for HttpAgent {
    fn name(&self) -> &str {
        &self.name
    }

    fn next_move(
        &self,
        request: &AgentRequest,
        timeout: Duration,
    ) -> Result<AgentMove, AgentError> {
        let resp = post(&self.client, &self.url, self.key.as_deref(), timeout)
            .json(request)
            .send()
            .map_err(|e| {
                if e.is_timeout() {
                    AgentError::Timeout
                } else {
                    AgentError::Transport(e.to_string())
                }
            })?;
        let status = resp.status();
        if !status.is_success() {
            return Err(AgentError::Transport(format!("HTTP {status}")));
        }
        let text = resp.text().map_err(|e| {
            if e.is_timeout() {
                AgentError::Timeout
            } else {
                AgentError::Transport(e.to_string())
            }
        })?;
        serde_json::from_str(&text).map_err(|e| AgentError::Protocol(e.to_string()))
    }
}

#[derive(Serialize)]
struct SearchRequest<'a> {
    query: &'a str,
    top_k: usize,
}

#[derive(Deserialize)]
struct SearchResponse {
    snippets: Vec<String>,
}

pub struct HttpSearchTool {
    url: String,
    key: Option<String>,
    client: Client,
}

impl HttpSearchTool {
    pub fn new(url: impl Into<String>, key: Option<String>) -> Self {
        Self {
            url: url.into(),
            key,
            client: Client::new(),
        }
    }

    pub fn from_env() -> Result<Self, String> {
        let (url, key) = env_endpoint(SEARCH_URL_VAR, SEARCH_KEY_VAR)?;
        Ok(Self::new(url, key))
    }
}

impl SearchTool for HttpSearchTool {
    fn search(&self, query: &str, top_k: usize) -> Result<Vec<String>, SearchError> {
        let resp = post(&self.client, &self.url, self.key.as_deref(), SEARCH_TIMEOUT)
            .json(&SearchRequest { query, top_k })
            .send()
            .map_err(|e| SearchError::Transport(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(SearchError::Transport(format!("HTTP {status}")));
        }
        let body: SearchResponse = resp
            .json()
            .map_err(|e| SearchError::Protocol(e.to_string()))?;
        let mut snippets = body.snippets;
        snippets.truncate(top_k);
        Ok(snippets)
    }
}
