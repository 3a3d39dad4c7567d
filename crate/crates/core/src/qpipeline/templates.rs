//! Template-driven construction of question/description pairs.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::domain::{
    CandidateEvent, DomainLabel, PairId, Question, QuestionDescriptionPair, QuestionId, SourceId,
};
use crate::seeding::short_hash;

const DEFAULT_TEMPLATES: &str = include_str!("../../assets/question_templates.toml");

/// Payload keys that steer construction and are not copied to resolver metadata.
const CONTROL_KEYS: [&str; 2] = ["template", "description"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuestionTemplate {
    pub name: String,
    #[serde(default)]
    pub source: Option<SourceId>,
    pub question: String,
    #[serde(default)]
    pub description: Option<String>,
}

impl QuestionTemplate {
    pub fn required_fields(&self) -> Vec<String> {
        let mut fields = placeholders(&self.question);
        if let Some(d) = &self.description {
            for f in placeholders(d) {
                if !fields.contains(&f) {
                    fields.push(f);
                }
            }
        }
        fields
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemplateSet {
    #[serde(rename = "template")]
    pub templates: Vec<QuestionTemplate>,
}

impl TemplateSet {
    pub fn parse(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::Config(format!("templates: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn select(&self, event: &CandidateEvent) -> Option<&QuestionTemplate> {
        match event.payload.get("template") {
            Some(name) => self.templates.iter().find(|t| &t.name == name),
            None => self
                .templates
                .iter()
                .find(|t| t.source.as_ref() == Some(&event.source_id)),
        }
    }
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self::parse(DEFAULT_TEMPLATES).expect("bundled templates parse")
    }
}

/// `{name}` placeholders in order of first appearance.
fn placeholders(pattern: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    let mut rest = pattern;
    while let Some(start) = rest.find('{') {
        let after = &rest[start + 1..];
        match after.find('}') {
            Some(end) => {
                let name = after[..end].to_string();
                if !name.is_empty() && !out.contains(&name) {
                    out.push(name);
                }
                rest = &after[end + 1..];
            }
            None => break,
        }
    }
    out
}

fn fill(pattern: &str, event: &CandidateEvent) -> String {
    let mut text = pattern.to_string();
    for name in placeholders(pattern) {
        if let Some(v) = event.payload.get(&name) {
            text = text.replace(&format!("{{{name}}}"), v);
        }
    }
    text
}

pub fn construct_pair(
    event: &CandidateEvent,
    templates: &TemplateSet,
) -> Result<QuestionDescriptionPair, PipelineError> {
    let template = templates
        .select(event)
        .ok_or_else(|| PipelineError::NoTemplate {
            source_id: event.source_id.clone(),
            requested: event.payload.get("template").cloned(),
        })?;
    if let Some(missing) = template
        .required_fields()
        .into_iter()
        .find(|f| !event.payload.contains_key(f))
    {
        return Err(PipelineError::MissingField {
            template: template.name.clone(),
            field: missing,
        });
    }

    let text = fill(&template.question, event);
    let description = event
        .payload
        .get("description")
        .cloned()
        .or_else(|| template.description.as_deref().map(|d| fill(d, event)));

    let observed = event.observed_at.to_rfc3339();
    let tag = short_hash(&[
        event.source_id.as_str(),
        &event.source_url,
        &event.resolver_key,
        &observed,
        &text,
    ]);
    let mut resolver_metadata = event.payload.clone();
    for key in CONTROL_KEYS {
        resolver_metadata.remove(key);
    }
    let question = Question {
        id: QuestionId(format!("q-{tag}")),
        text,
        prediction_time: event.observed_at,
        resolution_time: event.expected_resolution,
        source: event.source_id.clone(),
        source_url: event.source_url.clone(),
        resolver_key: event.resolver_key.clone(),
        resolver_metadata,
        domain: DomainLabel::other(),
    };
    question.check().map_err(PipelineError::InvalidQuestion)?;
    Ok(QuestionDescriptionPair::new(
        PairId(format!("p-{tag}")),
        question,
        description,
    ))
}
