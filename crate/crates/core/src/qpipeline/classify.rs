//! Ordered keyword rules assigning each pair a domain.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::domain::{DomainLabel, QuestionDescriptionPair};

const DEFAULT_RULES: &str = include_str!("../../assets/domain_rules.toml");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeywordRule {
    pub label: DomainLabel,
    pub keywords: Vec<String>,
}

/// A non-empty, ordered rule list.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DomainRules {
    rules: Vec<KeywordRule>,
}

#[derive(Deserialize)]
struct RuleFile {
    rule: Vec<KeywordRule>,
}

impl DomainRules {
    pub fn new(rules: Vec<KeywordRule>) -> Result<Self, PipelineError> {
        if rules.is_empty() {
            return Err(PipelineError::Config("domain rule list is empty".into()));
        }
        if let Some(r) = rules.iter().find(|r| r.label.is_other()) {
            return Err(PipelineError::Config(format!(
                "rule label {} is reserved for unmatched pairs",
                r.label
            )));
        }
        let rules = rules
            .into_iter()
            .map(|r| KeywordRule {
                label: r.label,
                keywords: r.keywords.into_iter().map(|k| k.to_lowercase()).collect(),
            })
            .collect();
        Ok(Self { rules })
    }

    pub fn parse(text: &str) -> Result<Self, PipelineError> {
        let file: RuleFile = toml::from_str(text)
            .map_err(|e| PipelineError::Config(format!("domain rules: {e}")))?;
        Self::new(file.rule)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn taxonomy(&self) -> Vec<DomainLabel> {
        let mut labels: Vec<DomainLabel> = Vec::new();
        for r in &self.rules {
            if !labels.contains(&r.label) {
                labels.push(r.label.clone());
            }
        }
        labels
    }
}

impl Default for DomainRules {
    fn default() -> Self {
        Self::parse(DEFAULT_RULES).expect("bundled rules parse")
    }
}

pub fn classify_domain(pair: &QuestionDescriptionPair, rules: &DomainRules) -> DomainLabel {
    // Padding lets rules anchor on word boundaries with leading/trailing spaces.
    let mut text = format!(" {} ", pair.question.text.to_lowercase());
    if let Some(d) = &pair.description {
        text.push_str(&d.to_lowercase());
        text.push(' ');
    }
    rules
        .rules
        .iter()
        .find(|r| r.keywords.iter().any(|k| text.contains(k.as_str())))
        .map(|r| r.label.clone())
        .unwrap_or_else(DomainLabel::other)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Metadata, Question};
    use chrono::{TimeZone, Utc};

    fn pair(text: &str, description: Option<&str>) -> QuestionDescriptionPair {
        QuestionDescriptionPair::new(
            "p".into(),
            Question {
                id: "q".into(),
                text: text.into(),
                prediction_time: Utc.with_ymd_and_hms(2026, 4, 17, 12, 0, 0).unwrap(),
                resolution_time: Utc.with_ymd_and_hms(2026, 4, 18, 12, 0, 0).unwrap(),
                source: "s".into(),
                source_url: String::new(),
                resolver_key: "synthetic".into(),
                resolver_metadata: Metadata::new(),
                domain: DomainLabel::other(),
            },
            description.map(str::to_string),
        )
    }

    fn label(s: &str) -> DomainLabel {
        DomainLabel::parse(s).unwrap()
    }

    #[test]
    fn first_matching_rule_wins() {
        let rules = DomainRules::default();
        let p = pair(
            "Will the highest temperature in Dallas be between 84-85°F on April 18?",
            None,
        );
        assert_eq!(classify_domain(&p, &rules), label("weather"));
        // Matches both weather ("temperature") and finance ("stock"); weather is earlier.
        let p = pair("Will the stock of the temperature sensor maker rise?", None);
        assert_eq!(classify_domain(&p, &rules), label("weather"));
    }

    #[test]
    fn unmatched_is_other() {
        let p = pair("Will the parliament pass the budget bill?", None);
        assert!(classify_domain(&p, &DomainRules::default()).is_other());
    }

    #[test]
    fn description_counts_and_matching_ignores_case() {
        let rules = DomainRules::new(vec![KeywordRule {
            label: label("energy"),
            keywords: vec!["CRUDE".into()],
        }])
        .unwrap();
        let p = pair("Will the benchmark rise?", Some("Brent crude settlement."));
        assert_eq!(classify_domain(&p, &rules), label("energy"));
    }

    #[test]
    fn empty_or_reserved_rules_rejected() {
        assert!(DomainRules::new(vec![]).is_err());
        assert!(DomainRules::new(vec![KeywordRule {
            label: DomainLabel::other(),
            keywords: vec!["x".into()],
        }])
        .is_err());
        assert_eq!(DomainRules::default().taxonomy().len(), 5);
    }
}
