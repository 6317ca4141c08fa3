use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::AsrSegment;
use crate::judge::{Concurrency, Judge, JudgeError, JudgeRequest, PromptTemplate};
use crate::sequence_builder::LexicalRelevanceJudge;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeywordRule {
    pub keyword: String,
    #[serde(default)]
    pub principle: Option<String>,
    #[serde(default)]
    pub safety: Option<String>,
}

/// Rules for the deterministic mock judge.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockRules {
    /// Literal (misheard, corrected) replacements applied to transcript text.
    #[serde(default)]
    pub glossary: Vec<(String, String)>,
    /// Lowercase words that open a new step when they start a segment.
    #[serde(default)]
    pub step_cues: Vec<String>,
    #[serde(default)]
    pub annotations: Vec<KeywordRule>,
}

impl MockRules {
    /// A small chemistry rule set used when no rules file is given.
    pub fn builtin() -> Self {
        let rule = |keyword: &str, principle: Option<&str>, safety: Option<&str>| KeywordRule {
            keyword: keyword.into(),
            principle: principle.map(Into::into),
            safety: safety.map(Into::into),
        };
        MockRules {
            glossary: vec![("tight ration".into(), "titration".into())],
            step_cues: ["first", "next", "then", "now", "finally", "afterwards"]
                .map(String::from)
                .to_vec(),
            annotations: vec![
                rule(
                    "sodium hydroxide",
                    Some("NaOH + HCl → NaCl + H2O"),
                    Some("Sodium hydroxide is corrosive; wear goggles and gloves."),
                ),
                rule("copper sulfate", Some("CuSO4 + 2NaOH → Cu(OH)2 + Na2SO4"), None),
                rule("indicator", Some("Phenolphthalein turns pink above pH 8.2."), None),
                rule(
                    "concentrated",
                    None,
                    Some("Concentrated acid is corrosive; add acid to water slowly."),
                ),
                rule(
                    "heat",
                    None,
                    Some("Heat gently and point the tube away from people."),
                ),
            ],
        }
    }
}

/// A judge that answers every curation prompt with fixed rules and scores
/// relevance lexically.
#[derive(Debug, Clone, Default)]
pub struct RuleBasedJudge {
    rules: MockRules,
}

impl RuleBasedJudge {
    pub fn new(rules: MockRules) -> Self {
        RuleBasedJudge { rules }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, crate::io::IoError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| crate::io::IoError::fs(path, e))?;
        let rules = serde_json::from_str(&text).map_err(crate::io::IoError::Serialize)?;
        Ok(RuleBasedJudge { rules })
    }

    fn correct(&self, input: &str) -> Result<String, String> {
        let mut segments: Vec<AsrSegment> = serde_json::from_str(input).map_err(|e| e.to_string())?;
        for s in &mut segments {
            for (from, to) in &self.rules.glossary {
                s.text = s.text.replace(from.as_str(), to);
            }
        }
        Ok(serde_json::to_string_pretty(&segments).expect("segments serialize"))
    }

    fn cue(&self, text: &str) -> Option<usize> {
        let lower = text.trim_start().to_lowercase();
        let word: String = lower.chars().take_while(|c| c.is_alphanumeric()).collect();
        self.rules
            .step_cues
            .contains(&word)
            .then(|| text.len() - text.trim_start().len() + word.len())
    }

    fn strip_cue(&self, text: &str) -> String {
        let rest = match self.cue(text) {
            Some(end) => text[end..].trim_start_matches([',', ' ']),
            None => text.trim(),
        };
        let mut chars = rest.chars();
        match chars.next() {
            Some(c) => c.to_uppercase().chain(chars).collect(),
            None => String::new(),
        }
    }

    fn segment(&self, input: &str) -> Result<String, String> {
        let segments: Vec<AsrSegment> = serde_json::from_str(input).map_err(|e| e.to_string())?;
        let mut groups: Vec<Vec<&AsrSegment>> = Vec::new();
        for s in &segments {
            match groups.last_mut() {
                Some(g) if self.cue(&s.text).is_none() => g.push(s),
                _ => groups.push(vec![s]),
            }
        }
        let steps: Vec<Value> = groups
            .iter()
            .enumerate()
            .map(|(i, g)| {
                let text: Vec<String> = g.iter().map(|s| s.text.trim().to_owned()).collect();
                serde_json::json!({
                    "step": i + 1,
                    "procedure": self.strip_cue(&text.join(" ")),
                    "ASR_id": g.iter().map(|s| s.id).collect::<Vec<_>>(),
                })
            })
            .collect();
        let summary = format!("{} steps", steps.len());
        Ok(serde_json::json!({ "summary": summary, "steps": steps }).to_string())
    }

    fn annotate(&self, input: &str) -> Result<String, String> {
        let items: Vec<Map<String, Value>> = serde_json::from_str(input).map_err(|e| e.to_string())?;
        let out: Vec<Map<String, Value>> = items
            .into_iter()
            .map(|mut item| {
                let text = item.get("text").and_then(Value::as_str).unwrap_or("").to_lowercase();
                let matching = || self.rules.annotations.iter().filter(|r| text.contains(&r.keyword.to_lowercase()));
                if let Some(s) = matching().find_map(|r| r.safety.clone()) {
                    item.insert("safety".into(), Value::String(s));
                }
                if let Some(p) = matching().find_map(|r| r.principle.clone()) {
                    item.insert("principle".into(), Value::String(p));
                }
                item
            })
            .collect();
        Ok(serde_json::to_string_pretty(&out).expect("items serialize"))
    }
}

impl Judge for RuleBasedJudge {
    fn id(&self) -> String {
        "mock:rules".into()
    }

    fn complete(&self, request: &JudgeRequest) -> Result<String, JudgeError> {
        let reply = match request.template {
            PromptTemplate::AsrCorrection => self.correct(&request.input),
            PromptTemplate::StepSummarization => self.segment(&request.input),
            PromptTemplate::PrincipleSafetyAnnotation => self.annotate(&request.input),
            PromptTemplate::RelevanceScoring => return LexicalRelevanceJudge.complete(request),
        };
        reply.map_err(|message| JudgeError::Protocol {
            template: request.template,
            message: format!("mock judge could not read its input: {message}"),
            raw: String::new(),
        })
    }

    fn concurrency(&self) -> Concurrency {
        Concurrency::Parallel(usize::MAX)
    }
}
