use std::collections::VecDeque;
use std::fmt;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::domain::GenerationContext;
use crate::error::ErrorCategory;
use crate::io::{self, IoError};

/// Which stage of the step protocol a request belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    /// Produce the `<Procedure>` section.
    Procedure,
    /// Emit `<RET>` or `<NOT RET>`.
    Decide,
    /// Emit `<REL>` or `<NOT REL>` for one passage.
    Judge,
    /// Produce the principle/safety sections given the relevant passages.
    Final,
    /// Sample whole commentaries (preference-pair construction).
    Sample,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Phase::Procedure => "procedure",
            Phase::Decide => "decide",
            Phase::Judge => "judge",
            Phase::Final => "final",
            Phase::Sample => "sample",
        };
        f.write_str(s)
    }
}

/// Wire request sent to a generator backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorRequest {
    pub phase: Phase,
    pub clip_ref: String,
    pub title: String,
    /// Rendered commentaries of earlier steps, oldest first.
    pub preceding: Vec<String>,
    /// Segments produced so far for this step.
    pub partial: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub passage: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl GeneratorRequest {
    /// Builds a request from a context. Preceding commentaries that fail to
    /// render are passed as their tag-stripped text.
    pub fn from_context(phase: Phase, ctx: &GenerationContext) -> Self {
        GeneratorRequest {
            phase,
            clip_ref: ctx.clip_ref.clone(),
            title: ctx.title.clone(),
            preceding: ctx
                .preceding
                .iter()
                .map(|c| c.render().unwrap_or_else(|_| c.plain_text()))
                .collect(),
            partial: ctx.partial.clone(),
            passage: None,
            top_p: None,
            count: None,
            seed: None,
        }
    }

    /// Flat text rendering of the request, used as the prompt column of
    /// preference pairs.
    pub fn prompt_text(&self) -> String {
        let mut out = format!("Video: {}\nTitle: {}\n", self.clip_ref, self.title);
        if !self.preceding.is_empty() {
            out.push_str("Preceding commentary:\n");
            for p in &self.preceding {
                out.push_str(p);
                out.push('\n');
            }
        }
        for p in &self.partial {
            out.push_str(p);
            out.push('\n');
        }
        if let Some(p) = &self.passage {
            out.push_str(p);
            out.push('\n');
        }
        out
    }
}

/// Wire response. Which field must be set depends on the phase.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorResponse {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidates: Option<Vec<String>>,
}

impl GeneratorResponse {
    pub fn text(t: impl Into<String>) -> Self {
        GeneratorResponse {
            text: Some(t.into()),
            ..Self::default()
        }
    }

    pub fn control(c: impl Into<String>) -> Self {
        GeneratorResponse {
            control: Some(c.into()),
            ..Self::default()
        }
    }

    pub fn candidates<I: IntoIterator<Item = S>, S: Into<String>>(c: I) -> Self {
        GeneratorResponse {
            candidates: Some(c.into_iter().map(Into::into).collect()),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeneratorError {
    #[error("generator unreachable: {0}")]
    Transport(String),
    #[error("generator protocol error: {0}")]
    Protocol(String),
}

impl GeneratorError {
    pub fn category(&self) -> ErrorCategory {
        match self {
            GeneratorError::Transport(_) => ErrorCategory::Transport,
            GeneratorError::Protocol(_) => ErrorCategory::Protocol,
        }
    }
}

pub trait Generator: Send + Sync {
    fn id(&self) -> String;

    fn call(&self, request: &GeneratorRequest) -> Result<GeneratorResponse, GeneratorError>;

    /// Maximum number of requests this backend accepts concurrently.
    fn concurrency_limit(&self) -> usize {
        1
    }
}

/// Replays a line-delimited script of responses in order, recording requests.
#[derive(Debug, Default)]
pub struct ScriptedGenerator {
    label: String,
    script: Mutex<VecDeque<GeneratorResponse>>,
    requests: Mutex<Vec<GeneratorRequest>>,
}

impl ScriptedGenerator {
    pub fn new(responses: impl IntoIterator<Item = GeneratorResponse>) -> Self {
        ScriptedGenerator {
            label: "mock:inline".into(),
            script: Mutex::new(responses.into_iter().collect()),
            requests: Mutex::new(Vec::new()),
        }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, IoError> {
        let path = path.as_ref();
        let rows: Vec<(usize, GeneratorResponse)> = io::read_jsonl(path)?;
        let mut g = ScriptedGenerator::new(rows.into_iter().map(|(_, r)| r));
        g.label = format!("mock:{}", path.display());
        Ok(g)
    }

    pub fn requests(&self) -> Vec<GeneratorRequest> {
        self.requests.lock().unwrap().clone()
    }

    pub fn remaining(&self) -> usize {
        self.script.lock().unwrap().len()
    }
}

impl Generator for ScriptedGenerator {
    fn id(&self) -> String {
        self.label.clone()
    }

    fn call(&self, request: &GeneratorRequest) -> Result<GeneratorResponse, GeneratorError> {
        self.requests.lock().unwrap().push(request.clone());
        self.script.lock().unwrap().pop_front().ok_or_else(|| {
            GeneratorError::Protocol(format!(
                "script exhausted at {} request for {}",
                request.phase, request.clip_ref
            ))
        })
    }
}
