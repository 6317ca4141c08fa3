//! The judge interface: an external language model used for transcript
//! correction, step segmentation, annotation and passage relevance scoring.
//!
//! Every call carries the stage's prompt template (with the `[Subject]` slot
//! filled) and the stage input. Replies that fail validation are retried once;
//! a second invalid reply is a protocol error carrying the raw text.

use std::collections::VecDeque;
use std::fmt;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::ErrorCategory;

const ASR_CORRECTION: &str = include_str!("../prompts/asr_correction.txt");
const STEP_SUMMARIZATION: &str = include_str!("../prompts/step_summarization.txt");
const PRINCIPLE_SAFETY_ANNOTATION: &str = include_str!("../prompts/principle_safety_annotation.txt");
const RELEVANCE_SCORING: &str = include_str!("../prompts/relevance_scoring.txt");

/// Which prompt template a judge call uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptTemplate {
    AsrCorrection,
    StepSummarization,
    PrincipleSafetyAnnotation,
    RelevanceScoring,
}

impl PromptTemplate {
    pub fn id(self) -> &'static str {
        match self {
            PromptTemplate::AsrCorrection => "asr_correction",
            PromptTemplate::StepSummarization => "step_summarization",
            PromptTemplate::PrincipleSafetyAnnotation => "principle_safety_annotation",
            PromptTemplate::RelevanceScoring => "relevance_scoring",
        }
    }

    /// The raw template text, `[Subject]` slots unfilled.
    pub fn text(self) -> &'static str {
        match self {
            PromptTemplate::AsrCorrection => ASR_CORRECTION,
            PromptTemplate::StepSummarization => STEP_SUMMARIZATION,
            PromptTemplate::PrincipleSafetyAnnotation => PRINCIPLE_SAFETY_ANNOTATION,
            PromptTemplate::RelevanceScoring => RELEVANCE_SCORING,
        }
    }

    pub fn render(self, subject: &str) -> String {
        self.text().trim_end().replace("[Subject]", subject)
    }
}

impl fmt::Display for PromptTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

/// One judge call. This is also the JSON body sent to remote judges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeRequest {
    pub template: PromptTemplate,
    pub prompt: String,
    pub input: String,
}

impl JudgeRequest {
    pub fn new(template: PromptTemplate, subject: &str, input: impl Into<String>) -> Self {
        JudgeRequest {
            template,
            prompt: template.render(subject),
            input: input.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum JudgeError {
    #[error("judge unreachable: {0}")]
    Transport(String),
    #[error("judge protocol violation ({template}): {message}; raw reply: {raw:?}")]
    Protocol {
        template: PromptTemplate,
        message: String,
        raw: String,
    },
}

impl JudgeError {
    pub fn category(&self) -> ErrorCategory {
        match self {
            JudgeError::Transport(_) => ErrorCategory::Transport,
            JudgeError::Protocol { .. } => ErrorCategory::Protocol,
        }
    }
}

/// How many calls a judge client accepts at once.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Concurrency {
    /// Calls must be issued one at a time, in a deterministic order.
    Serial,
    /// Up to this many calls may be in flight.
    Parallel(usize),
}

impl Concurrency {
    /// Worker count to use given a requested job count.
    pub fn workers(self, jobs: usize) -> usize {
        match self {
            Concurrency::Serial => 1,
            Concurrency::Parallel(n) => jobs.min(n).max(1),
        }
    }
}

pub trait Judge: Send + Sync {
    fn id(&self) -> String;

    /// Sends one request and returns the raw reply text.
    fn complete(&self, request: &JudgeRequest) -> Result<String, JudgeError>;

    fn concurrency(&self) -> Concurrency {
        Concurrency::Serial
    }
}

/// Calls the judge, validating the reply with `parse`. An invalid reply is
/// retried once.
pub fn ask_with_retry<T>(
    judge: &dyn Judge,
    request: &JudgeRequest,
    mut parse: impl FnMut(&str) -> Result<T, String>,
) -> Result<T, JudgeError> {
    let first = judge.complete(request)?;
    match parse(&first) {
        Ok(v) => return Ok(v),
        Err(message) => tracing::warn!(template = %request.template, %message, "invalid judge reply, retrying"),
    }
    let second = judge.complete(request)?;
    parse(&second).map_err(|message| JudgeError::Protocol {
        template: request.template,
        message,
        raw: second,
    })
}

/// Strips a surrounding markdown code fence, which chat models often add.
pub fn strip_code_fence(reply: &str) -> &str {
    let t = reply.trim();
    let Some(rest) = t.strip_prefix("```") else {
        return t;
    };
    let rest = rest.split_once('\n').map_or("", |(_, body)| body);
    rest.strip_suffix("```").unwrap_or(rest).trim()
}

/// Replays canned replies in order and records every request.
#[derive(Debug, Default)]
pub struct ScriptedJudge {
    replies: Mutex<VecDeque<String>>,
    requests: Mutex<Vec<JudgeRequest>>,
}

impl ScriptedJudge {
    pub fn new<I, S>(replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        ScriptedJudge {
            replies: Mutex::new(replies.into_iter().map(Into::into).collect()),
            requests: Mutex::new(Vec::new()),
        }
    }

    pub fn requests(&self) -> Vec<JudgeRequest> {
        self.requests.lock().unwrap().clone()
    }

    pub fn remaining(&self) -> usize {
        self.replies.lock().unwrap().len()
    }
}

impl Judge for ScriptedJudge {
    fn id(&self) -> String {
        "mock:scripted".into()
    }

    fn complete(&self, request: &JudgeRequest) -> Result<String, JudgeError> {
        self.requests.lock().unwrap().push(request.clone());
        self.replies
            .lock()
            .unwrap()
            .pop_front()
            .ok_or_else(|| JudgeError::Transport("scripted judge has no replies left".into()))
    }
}

/// A judge backed by a closure; handy for rule-based mocks.
pub struct FnJudge<F> {
    id: String,
    f: F,
}

impl<F> FnJudge<F>
where
    F: Fn(&JudgeRequest) -> Result<String, JudgeError> + Send + Sync,
{
    pub fn new(id: impl Into<String>, f: F) -> Self {
        FnJudge { id: id.into(), f }
    }
}

impl<F> Judge for FnJudge<F>
where
    F: Fn(&JudgeRequest) -> Result<String, JudgeError> + Send + Sync,
{
    fn id(&self) -> String {
        self.id.clone()
    }

    fn complete(&self, request: &JudgeRequest) -> Result<String, JudgeError> {
        (self.f)(request)
    }

    fn concurrency(&self) -> Concurrency {
        Concurrency::Parallel(usize::MAX)
    }
}
