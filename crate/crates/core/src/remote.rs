//! JSON-over-HTTP clients for the judge, generator, embedder and external
//! scorer endpoints. Each call is one POST; connection failures and non-2xx
//! statuses are transport errors, unreadable bodies are protocol errors.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::embed::{EmbedError, EmbeddingProvider};
use crate::evaluation::{ExternalScorer, Metric, ScorerError};
use crate::inference_engine::{Generator, GeneratorError, GeneratorRequest, GeneratorResponse};
use crate::judge::{Concurrency, Judge, JudgeError, JudgeRequest};

enum CallError {
    Transport(String),
    Protocol(String),
}

#[derive(Debug, Clone)]
struct Client {
    endpoint: String,
    agent: ureq::Agent,
}

impl Client {
    fn new(endpoint: &str, timeout: Duration) -> Self {
        Client {
            endpoint: endpoint.to_owned(),
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
        }
    }

    fn post<B: Serialize, R: DeserializeOwned>(&self, body: &B) -> Result<R, CallError> {
        let resp = self.agent.post(&self.endpoint).send_json(body).map_err(|e| match e {
            ureq::Error::Status(code, _) => CallError::Transport(format!("{}: HTTP {code}", self.endpoint)),
            ureq::Error::Transport(t) => CallError::Transport(format!("{}: {t}", self.endpoint)),
        })?;
        resp.into_json::<R>()
            .map_err(|e| CallError::Protocol(format!("{}: unreadable response: {e}", self.endpoint)))
    }
}

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(120);

/// Judge endpoint: request is a [`JudgeRequest`], response `{"reply": string}`.
pub struct RemoteJudge {
    client: Client,
    concurrency: Concurrency,
}

#[derive(Deserialize)]
struct JudgeReply {
    reply: String,
}

impl RemoteJudge {
    pub fn new(endpoint: &str, concurrency: Concurrency) -> Self {
        RemoteJudge {
            client: Client::new(endpoint, DEFAULT_TIMEOUT),
            concurrency,
        }
    }
}

impl Judge for RemoteJudge {
    fn id(&self) -> String {
        format!("remote:{}", self.client.endpoint)
    }

    fn complete(&self, request: &JudgeRequest) -> Result<String, JudgeError> {
        match self.client.post::<_, JudgeReply>(request) {
            Ok(r) => Ok(r.reply),
            Err(CallError::Transport(m)) => Err(JudgeError::Transport(m)),
            Err(CallError::Protocol(m)) => Err(JudgeError::Protocol {
                template: request.template,
                message: m,
                raw: String::new(),
            }),
        }
    }

    fn concurrency(&self) -> Concurrency {
        self.concurrency
    }
}

/// Generator endpoint speaking the phase protocol directly.
pub struct RemoteGenerator {
    client: Client,
    limit: usize,
}

impl RemoteGenerator {
    pub fn new(endpoint: &str, limit: usize) -> Self {
        RemoteGenerator {
            client: Client::new(endpoint, DEFAULT_TIMEOUT),
            limit: limit.max(1),
        }
    }
}

impl Generator for RemoteGenerator {
    fn id(&self) -> String {
        format!("remote:{}", self.client.endpoint)
    }

    fn call(&self, request: &GeneratorRequest) -> Result<GeneratorResponse, GeneratorError> {
        self.client.post(request).map_err(|e| match e {
            CallError::Transport(m) => GeneratorError::Transport(m),
            CallError::Protocol(m) => GeneratorError::Protocol(m),
        })
    }

    fn concurrency_limit(&self) -> usize {
        self.limit
    }
}

/// Embedding endpoint: `{"texts": [...]}` → `{"embeddings": [[...], ...]}`.
pub struct RemoteEmbedder {
    client: Client,
}

#[derive(Serialize)]
struct EmbedBody<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct EmbedReply {
    embeddings: Vec<Vec<f32>>,
}

impl RemoteEmbedder {
    pub fn new(endpoint: &str) -> Self {
        RemoteEmbedder {
            client: Client::new(endpoint, DEFAULT_TIMEOUT),
        }
    }
}

impl EmbeddingProvider for RemoteEmbedder {
    fn id(&self) -> String {
        format!("remote:{}", self.client.endpoint)
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbedError> {
        let reply: EmbedReply = self.client.post(&EmbedBody { texts }).map_err(|e| match e {
            CallError::Transport(m) => EmbedError::Transport(m),
            CallError::Protocol(m) => EmbedError::Protocol(m),
        })?;
        if reply.embeddings.len() != texts.len() {
            return Err(EmbedError::Protocol(format!(
                "sent {} texts, got {} embeddings",
                texts.len(),
                reply.embeddings.len()
            )));
        }
        Ok(reply.embeddings)
    }
}

/// Scorer endpoint: `{"metric", "candidates", "references"}` → `{"score": real}`.
pub struct RemoteScorer {
    client: Client,
}

#[derive(Serialize)]
struct ScoreBody<'a> {
    metric: Metric,
    candidates: &'a [String],
    references: &'a [String],
}

#[derive(Deserialize)]
struct ScoreReply {
    score: f64,
}

impl RemoteScorer {
    pub fn new(endpoint: &str) -> Self {
        RemoteScorer {
            client: Client::new(endpoint, DEFAULT_TIMEOUT),
        }
    }
}

impl ExternalScorer for RemoteScorer {
    fn id(&self) -> String {
        format!("remote:{}", self.client.endpoint)
    }

    fn score(&self, metric: Metric, candidates: &[String], references: &[String]) -> Result<f64, ScorerError> {
        let reply: ScoreReply = self
            .client
            .post(&ScoreBody {
                metric,
                candidates,
                references,
            })
            .map_err(|e| match e {
                CallError::Transport(m) => ScorerError::Transport(m),
                CallError::Protocol(m) => ScorerError::Protocol(m),
            })?;
        if !reply.score.is_finite() {
            return Err(ScorerError::Protocol(format!("non-finite score {}", reply.score)));
        }
        Ok(reply.score)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::judge::PromptTemplate;

    #[test]
    fn unreachable_endpoint_is_transport() {
        // port 9 (discard) on localhost is closed in the sandbox
        let judge = RemoteJudge::new("http://127.0.0.1:9/judge", Concurrency::Serial);
        let req = JudgeRequest::new(PromptTemplate::RelevanceScoring, "", "q");
        let err = judge.complete(&req).unwrap_err();
        assert_eq!(err.category(), crate::ErrorCategory::Transport);
    }
}
