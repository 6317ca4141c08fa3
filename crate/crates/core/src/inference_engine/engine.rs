use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::context::{truncate_context, ContextOverflow, TokenBudget};
use super::generator::{Generator, GeneratorError, GeneratorRequest, GeneratorResponse, Phase};
use crate::domain::{parse_commentary, ClipEmbeddingSet, Commentary, CommentaryError, GenerationContext, StepRecord};
use crate::error::ErrorCategory;
use crate::knowledge_index::{fuse_query, FusionConfig, FusionMode, IndexError, KnowledgeIndex, DEFAULT_K};
use crate::sequence_builder::ControlToken;
use crate::text::word_count;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub k: usize,
    pub fusion_mode: FusionMode,
    pub fusion: FusionConfig,
    pub budget: TokenBudget,
    /// Record wall-clock phase timings. Off by default so traces are reproducible.
    pub record_timings: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            k: DEFAULT_K,
            fusion_mode: FusionMode::VT,
            fusion: FusionConfig::default(),
            budget: TokenBudget::default(),
            record_timings: false,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("{clip_id}: generator protocol error in {phase} phase: {message}; raw: {raw:?}")]
    Protocol {
        clip_id: String,
        phase: Phase,
        message: String,
        raw: String,
    },
    #[error("{clip_id}: generated text is not a valid commentary ({source}); raw: {raw:?}")]
    GenerationFormat {
        clip_id: String,
        raw: String,
        #[source]
        source: CommentaryError,
    },
    #[error("{clip_id}: {source}")]
    Generator {
        clip_id: String,
        #[source]
        source: GeneratorError,
    },
    #[error("{clip_id}: retrieval failed: {source}")]
    Retrieval {
        clip_id: String,
        #[source]
        source: IndexError,
    },
    #[error("{clip_id}: {source}")]
    Overflow {
        clip_id: String,
        #[source]
        source: ContextOverflow,
    },
    #[error("{0}: no clip embeddings")]
    MissingEmbeddings(String),
    #[error("{0}: context already holds partial output")]
    PartialNotEmpty(String),
    #[error("k must be at least 1")]
    ZeroK,
}

impl EngineError {
    pub fn category(&self) -> ErrorCategory {
        match self {
            EngineError::Protocol { .. } | EngineError::GenerationFormat { .. } => ErrorCategory::Protocol,
            EngineError::Generator { source, .. } => source.category(),
            _ => ErrorCategory::Validation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateLabel {
    pub passage_id: String,
    pub label: ControlToken,
}

/// Per-phase durations in microseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepTimings {
    pub procedure_us: u64,
    pub decide_us: u64,
    pub retrieve_us: u64,
    pub judge_us: u64,
    pub final_us: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTrace {
    pub clip_id: String,
    pub procedure: String,
    pub decision: ControlToken,
    pub candidates: Vec<CandidateLabel>,
    pub used_passages: Vec<String>,
    pub output: Commentary,
    pub timings: StepTimings,
}

struct Clock {
    on: bool,
    start: Instant,
}

impl Clock {
    fn start(on: bool) -> Self {
        Clock { on, start: Instant::now() }
    }

    fn lap(&mut self) -> u64 {
        if !self.on {
            return 0;
        }
        let us = self.start.elapsed().as_micros() as u64;
        self.start = Instant::now();
        us
    }
}

struct StepRun<'a> {
    ctx: &'a GenerationContext,
    generator: &'a dyn Generator,
    config: &'a EngineConfig,
}

impl StepRun<'_> {
    fn clip(&self) -> String {
        self.ctx.clip_ref.clone()
    }

    fn protocol(&self, phase: Phase, message: impl Into<String>, raw: impl Into<String>) -> EngineError {
        EngineError::Protocol {
            clip_id: self.clip(),
            phase,
            message: message.into(),
            raw: raw.into(),
        }
    }

    fn call(&self, phase: Phase, partial: &[String], passage: Option<&str>) -> Result<GeneratorResponse, EngineError> {
        let mut ctx = self.ctx.clone();
        ctx.partial = partial.to_vec();
        let reserved = passage.map_or(0, |p| self.config.budget.estimate_words(word_count(p)));
        let ctx = truncate_context(&ctx, &self.config.budget, reserved).map_err(|source| EngineError::Overflow {
            clip_id: self.clip(),
            source,
        })?;
        let mut request = GeneratorRequest::from_context(phase, &ctx);
        request.passage = passage.map(str::to_owned);
        self.generator.call(&request).map_err(|source| EngineError::Generator {
            clip_id: self.clip(),
            source,
        })
    }

    fn text(&self, phase: Phase, resp: GeneratorResponse) -> Result<String, EngineError> {
        match resp {
            GeneratorResponse {
                text: Some(t),
                control: None,
                candidates: None,
            } => Ok(t),
            other => Err(self.protocol(phase, "expected a text response", serde_json::to_string(&other).unwrap_or_default())),
        }
    }

    fn control(&self, phase: Phase, resp: GeneratorResponse, allowed: fn(ControlToken) -> bool) -> Result<ControlToken, EngineError> {
        let raw = match resp {
            GeneratorResponse {
                text: None,
                control: Some(c),
                candidates: None,
            } => c,
            other => {
                return Err(self.protocol(phase, "expected a control response", serde_json::to_string(&other).unwrap_or_default()))
            }
        };
        match raw.trim().parse::<ControlToken>() {
            Ok(t) if allowed(t) => Ok(t),
            Ok(t) => Err(self.protocol(phase, format!("{t} is not valid in this phase"), raw)),
            Err(message) => Err(self.protocol(phase, message, raw)),
        }
    }
}

fn format_error(clip_id: &str, raw: String, source: CommentaryError) -> EngineError {
    EngineError::GenerationFormat {
        clip_id: clip_id.to_owned(),
        raw,
        source,
    }
}

/// Runs one step: procedure, retrieval decision, per-passage relevance, then
/// knowledge-grounded completion over the passages kept as relevant.
pub fn run_step(
    ctx: &GenerationContext,
    generator: &dyn Generator,
    index: &KnowledgeIndex,
    clip: &ClipEmbeddingSet,
    config: &EngineConfig,
) -> Result<(Commentary, StepTrace), EngineError> {
    if !ctx.partial.is_empty() {
        return Err(EngineError::PartialNotEmpty(ctx.clip_ref.clone()));
    }
    if config.k == 0 {
        return Err(EngineError::ZeroK);
    }
    let run = StepRun { ctx, generator, config };
    let clip_id = ctx.clip_ref.as_str();
    let mut clock = Clock::start(config.record_timings);
    let mut timings = StepTimings::default();

    let raw = run.text(Phase::Procedure, run.call(Phase::Procedure, &[], None)?)?;
    let parsed = parse_commentary(&raw).map_err(|e| format_error(clip_id, raw.clone(), e))?;
    if parsed.has_knowledge() {
        return Err(run.protocol(Phase::Procedure, "knowledge sections before the retrieval decision", raw));
    }
    let procedure_text = parsed.render().map_err(|e| format_error(clip_id, raw.clone(), e))?;
    timings.procedure_us = clock.lap();

    let mut partial = vec![procedure_text.clone()];
    let decision = run.control(Phase::Decide, run.call(Phase::Decide, &partial, None)?, ControlToken::is_decision)?;
    timings.decide_us = clock.lap();

    let mut trace = StepTrace {
        clip_id: clip_id.to_owned(),
        procedure: parsed.procedure.clone(),
        decision,
        candidates: Vec::new(),
        used_passages: Vec::new(),
        output: parsed.clone(),
        timings,
    };
    if decision == ControlToken::NotRet {
        return Ok((parsed, trace));
    }

    let retrieval = |source| EngineError::Retrieval {
        clip_id: clip_id.to_owned(),
        source,
    };
    let query = fuse_query(clip, config.fusion_mode, &config.fusion).map_err(retrieval)?;
    let hits = index.search(&query, config.k).map_err(retrieval)?;
    trace.timings.retrieve_us = clock.lap();

    partial.push(ControlToken::Ret.as_str().to_owned());
    let mut relevant = Vec::new();
    for hit in &hits {
        let passage = index.passage(&hit.passage_id).expect("search returns indexed ids");
        let text = passage.display_text();
        let label = run.control(Phase::Judge, run.call(Phase::Judge, &partial, Some(&text))?, ControlToken::is_relevance)?;
        trace.candidates.push(CandidateLabel {
            passage_id: hit.passage_id.clone(),
            label,
        });
        if label == ControlToken::Rel {
            trace.used_passages.push(hit.passage_id.clone());
            relevant.push(text);
        }
    }
    trace.timings.judge_us = clock.lap();

    partial.extend(relevant.iter().enumerate().map(|(j, p)| format!("Passage {}: {p}", j + 1)));
    let knowledge = run.text(Phase::Final, run.call(Phase::Final, &partial, None)?)?;
    let combined = format!("{procedure_text} {}", knowledge.trim());
    let output = parse_commentary(combined.trim_end()).map_err(|e| format_error(clip_id, knowledge.clone(), e))?;
    trace.timings.final_us = clock.lap();
    trace.output = output.clone();
    Ok((output, trace))
}

/// One video to run: title plus clip references in step order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoJob {
    pub video_id: String,
    pub title: String,
    pub clips: Vec<String>,
}

/// Groups dataset records into videos, in order of first appearance, with
/// clips sorted by step index.
pub fn videos_from_dataset(dataset: &[StepRecord]) -> Vec<VideoJob> {
    let mut order: Vec<&str> = Vec::new();
    let mut by_video: BTreeMap<&str, Vec<&StepRecord>> = BTreeMap::new();
    for r in dataset {
        let entry = by_video.entry(&r.video_id).or_default();
        if entry.is_empty() {
            order.push(&r.video_id);
        }
        entry.push(r);
    }
    order
        .into_iter()
        .map(|v| {
            let mut steps = by_video.remove(v).unwrap_or_default();
            steps.sort_by_key(|r| r.step_index);
            VideoJob {
                video_id: v.to_owned(),
                title: steps[0].title.trim().to_owned(),
                clips: steps.iter().map(|r| r.clip_id.clone()).collect(),
            }
        })
        .collect()
}

#[derive(Debug, thiserror::Error)]
#[error("video {video_id} aborted at {failed_clip} after {} completed steps: {error}", completed.len())]
pub struct VideoFailure {
    pub video_id: String,
    pub failed_clip: String,
    pub completed: Vec<StepTrace>,
    #[source]
    pub error: EngineError,
}

/// Runs a video's steps in order, feeding each step the commentary generated
/// for the steps before it.
pub fn run_video(
    video: &VideoJob,
    generator: &dyn Generator,
    index: &KnowledgeIndex,
    embeddings: &BTreeMap<String, ClipEmbeddingSet>,
    config: &EngineConfig,
) -> Result<Vec<(Commentary, StepTrace)>, VideoFailure> {
    let mut out: Vec<(Commentary, StepTrace)> = Vec::with_capacity(video.clips.len());
    for clip_id in &video.clips {
        let fail = |error, out: &[(Commentary, StepTrace)]| VideoFailure {
            video_id: video.video_id.clone(),
            failed_clip: clip_id.clone(),
            completed: out.iter().map(|(_, t)| t.clone()).collect(),
            error,
        };
        let Some(clip) = embeddings.get(clip_id) else {
            return Err(fail(EngineError::MissingEmbeddings(clip_id.clone()), &out));
        };
        let ctx = GenerationContext::new(clip_id.clone(), video.title.clone())
            .with_preceding(out.iter().map(|(c, _)| c.clone()).collect());
        match run_step(&ctx, generator, index, clip, config) {
            Ok(step) => out.push(step),
            Err(e) => return Err(fail(e, &out)),
        }
    }
    Ok(out)
}

/// Runs many videos, at most `min(jobs, generator limit)` at once. Results
/// keep the input order.
pub fn run_videos(
    videos: &[VideoJob],
    generator: &dyn Generator,
    index: &KnowledgeIndex,
    embeddings: &BTreeMap<String, ClipEmbeddingSet>,
    config: &EngineConfig,
    jobs: usize,
) -> Vec<Result<Vec<(Commentary, StepTrace)>, VideoFailure>> {
    let workers = jobs.min(generator.concurrency_limit()).max(1);
    let one = |v: &VideoJob| run_video(v, generator, index, embeddings, config);
    if workers == 1 {
        return videos.iter().map(one).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("thread pool");
    pool.install(|| videos.par_iter().map(one).collect())
}
