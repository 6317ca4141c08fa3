//! Staged inference: each step produces its procedure, decides whether to
//! retrieve, filters retrieved passages one at a time and then completes the
//! commentary from the passages it kept. Videos thread generated commentary
//! from step to step.

mod context;
mod engine;
mod generator;

pub use context::{truncate_context, ContextOverflow, TokenBudget};
pub use engine::{
    run_step, run_video, run_videos, videos_from_dataset, CandidateLabel, EngineConfig, EngineError,
    StepTimings, StepTrace, VideoFailure, VideoJob,
};
pub use generator::{Generator, GeneratorError, GeneratorRequest, GeneratorResponse, Phase, ScriptedGenerator};
