//! Turns timestamp-aligned transcripts into step records: transcript
//! correction, step segmentation, clip assembly and principle/safety
//! annotation, each through a judge. Also dataset statistics and quality
//! flags.

mod asr;
mod mock;
mod records;
mod stages;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use asr::{read_asr, validate_segments, AsrSegment};
pub use mock::{KeywordRule, MockRules, RuleBasedJudge};
pub use records::{
    clip_id, clip_records, dataset_stats, quality_checks, DatasetStats, QualityReport, RepeatedSafety,
    SplitStats, VideoMeta, MIN_PROCEDURE_WORDS,
};
pub use stages::{
    annotate_principle_safety, correct_transcript, segment_steps, validate_plan, PlanViolation, Segmentation,
    StepPlan,
};

use crate::domain::StepRecord;
use crate::error::ErrorCategory;
use crate::io::IoError;
use crate::judge::{Judge, JudgeError, PromptTemplate};

#[derive(Debug, thiserror::Error)]
pub enum CurationError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("transcript has no segments")]
    EmptyTranscript,
    #[error("invalid transcript: {0}")]
    Transcript(String),
    #[error("{stage} failed for segments {ids:?}: {source}")]
    Judge {
        stage: PromptTemplate,
        ids: Vec<u32>,
        #[source]
        source: JudgeError,
    },
    #[error("segmentation rejected: {message}; plan: {plan}")]
    Segmentation { message: String, plan: String },
    #[error("step {step} refers to unknown segment {id}")]
    DanglingId { step: u32, id: u32 },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("video {video_id}: {source}")]
    Video {
        video_id: String,
        #[source]
        source: Box<CurationError>,
    },
}

impl CurationError {
    pub fn category(&self) -> ErrorCategory {
        match self {
            CurationError::Judge { source, .. } => source.category(),
            CurationError::Segmentation { .. } => ErrorCategory::Protocol,
            CurationError::Video { source, .. } => source.category(),
            _ => ErrorCategory::Validation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CuratedVideo {
    pub video_id: String,
    pub summary: String,
    pub corrected: Vec<AsrSegment>,
    pub records: Vec<StepRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurationConfig {
    /// Segments per correction call.
    pub batch_size: usize,
}

impl Default for CurationConfig {
    fn default() -> Self {
        CurationConfig { batch_size: 20 }
    }
}

/// Correct, segment, assemble and annotate one video.
pub fn curate_video(
    meta: &VideoMeta,
    segments: &[AsrSegment],
    judge: &dyn Judge,
    config: &CurationConfig,
) -> Result<CuratedVideo, CurationError> {
    let run = || {
        validate_segments(segments)?;
        let corrected = correct_transcript(segments, &meta.subject, judge, config.batch_size)?;
        let plan = segment_steps(&corrected, &meta.subject, judge)?;
        let records = clip_records(&plan.steps, &corrected, meta)?;
        let records = annotate_principle_safety(&records, &meta.subject, judge)?;
        Ok(CuratedVideo {
            video_id: meta.video_id.clone(),
            summary: plan.summary,
            corrected,
            records,
        })
    };
    run().map_err(|source| CurationError::Video {
        video_id: meta.video_id.clone(),
        source: Box::new(source),
    })
}

/// Curates videos independently, up to `jobs` at once; output keeps input order.
pub fn curate_all(
    videos: &[(VideoMeta, Vec<AsrSegment>)],
    judge: &dyn Judge,
    config: &CurationConfig,
    jobs: usize,
) -> Result<Vec<CuratedVideo>, CurationError> {
    let workers = judge.concurrency().workers(jobs);
    let one = |(meta, segs): &(VideoMeta, Vec<AsrSegment>)| curate_video(meta, segs, judge, config);
    if workers <= 1 {
        return videos.iter().map(one).collect();
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("thread pool")
        .install(|| videos.par_iter().map(one).collect())
}
