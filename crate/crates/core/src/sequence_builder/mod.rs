//! Control-token training sequences with per-segment supervision flags.
//!
//! A step without a principle or safety guideline yields one sequence ending in
//! `<NOT RET>`. A knowledge-bearing step yields one sequence per retrieved
//! passage: `… procedure <RET> passage <REL|NOT REL> target`, where the target
//! holds the ground-truth principle and/or safety sections.

mod corpus;
mod relevance;
mod sequence;

pub use corpus::{
    build_corpus, build_step_sequences, Corpus, CorpusCounts, CorpusManifest, SequenceConfig,
};
pub use relevance::{
    label_relevance, lexical_relevance_score, relevance_input, LexicalRelevanceJudge,
    RelevanceLabel, RELEVANCE_THRESHOLD,
};
pub use sequence::{
    supervision_mask, validate_sequence, ControlToken, ControlledSequence, Segment, SegmentKind,
    SequenceKind, ShapeError,
};

use crate::domain::CommentaryError;
use crate::error::ErrorCategory;
use crate::judge::JudgeError;
use crate::knowledge_index::IndexError;

#[derive(Debug, thiserror::Error)]
pub enum SequenceError {
    #[error("clip {clip_id}: retrieval failed: {source}")]
    Retrieval {
        clip_id: String,
        #[source]
        source: IndexError,
    },
    #[error("clip {clip_id}: {source}")]
    Judge {
        clip_id: String,
        #[source]
        source: JudgeError,
    },
    #[error("clip {clip_id}: commentary cannot be rendered: {source}")]
    Commentary {
        clip_id: String,
        #[source]
        source: CommentaryError,
    },
    #[error("clip {0}: relevance labeling needs a principle or safety guideline")]
    NoKnowledge(String),
    #[error("clip {0}: no candidate passages to label")]
    NoPassages(String),
    #[error("missing clip embeddings for: {}", .0.join(", "))]
    MissingEmbeddings(Vec<String>),
    #[error("k must be at least 1")]
    ZeroK,
    #[error("emitted sequence for clip {clip_id} is malformed: {source}")]
    Shape {
        clip_id: String,
        #[source]
        source: ShapeError,
    },
}

impl SequenceError {
    pub fn category(&self) -> ErrorCategory {
        match self {
            SequenceError::Judge { source, .. } => source.category(),
            _ => ErrorCategory::Validation,
        }
    }
}
