//! Flat cosine-similarity passage index with multimodal query fusion.
//!
//! Passage embeddings are L2-normalized once at build time, so a search is a
//! dot product against every stored vector followed by a top-K selection.

mod fusion;
mod index;
mod ingest;
mod persist;

use std::ops::Deref;

pub use fusion::{fuse_query, FusionConfig, FusionMode};
pub use index::{build_index, KnowledgeIndex, Passage, RawPassage, SearchResult, DEFAULT_K};
pub use ingest::{
    embed_passages, join_embeddings, load_clip_embeddings, read_passage_embeddings, read_passages,
    PassageEmbedding, PassageText,
};
pub use persist::{load_index, read_index, save_index, write_index, FORMAT_VERSION, MAGIC};

use crate::domain::EmbeddingError;

#[derive(Debug, thiserror::Error)]
pub enum IndexError {
    #[error("cannot normalize a zero vector")]
    Degenerate,
    #[error("vector contains a non-finite component")]
    NonFinite,
    #[error("fusion mode {mode}: clip {clip_id} is missing {field}")]
    MissingEmbedding {
        mode: FusionMode,
        clip_id: String,
        field: &'static str,
    },
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("duplicate passage id {0}")]
    DuplicatePassage(String),
    #[error("passage {passage_id}: embedding dimension {found}, expected {expected}")]
    PassageDimension {
        passage_id: String,
        expected: usize,
        found: usize,
    },
    #[error("passage {0}: text is empty")]
    EmptyPassage(String),
    #[error("passage {passage_id}: {source}")]
    PassageVector {
        passage_id: String,
        source: Box<IndexError>,
    },
    #[error("query dimension {found} does not match index dimension {expected}")]
    QueryDimension { expected: usize, found: usize },
    #[error("k must be at least 1")]
    ZeroK,
    #[error("index format: {0}")]
    Format(String),
    #[error("index version mismatch: expected {expected}, found {found}")]
    Version { expected: u32, found: u32 },
    #[error("index file truncated while reading {0}")]
    Truncated(&'static str),
    #[error(transparent)]
    Io(#[from] crate::io::IoError),
}

/// A vector with unit L2 norm. Only obtainable through [`normalize`].
#[derive(Debug, Clone, PartialEq)]
pub struct UnitVector(Vec<f32>);

impl UnitVector {
    pub fn into_inner(self) -> Vec<f32> {
        self.0
    }
}

impl Deref for UnitVector {
    type Target = [f32];

    fn deref(&self) -> &[f32] {
        &self.0
    }
}

pub(crate) fn norm(v: &[f32]) -> f64 {
    v.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt()
}

pub(crate) fn normalize_f64(v: &[f64]) -> Result<Vec<f64>, IndexError> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(IndexError::NonFinite);
    }
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n == 0.0 {
        return Err(IndexError::Degenerate);
    }
    Ok(v.iter().map(|x| x / n).collect())
}

/// Returns `v / ‖v‖₂`.
pub fn normalize(v: &[f32]) -> Result<UnitVector, IndexError> {
    let wide: Vec<f64> = v.iter().map(|&x| f64::from(x)).collect();
    Ok(UnitVector(normalize_f64(&wide)?.into_iter().map(|x| x as f32).collect()))
}
