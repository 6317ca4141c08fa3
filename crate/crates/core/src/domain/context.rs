use serde::{Deserialize, Serialize};

use super::Commentary;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EmbeddingError {
    #[error("clip {0}: no frame embeddings")]
    NoFrames(String),
    #[error("clip {clip_id}: {field} has dimension {found}, expected {expected}")]
    Dimension {
        clip_id: String,
        field: String,
        expected: usize,
        found: usize,
    },
    #[error("clip {0}: embedding dimension must be at least 1")]
    Empty(String),
}

/// Precomputed embeddings for one clip: sampled frames, the experiment title and
/// optionally the procedure text, all in one shared space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClipEmbeddingSet {
    pub clip_id: String,
    pub frame_embeddings: Vec<Vec<f32>>,
    pub title_embedding: Vec<f32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub procedure_embedding: Option<Vec<f32>>,
}

impl ClipEmbeddingSet {
    pub fn dimension(&self) -> usize {
        self.title_embedding.len()
    }

    pub fn validate(&self) -> Result<(), EmbeddingError> {
        let d = self.dimension();
        if d == 0 {
            return Err(EmbeddingError::Empty(self.clip_id.clone()));
        }
        if self.frame_embeddings.is_empty() {
            return Err(EmbeddingError::NoFrames(self.clip_id.clone()));
        }
        let mismatch = |field: String, found: usize| EmbeddingError::Dimension {
            clip_id: self.clip_id.clone(),
            field,
            expected: d,
            found,
        };
        for (i, frame) in self.frame_embeddings.iter().enumerate() {
            if frame.len() != d {
                return Err(mismatch(format!("frame_embeddings[{i}]"), frame.len()));
            }
        }
        if let Some(p) = &self.procedure_embedding {
            if p.len() != d {
                return Err(mismatch("procedure_embedding".into(), p.len()));
            }
        }
        Ok(())
    }
}

/// Everything the generator sees for the current step.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerationContext {
    /// Opaque clip identifier handed to the generator backend.
    pub clip_ref: String,
    pub title: String,
    /// Commentaries for the earlier steps of the same video, oldest first.
    pub preceding: Vec<Commentary>,
    /// Segments already produced for the current step.
    pub partial: Vec<String>,
}

impl GenerationContext {
    pub fn new(clip_ref: impl Into<String>, title: impl Into<String>) -> Self {
        GenerationContext {
            clip_ref: clip_ref.into(),
            title: title.into(),
            preceding: Vec::new(),
            partial: Vec::new(),
        }
    }

    pub fn with_preceding(mut self, preceding: Vec<Commentary>) -> Self {
        self.preceding = preceding;
        self
    }
}
