//! Embedding providers. Real encoders live behind a remote endpoint; the
//! feature-hashing embedder gives deterministic vectors for fixtures and tests.

use crate::error::ErrorCategory;
use crate::text::tokenize;

#[derive(Debug, thiserror::Error)]
pub enum EmbedError {
    #[error("embedding endpoint unreachable: {0}")]
    Transport(String),
    #[error("embedding endpoint protocol error: {0}")]
    Protocol(String),
}

impl EmbedError {
    pub fn category(&self) -> ErrorCategory {
        match self {
            EmbedError::Transport(_) => ErrorCategory::Transport,
            EmbedError::Protocol(_) => ErrorCategory::Protocol,
        }
    }
}

pub trait EmbeddingProvider: Send + Sync {
    fn id(&self) -> String;

    /// Embeds each text; the result has one vector per input, in order.
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbedError>;
}

/// Signed feature hashing of lowercase alphanumeric tokens into `dimension` buckets.
#[derive(Debug, Clone, Copy)]
pub struct HashEmbedder {
    pub dimension: usize,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

impl HashEmbedder {
    pub fn new(dimension: usize) -> Self {
        HashEmbedder { dimension }
    }

    pub fn embed_one(&self, text: &str) -> Vec<f32> {
        let mut v = vec![0.0f32; self.dimension];
        if self.dimension == 0 {
            return v;
        }
        for token in tokenize(text) {
            if !token.chars().any(char::is_alphanumeric) {
                continue;
            }
            let h = fnv1a(token.as_bytes());
            let bucket = (h % self.dimension as u64) as usize;
            let sign = if (h >> 63) == 0 { 1.0 } else { -1.0 };
            v[bucket] += sign;
        }
        v
    }
}

impl EmbeddingProvider for HashEmbedder {
    fn id(&self) -> String {
        format!("hash:{}", self.dimension)
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbedError> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}
