//! Reading passage text, parallel embedding files and clip embeddings.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{IndexError, RawPassage};
use crate::domain::ClipEmbeddingSet;
use crate::embed::{EmbedError, EmbeddingProvider};
use crate::io;

/// One line of the passages file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PassageText {
    pub passage_id: String,
    pub title: String,
    pub text: String,
}

impl PassageText {
    fn embedding_input(&self) -> String {
        format!("{}\n{}", self.title, self.text)
    }
}

/// One line of the parallel embeddings file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PassageEmbedding {
    pub passage_id: String,
    pub embedding: Vec<f32>,
}

pub fn read_passages(path: impl AsRef<Path>) -> Result<Vec<PassageText>, IndexError> {
    Ok(io::read_jsonl(path)?.into_iter().map(|(_, p)| p).collect())
}

pub fn read_passage_embeddings(path: impl AsRef<Path>) -> Result<Vec<PassageEmbedding>, IndexError> {
    Ok(io::read_jsonl(path)?.into_iter().map(|(_, p)| p).collect())
}

/// Pairs passages with a line-aligned embedding file; ids must agree line by line.
pub fn join_embeddings(
    texts: Vec<PassageText>,
    embeddings: Vec<PassageEmbedding>,
) -> Result<Vec<RawPassage>, IndexError> {
    if texts.len() != embeddings.len() {
        return Err(IndexError::Format(format!(
            "{} passages but {} embeddings",
            texts.len(),
            embeddings.len()
        )));
    }
    texts
        .into_iter()
        .zip(embeddings)
        .enumerate()
        .map(|(i, (t, e))| {
            if t.passage_id != e.passage_id {
                return Err(IndexError::Format(format!(
                    "line {}: passage {} paired with embedding for {}",
                    i + 1,
                    t.passage_id,
                    e.passage_id
                )));
            }
            Ok(RawPassage {
                passage_id: t.passage_id,
                title: t.title,
                text: t.text,
                embedding: e.embedding,
            })
        })
        .collect()
}

/// Embeds passages with `provider`, `batch` texts per call.
pub fn embed_passages(
    texts: Vec<PassageText>,
    provider: &dyn EmbeddingProvider,
    batch: usize,
) -> Result<Vec<RawPassage>, EmbedError> {
    let mut out = Vec::with_capacity(texts.len());
    for chunk in texts.chunks(batch.max(1)) {
        let inputs: Vec<String> = chunk.iter().map(PassageText::embedding_input).collect();
        let vectors = provider.embed(&inputs)?;
        if vectors.len() != chunk.len() {
            return Err(EmbedError::Protocol(format!(
                "asked for {} embeddings, received {}",
                chunk.len(),
                vectors.len()
            )));
        }
        out.extend(chunk.iter().zip(vectors).map(|(t, embedding)| RawPassage {
            passage_id: t.passage_id.clone(),
            title: t.title.clone(),
            text: t.text.clone(),
            embedding,
        }));
    }
    Ok(out)
}

/// Reads line-delimited clip embeddings keyed by clip id.
pub fn load_clip_embeddings(
    path: impl AsRef<Path>,
) -> Result<BTreeMap<String, ClipEmbeddingSet>, IndexError> {
    let rows: Vec<(usize, ClipEmbeddingSet)> = io::read_jsonl(path)?;
    let mut map = BTreeMap::new();
    for (line, clip) in rows {
        clip.validate()?;
        let id = clip.clip_id.clone();
        if map.insert(id.clone(), clip).is_some() {
            return Err(IndexError::Format(format!("line {line}: duplicate clip {id}")));
        }
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::HashEmbedder;

    fn text(id: &str) -> PassageText {
        PassageText {
            passage_id: id.into(),
            title: id.to_uppercase(),
            text: format!("about {id}"),
        }
    }

    #[test]
    fn join_checks_alignment() {
        let e = |id: &str| PassageEmbedding {
            passage_id: id.into(),
            embedding: vec![1.0],
        };
        assert_eq!(join_embeddings(vec![text("a")], vec![e("a")]).unwrap().len(), 1);
        assert!(join_embeddings(vec![text("a")], vec![e("b")]).is_err());
        assert!(join_embeddings(vec![text("a")], vec![]).is_err());
    }

    #[test]
    fn provider_batches_preserve_order() {
        let texts: Vec<_> = ["x", "y", "z"].iter().map(|s| text(s)).collect();
        let raw = embed_passages(texts, &HashEmbedder::new(8), 2).unwrap();
        let ids: Vec<_> = raw.iter().map(|r| r.passage_id.as_str()).collect();
        assert_eq!(ids, vec!["x", "y", "z"]);
        assert_eq!(raw[2].embedding, HashEmbedder::new(8).embed_one("Z\nabout z"));
    }
}
