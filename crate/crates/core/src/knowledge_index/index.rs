use std::cmp::Ordering;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{normalize, IndexError, UnitVector};

/// Number of passages retrieved per step unless configured otherwise.
pub const DEFAULT_K: usize = 5;

/// A passage before normalization, as ingested from the passages file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawPassage {
    pub passage_id: String,
    pub title: String,
    pub text: String,
    pub embedding: Vec<f32>,
}

/// A stored knowledge-base entry; `embedding` has unit norm.
#[derive(Debug, Clone, PartialEq)]
pub struct Passage {
    pub passage_id: String,
    pub title: String,
    pub text: String,
    pub embedding: Vec<f32>,
}

impl Passage {
    /// The text shown to judges and generators.
    pub fn display_text(&self) -> String {
        if self.title.trim().is_empty() {
            self.text.clone()
        } else {
            format!("{}\n{}", self.title, self.text)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub passage_id: String,
    pub score: f64,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeIndex {
    dimension: usize,
    passages: Vec<Passage>,
    by_id: HashMap<String, usize>,
}

impl KnowledgeIndex {
    pub(crate) fn from_normalized(dimension: usize, passages: Vec<Passage>) -> Result<Self, IndexError> {
        let mut by_id = HashMap::with_capacity(passages.len());
        for (pos, p) in passages.iter().enumerate() {
            if p.embedding.len() != dimension {
                return Err(IndexError::PassageDimension {
                    passage_id: p.passage_id.clone(),
                    expected: dimension,
                    found: p.embedding.len(),
                });
            }
            if by_id.insert(p.passage_id.clone(), pos).is_some() {
                return Err(IndexError::DuplicatePassage(p.passage_id.clone()));
            }
        }
        Ok(KnowledgeIndex {
            dimension,
            passages,
            by_id,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.passages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.passages.is_empty()
    }

    pub fn passages(&self) -> &[Passage] {
        &self.passages
    }

    pub fn passage(&self, id: &str) -> Option<&Passage> {
        self.by_id.get(id).map(|&i| &self.passages[i])
    }

    /// Exact top-`k` by cosine similarity. Ties are broken by ascending passage id.
    pub fn search(&self, query: &UnitVector, k: usize) -> Result<Vec<SearchResult>, IndexError> {
        if k == 0 {
            return Err(IndexError::ZeroK);
        }
        if query.len() != self.dimension && !self.passages.is_empty() {
            return Err(IndexError::QueryDimension {
                expected: self.dimension,
                found: query.len(),
            });
        }
        let mut scored: Vec<(f64, &Passage)> = self
            .passages
            .iter()
            .map(|p| (dot(&p.embedding, query).clamp(-1.0, 1.0), p))
            .collect();
        let order = |a: &(f64, &Passage), b: &(f64, &Passage)| {
            b.0.partial_cmp(&a.0)
                .unwrap_or(Ordering::Equal)
                .then_with(|| a.1.passage_id.cmp(&b.1.passage_id))
        };
        let k = k.min(scored.len());
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, order);
            scored.truncate(k);
        }
        scored.sort_by(order);
        Ok(scored
            .into_iter()
            .enumerate()
            .map(|(i, (score, p))| SearchResult {
                passage_id: p.passage_id.clone(),
                score,
                rank: i + 1,
            })
            .collect())
    }
}

fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| f64::from(x) * f64::from(y)).sum()
}

/// Normalizes every embedding and checks ids and dimensions. Insertion order is kept.
pub fn build_index(passages: Vec<RawPassage>) -> Result<KnowledgeIndex, IndexError> {
    let dimension = passages.first().map_or(0, |p| p.embedding.len());
    let mut stored = Vec::with_capacity(passages.len());
    for raw in passages {
        if raw.embedding.len() != dimension {
            return Err(IndexError::PassageDimension {
                passage_id: raw.passage_id,
                expected: dimension,
                found: raw.embedding.len(),
            });
        }
        if raw.text.trim().is_empty() {
            return Err(IndexError::EmptyPassage(raw.passage_id));
        }
        let embedding = normalize(&raw.embedding)
            .map_err(|e| IndexError::PassageVector {
                passage_id: raw.passage_id.clone(),
                source: Box::new(e),
            })?
            .into_inner();
        stored.push(Passage {
            passage_id: raw.passage_id,
            title: raw.title,
            text: raw.text,
            embedding,
        });
    }
    KnowledgeIndex::from_normalized(dimension, stored)
}
