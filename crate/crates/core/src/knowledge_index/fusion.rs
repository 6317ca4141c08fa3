use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{normalize_f64, IndexError, UnitVector};
use crate::domain::ClipEmbeddingSet;

/// Which inputs contribute to the retrieval query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FusionMode {
    /// Frames only.
    V,
    /// Frames and experiment title.
    #[default]
    VT,
    /// Frames, title and procedure text.
    VTP,
}

impl FusionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            FusionMode::V => "v",
            FusionMode::VT => "vt",
            FusionMode::VTP => "vtp",
        }
    }
}

impl fmt::Display for FusionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FusionMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('+', "").as_str() {
            "v" => Ok(FusionMode::V),
            "vt" => Ok(FusionMode::VT),
            "vtp" => Ok(FusionMode::VTP),
            _ => Err(format!("unknown fusion mode {s:?} (expected v, vt or vtp)")),
        }
    }
}

/// Weights used when combining modalities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    /// Weight on the averaged frame embedding.
    pub visual_weight: f64,
    /// Weight on the text embedding (title, or title+procedure).
    pub text_weight: f64,
    /// Share of the title inside the combined title/procedure vector for `VTP`.
    pub title_share: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            visual_weight: 0.7,
            text_weight: 0.3,
            title_share: 0.5,
        }
    }
}

fn widen(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| f64::from(x)).collect()
}

fn weighted(a: &[f64], wa: f64, b: &[f64], wb: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| wa * x + wb * y).collect()
}

/// Builds the unit-norm retrieval query for one clip.
pub fn fuse_query(
    clip: &ClipEmbeddingSet,
    mode: FusionMode,
    config: &FusionConfig,
) -> Result<UnitVector, IndexError> {
    clip.validate()?;
    let d = clip.dimension();
    let mut mean = vec![0.0f64; d];
    for frame in &clip.frame_embeddings {
        for (m, &x) in mean.iter_mut().zip(frame) {
            *m += f64::from(x);
        }
    }
    let count = clip.frame_embeddings.len() as f64;
    mean.iter_mut().for_each(|m| *m /= count);
    let visual = normalize_f64(&mean)?;

    let fused = match mode {
        FusionMode::V => visual,
        FusionMode::VT => {
            let title = normalize_f64(&widen(&clip.title_embedding))?;
            normalize_f64(&weighted(&visual, config.visual_weight, &title, config.text_weight))?
        }
        FusionMode::VTP => {
            let procedure = clip
                .procedure_embedding
                .as_deref()
                .ok_or_else(|| IndexError::MissingEmbedding {
                    mode,
                    clip_id: clip.clip_id.clone(),
                    field: "procedure_embedding",
                })?;
            let title = normalize_f64(&widen(&clip.title_embedding))?;
            let procedure = normalize_f64(&widen(procedure))?;
            let text = normalize_f64(&weighted(
                &title,
                config.title_share,
                &procedure,
                1.0 - config.title_share,
            ))?;
            normalize_f64(&weighted(&visual, config.visual_weight, &text, config.text_weight))?
        }
    };
    Ok(UnitVector(fused.into_iter().map(|x| x as f32).collect()))
}
