use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// One annotator's 0–2 scores for a sample: fluency, informativeness and
/// scientific accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HumanScore {
    pub sample_id: String,
    pub annotator: String,
    pub flu: f64,
    pub ins: f64,
    pub sci: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanSummary {
    pub samples: usize,
    pub ratings: usize,
    pub flu: MeanSd,
    pub ins: MeanSd,
    pub sci: MeanSd,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HumanScoreError {
    #[error("no human scores")]
    Empty,
    #[error("sample {sample_id}, annotator {annotator}: {criterion} = {value} is outside [0, 2]")]
    Range {
        sample_id: String,
        annotator: String,
        criterion: &'static str,
        value: f64,
    },
}

fn mean_sd(values: &[f64]) -> MeanSd {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    MeanSd { mean, sd: var.sqrt() }
}

/// Averages each criterion over annotators within a sample, then over samples.
/// The standard deviation is the population deviation of the per-sample means.
pub fn aggregate_human(scores: &[HumanScore]) -> Result<HumanSummary, HumanScoreError> {
    if scores.is_empty() {
        return Err(HumanScoreError::Empty);
    }
    let mut per_sample: BTreeMap<&str, Vec<[f64; 3]>> = BTreeMap::new();
    for s in scores {
        for (criterion, value) in [("flu", s.flu), ("ins", s.ins), ("sci", s.sci)] {
            if !(0.0..=2.0).contains(&value) {
                return Err(HumanScoreError::Range {
                    sample_id: s.sample_id.clone(),
                    annotator: s.annotator.clone(),
                    criterion,
                    value,
                });
            }
        }
        per_sample.entry(&s.sample_id).or_default().push([s.flu, s.ins, s.sci]);
    }
    let means: Vec<[f64; 3]> = per_sample
        .values()
        .map(|rows| {
            let n = rows.len() as f64;
            let mut m = [0.0; 3];
            for r in rows {
                for i in 0..3 {
                    m[i] += r[i] / n;
                }
            }
            m
        })
        .collect();
    let column = |i: usize| mean_sd(&means.iter().map(|m| m[i]).collect::<Vec<_>>());
    Ok(HumanSummary {
        samples: means.len(),
        ratings: scores.len(),
        flu: column(0),
        ins: column(1),
        sci: column(2),
    })
}
