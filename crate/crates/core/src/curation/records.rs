use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{AsrSegment, CurationError, StepPlan};
use crate::domain::{Discipline, StepRecord, VideoReport, validate_video};
use crate::text::word_count;

/// Per-video metadata copied onto every record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VideoMeta {
    pub video_id: String,
    pub title: String,
    pub subject: String,
    pub discipline: Discipline,
}

pub fn clip_id(video_id: &str, step: u32) -> String {
    format!("{video_id}_{step:03}")
}

/// Turns an accepted plan into records; clip bounds come from the first and
/// last segment of each step.
pub fn clip_records(plans: &[StepPlan], segments: &[AsrSegment], meta: &VideoMeta) -> Result<Vec<StepRecord>, CurationError> {
    let by_id: HashMap<u32, &AsrSegment> = segments.iter().map(|s| (s.id, s)).collect();
    plans
        .iter()
        .enumerate()
        .map(|(i, plan)| {
            let lookup = |id: Option<&u32>| {
                let id = *id.ok_or(CurationError::DanglingId { step: plan.step, id: 0 })?;
                by_id
                    .get(&id)
                    .copied()
                    .ok_or(CurationError::DanglingId { step: plan.step, id })
            };
            let first = lookup(plan.asr_ids.first())?;
            let last = lookup(plan.asr_ids.last())?;
            for id in &plan.asr_ids {
                lookup(Some(id))?;
            }
            let step_index = i as u32 + 1;
            Ok(StepRecord {
                video_id: meta.video_id.clone(),
                clip_id: clip_id(&meta.video_id, step_index),
                step_index,
                title: meta.title.clone(),
                subject: meta.subject.clone(),
                discipline: meta.discipline,
                start_time: first.start_time,
                end_time: last.end_time,
                procedure: plan.procedure.trim().to_owned(),
                principle: None,
                safety: None,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitStats {
    pub clip_count: usize,
    pub video_count: usize,
    /// Seconds.
    pub mean_duration: f64,
    pub steps_per_video: f64,
    /// Whitespace words over all sections.
    pub mean_text_length: f64,
    pub mean_procedure_length: f64,
    /// Averaged over records that have the section.
    pub mean_principle_length: Option<f64>,
    pub mean_safety_length: Option<f64>,
    pub principle_rate: f64,
    pub safety_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    #[serde(flatten)]
    pub overall: SplitStats,
    pub per_discipline: BTreeMap<Discipline, SplitStats>,
}

fn split_stats(records: &[&StepRecord]) -> SplitStats {
    let n = records.len();
    let nf = n as f64;
    let mut videos = std::collections::BTreeSet::new();
    let mut millis: u64 = 0;
    let (mut proc_words, mut prin_words, mut safe_words) = (0usize, 0usize, 0usize);
    let (mut prin_n, mut safe_n) = (0usize, 0usize);
    for r in records {
        videos.insert(r.video_id.as_str());
        millis += r.duration_millis();
        proc_words += word_count(&r.procedure);
        if let Some(p) = &r.principle {
            prin_n += 1;
            prin_words += word_count(p);
        }
        if let Some(s) = &r.safety {
            safe_n += 1;
            safe_words += word_count(s);
        }
    }
    let mean_of = |words: usize, count: usize| (count > 0).then(|| words as f64 / count as f64);
    SplitStats {
        clip_count: n,
        video_count: videos.len(),
        mean_duration: millis as f64 / 1000.0 / nf,
        steps_per_video: nf / videos.len() as f64,
        mean_text_length: (proc_words + prin_words + safe_words) as f64 / nf,
        mean_procedure_length: proc_words as f64 / nf,
        mean_principle_length: mean_of(prin_words, prin_n),
        mean_safety_length: mean_of(safe_words, safe_n),
        principle_rate: prin_n as f64 / nf,
        safety_rate: safe_n as f64 / nf,
    }
}

/// Corpus statistics overall and per discipline. Sums are integers so the
/// result does not depend on record order.
pub fn dataset_stats(records: &[StepRecord]) -> Result<DatasetStats, CurationError> {
    if records.is_empty() {
        return Err(CurationError::EmptyDataset);
    }
    let all: Vec<&StepRecord> = records.iter().collect();
    let mut by_discipline: BTreeMap<Discipline, Vec<&StepRecord>> = BTreeMap::new();
    for r in records {
        by_discipline.entry(r.discipline).or_default().push(r);
    }
    Ok(DatasetStats {
        overall: split_stats(&all),
        per_discipline: by_discipline.into_iter().map(|(d, rs)| (d, split_stats(&rs))).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepeatedSafety {
    pub video_id: String,
    pub safety: String,
    pub steps: usize,
    pub video_steps: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualityReport {
    /// Clips whose time range overlaps the next clip of the same video.
    pub overlaps: Vec<(String, String)>,
    /// Videos with missing or repeated step indices.
    pub step_index_issues: Vec<String>,
    /// Procedures with fewer than [`MIN_PROCEDURE_WORDS`] words.
    pub near_empty_procedures: Vec<String>,
    /// A safety note repeated on more than half of a video's steps.
    pub repeated_safety: Vec<RepeatedSafety>,
}

impl QualityReport {
    pub fn is_clean(&self) -> bool {
        self.overlaps.is_empty()
            && self.step_index_issues.is_empty()
            && self.near_empty_procedures.is_empty()
            && self.repeated_safety.is_empty()
    }
}

pub const MIN_PROCEDURE_WORDS: usize = 3;

pub fn quality_checks(records: &[StepRecord]) -> QualityReport {
    let mut by_video: BTreeMap<&str, Vec<StepRecord>> = BTreeMap::new();
    for r in records {
        by_video.entry(&r.video_id).or_default().push(r.clone());
    }
    let mut report = QualityReport::default();
    for (video, steps) in &by_video {
        let v: VideoReport = validate_video(steps).expect("grouped by video");
        report.overlaps.extend(v.overlaps);
        if !v.gaps.is_empty() || !v.duplicates.is_empty() {
            report.step_index_issues.push(video.to_string());
        }
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for s in steps.iter().filter_map(|r| r.safety.as_deref()) {
            *counts.entry(s.trim().to_lowercase()).or_insert(0) += 1;
        }
        for (safety, n) in counts {
            if n >= 2 && 2 * n > steps.len() {
                report.repeated_safety.push(RepeatedSafety {
                    video_id: video.to_string(),
                    safety,
                    steps: n,
                    video_steps: steps.len(),
                });
            }
        }
    }
    let mut short: Vec<&StepRecord> = records
        .iter()
        .filter(|r| word_count(&r.procedure) < MIN_PROCEDURE_WORDS)
        .collect();
    short.sort_by(|a, b| a.clip_id.cmp(&b.clip_id));
    report.near_empty_procedures = short.into_iter().map(|r| r.clip_id.clone()).collect();
    report
}
