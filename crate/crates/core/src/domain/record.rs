use std::collections::BTreeMap;
use std::fmt;
use std::io::BufRead;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize};

use super::{Commentary, Timestamp};
use crate::io::{self, IoError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Discipline {
    Science,
    Healthcare,
    Engineering,
}

impl Discipline {
    pub const ALL: [Discipline; 3] = [Discipline::Science, Discipline::Healthcare, Discipline::Engineering];

    pub fn as_str(self) -> &'static str {
        match self {
            Discipline::Science => "science",
            Discipline::Healthcare => "healthcare",
            Discipline::Engineering => "engineering",
        }
    }
}

impl fmt::Display for Discipline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Discipline {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Discipline::ALL
            .into_iter()
            .find(|d| d.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown discipline {s:?} (expected science, healthcare or engineering)"))
    }
}

fn non_blank<'de, D: Deserializer<'de>>(d: D) -> Result<Option<String>, D::Error> {
    let value: Option<String> = Option::deserialize(d)?;
    Ok(value.map(|s| s.trim().to_owned()).filter(|s| !s.is_empty()))
}

/// One experiment step: clip timing plus its ground-truth commentary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepRecord {
    pub video_id: String,
    pub clip_id: String,
    pub step_index: u32,
    pub title: String,
    pub subject: String,
    pub discipline: Discipline,
    pub start_time: Timestamp,
    pub end_time: Timestamp,
    pub procedure: String,
    #[serde(default, deserialize_with = "non_blank", skip_serializing_if = "Option::is_none")]
    pub principle: Option<String>,
    #[serde(default, deserialize_with = "non_blank", skip_serializing_if = "Option::is_none")]
    pub safety: Option<String>,
}

impl StepRecord {
    pub fn commentary(&self) -> Commentary {
        Commentary::from_parts(&self.procedure, self.principle.as_deref(), self.safety.as_deref())
    }

    pub fn has_knowledge(&self) -> bool {
        self.commentary().has_knowledge()
    }

    pub fn duration_millis(&self) -> u64 {
        self.end_time.millis().saturating_sub(self.start_time.millis())
    }

    /// Checks the per-record invariants, returning the offending field name.
    pub fn check(&self) -> Result<(), (&'static str, String)> {
        if self.video_id.trim().is_empty() {
            return Err(("video_id", "must not be empty".into()));
        }
        if self.clip_id.trim().is_empty() {
            return Err(("clip_id", "must not be empty".into()));
        }
        if self.step_index == 0 {
            return Err(("step_index", "must be a positive integer".into()));
        }
        if self.end_time <= self.start_time {
            return Err((
                "end_time",
                format!("end_time {} must be after start_time {}", self.end_time, self.start_time),
            ));
        }
        if self.procedure.trim().is_empty() {
            return Err(("procedure", "must not be empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("line {line}: clip {clip_id}: field {field}: {message}")]
    Invariant {
        line: usize,
        clip_id: String,
        field: &'static str,
        message: String,
    },
    #[error("records span several videos ({0}); expected exactly one")]
    MixedVideos(String),
}

/// Parses and validates line-delimited dataset records.
pub fn read_dataset<R: BufRead>(reader: R) -> Result<Vec<StepRecord>, DatasetError> {
    let rows: Vec<(usize, StepRecord)> = io::parse_jsonl(reader)?;
    let mut clip_lines: BTreeMap<&str, usize> = BTreeMap::new();
    let mut steps: BTreeMap<&str, Vec<(u32, usize, &str)>> = BTreeMap::new();
    for (line, rec) in &rows {
        rec.check().map_err(|(field, message)| DatasetError::Invariant {
            line: *line,
            clip_id: rec.clip_id.clone(),
            field,
            message,
        })?;
        if let Some(first) = clip_lines.insert(&rec.clip_id, *line) {
            return Err(DatasetError::Invariant {
                line: *line,
                clip_id: rec.clip_id.clone(),
                field: "clip_id",
                message: format!("duplicate of line {first}"),
            });
        }
        steps
            .entry(&rec.video_id)
            .or_default()
            .push((rec.step_index, *line, &rec.clip_id));
    }
    for (video, mut list) in steps {
        list.sort();
        for (expected, (index, line, clip)) in (1u32..).zip(&list) {
            if *index != expected {
                return Err(DatasetError::Invariant {
                    line: *line,
                    clip_id: clip.to_string(),
                    field: "step_index",
                    message: format!(
                        "video {video}: step indices must be contiguous from 1, expected {expected} found {index}"
                    ),
                });
            }
        }
    }
    Ok(rows.into_iter().map(|(_, r)| r).collect())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<StepRecord>, DatasetError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| IoError::fs(path, e))?;
    read_dataset(std::io::BufReader::new(file))
}

pub fn write_dataset(records: &[StepRecord]) -> Result<Vec<u8>, DatasetError> {
    Ok(io::to_jsonl(records)?)
}

/// Writes the dataset atomically.
pub fn save_dataset(path: impl AsRef<Path>, records: &[StepRecord]) -> Result<(), DatasetError> {
    io::atomic_write(path, &write_dataset(records)?)?;
    Ok(())
}

/// Structural problems found in one video's records.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct VideoReport {
    /// Step indices missing from the 1..=max range.
    pub gaps: Vec<u32>,
    /// Step indices that appear more than once.
    pub duplicates: Vec<u32>,
    /// Consecutive clips (by step index) whose time ranges overlap: (earlier, later) clip ids.
    pub overlaps: Vec<(String, String)>,
    pub empty_procedures: Vec<String>,
}

impl VideoReport {
    pub fn is_clean(&self) -> bool {
        self.gaps.is_empty()
            && self.duplicates.is_empty()
            && self.overlaps.is_empty()
            && self.empty_procedures.is_empty()
    }
}

pub fn validate_video(records: &[StepRecord]) -> Result<VideoReport, DatasetError> {
    let mut report = VideoReport::default();
    let Some(first) = records.first() else {
        return Ok(report);
    };
    let videos: std::collections::BTreeSet<&str> = records.iter().map(|r| r.video_id.as_str()).collect();
    if videos.len() > 1 {
        return Err(DatasetError::MixedVideos(
            videos.into_iter().collect::<Vec<_>>().join(", "),
        ));
    }
    debug_assert_eq!(videos.into_iter().next(), Some(first.video_id.as_str()));

    let mut ordered: Vec<&StepRecord> = records.iter().collect();
    ordered.sort_by_key(|r| (r.step_index, r.start_time));
    let max = ordered.last().map_or(0, |r| r.step_index);
    let mut seen = vec![0u32; max as usize + 1];
    for r in &ordered {
        seen[r.step_index as usize] += 1;
    }
    for (idx, count) in seen.iter().enumerate().skip(1) {
        match count {
            0 => report.gaps.push(idx as u32),
            1 => {}
            _ => report.duplicates.push(idx as u32),
        }
    }
    for pair in ordered.windows(2) {
        if pair[1].start_time < pair[0].end_time {
            report
                .overlaps
                .push((pair[0].clip_id.clone(), pair[1].clip_id.clone()));
        }
    }
    report.empty_procedures = ordered
        .iter()
        .filter(|r| r.procedure.trim().is_empty())
        .map(|r| r.clip_id.clone())
        .collect();
    Ok(report)
}
