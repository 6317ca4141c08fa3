//! The three judge-driven curation stages and their reply guards.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{AsrSegment, CurationError};
use crate::domain::StepRecord;
use crate::judge::{ask_with_retry, strip_code_fence, Judge, JudgeError, JudgeRequest, PromptTemplate};

fn judge_error(stage: PromptTemplate, ids: Vec<u32>, source: JudgeError) -> CurationError {
    CurationError::Judge { stage, ids, source }
}

/// Sends transcript batches through the correction prompt. Replies must keep
/// every id and timestamp; only text may change.
pub fn correct_transcript(
    segments: &[AsrSegment],
    subject: &str,
    judge: &dyn Judge,
    batch_size: usize,
) -> Result<Vec<AsrSegment>, CurationError> {
    let mut out = Vec::with_capacity(segments.len());
    for batch in segments.chunks(batch_size.max(1)) {
        let input = serde_json::to_string_pretty(batch).expect("segments serialize");
        let request = JudgeRequest::new(PromptTemplate::AsrCorrection, subject, input);
        let corrected = ask_with_retry(judge, &request, |reply| check_correction(batch, reply))
            .map_err(|e| judge_error(PromptTemplate::AsrCorrection, batch.iter().map(|s| s.id).collect(), e))?;
        out.extend(corrected);
    }
    Ok(out)
}

fn check_correction(batch: &[AsrSegment], reply: &str) -> Result<Vec<AsrSegment>, String> {
    let body = strip_code_fence(reply);
    let got: Vec<AsrSegment> = match serde_json::from_str::<Vec<AsrSegment>>(body) {
        Ok(v) => v,
        // a single-item batch may come back as a bare object
        Err(e) => match serde_json::from_str::<AsrSegment>(body) {
            Ok(one) => vec![one],
            Err(_) => return Err(format!("reply is not a segment list: {e}")),
        },
    };
    if got.len() != batch.len() {
        return Err(format!("sent {} segments, got {}", batch.len(), got.len()));
    }
    for (sent, back) in batch.iter().zip(&got) {
        if sent.id != back.id || sent.start_time != back.start_time || sent.end_time != back.end_time {
            return Err(format!("segment {} came back with changed id or timestamps", sent.id));
        }
    }
    Ok(got)
}

/// One step of a segmentation plan.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepPlan {
    pub step: u32,
    pub procedure: String,
    #[serde(rename = "ASR_id")]
    pub asr_ids: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segmentation {
    #[serde(default)]
    pub summary: String,
    pub steps: Vec<StepPlan>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PlanViolation {
    #[error("plan has no steps")]
    Empty,
    #[error("step {found} is out of order, expected step {expected}")]
    StepNumber { expected: u32, found: u32 },
    #[error("step {0} has an empty procedure")]
    EmptyProcedure(u32),
    #[error("step {0} has no segment ids")]
    NoIds(u32),
    #[error("step {step}: ids {ids:?} are not consecutive ascending")]
    NotConsecutive { step: u32, ids: Vec<u32> },
    #[error("segment {id} appears in more than one step")]
    Repeated { id: u32 },
    #[error("step {step} starts at segment {found}, expected {expected}")]
    Discontinuous { step: u32, expected: u32, found: u32 },
    #[error("step {step} refers to unknown segment {id}")]
    Dangling { step: u32, id: u32 },
}

/// Accepted plans number steps from 1, use consecutive ascending ids per step,
/// never repeat an id, and cover one contiguous run of known segments.
pub fn validate_plan(plan: &[StepPlan], segments: &[AsrSegment]) -> Result<(), PlanViolation> {
    if plan.is_empty() {
        return Err(PlanViolation::Empty);
    }
    let known: BTreeSet<u32> = segments.iter().map(|s| s.id).collect();
    let mut used = BTreeSet::new();
    let mut next: Option<u32> = None;
    for (i, s) in plan.iter().enumerate() {
        let expected = i as u32 + 1;
        if s.step != expected {
            return Err(PlanViolation::StepNumber { expected, found: s.step });
        }
        if s.procedure.trim().is_empty() {
            return Err(PlanViolation::EmptyProcedure(s.step));
        }
        let (Some(&first), Some(_)) = (s.asr_ids.first(), s.asr_ids.last()) else {
            return Err(PlanViolation::NoIds(s.step));
        };
        for &id in &s.asr_ids {
            if !used.insert(id) {
                return Err(PlanViolation::Repeated { id });
            }
        }
        if s.asr_ids.windows(2).any(|w| w[1] != w[0] + 1) {
            return Err(PlanViolation::NotConsecutive {
                step: s.step,
                ids: s.asr_ids.clone(),
            });
        }
        if let Some(id) = s.asr_ids.iter().find(|id| !known.contains(id)) {
            return Err(PlanViolation::Dangling { step: s.step, id: *id });
        }
        if let Some(expected) = next {
            if first != expected {
                return Err(PlanViolation::Discontinuous {
                    step: s.step,
                    expected,
                    found: first,
                });
            }
        }
        next = s.asr_ids.last().map(|l| l + 1);
    }
    Ok(())
}

/// Asks the judge to group segments into steps and validates the plan.
pub fn segment_steps(segments: &[AsrSegment], subject: &str, judge: &dyn Judge) -> Result<Segmentation, CurationError> {
    if segments.is_empty() {
        return Err(CurationError::EmptyTranscript);
    }
    let input = serde_json::to_string_pretty(segments).expect("segments serialize");
    let request = JudgeRequest::new(PromptTemplate::StepSummarization, subject, input);
    let parse = |reply: &str| {
        let seg: Segmentation =
            serde_json::from_str(strip_code_fence(reply)).map_err(|e| format!("reply is not a step plan: {e}"))?;
        validate_plan(&seg.steps, segments).map_err(|v| v.to_string())?;
        Ok(seg)
    };
    ask_with_retry(judge, &request, parse).map_err(|e| match e {
        JudgeError::Protocol { message, raw, .. } => CurationError::Segmentation { message, plan: raw },
        other => judge_error(
            PromptTemplate::StepSummarization,
            segments.iter().map(|s| s.id).collect(),
            other,
        ),
    })
}

/// The item shape sent to the annotation prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AnnotationItem {
    #[serde(deserialize_with = "super::asr::lenient_id")]
    id: u32,
    #[serde(rename = "startTime")]
    start_time: crate::domain::Timestamp,
    #[serde(rename = "endTime")]
    end_time: crate::domain::Timestamp,
    text: String,
}

fn annotation_item(r: &StepRecord) -> AnnotationItem {
    AnnotationItem {
        id: r.step_index,
        start_time: r.start_time,
        end_time: r.end_time,
        text: r.procedure.clone(),
    }
}

type Additions = Vec<(Option<String>, Option<String>)>;

fn check_annotation(sent: &[AnnotationItem], reply: &str) -> Result<Additions, String> {
    let rows: Vec<BTreeMap<String, Value>> = serde_json::from_str(strip_code_fence(reply))
        .map_err(|e| format!("reply is not a list of objects: {e}"))?;
    if rows.len() != sent.len() {
        return Err(format!("sent {} items, got {}", sent.len(), rows.len()));
    }
    let mut out = Vec::with_capacity(rows.len());
    for (item, mut row) in sent.iter().zip(rows) {
        let mut added = [None, None];
        for (slot, key) in ["principle", "safety"].into_iter().enumerate() {
            match row.remove(key) {
                None | Some(Value::Null) => {}
                Some(Value::String(s)) => added[slot] = Some(s.trim().to_owned()).filter(|s| !s.is_empty()),
                Some(other) => return Err(format!("item {}: {key} is not a string: {other}", item.id)),
            }
        }
        let base: AnnotationItem = serde_json::from_value(Value::Object(row.into_iter().collect()))
            .map_err(|e| format!("item {}: {e}", item.id))?;
        if &base != item {
            return Err(format!("item {} came back with modified existing fields", item.id));
        }
        let [principle, safety] = added;
        out.push((principle, safety));
    }
    Ok(out)
}

/// Runs the annotation prompt over one video's records. Existing fields must
/// come back unchanged; principle and safety are attached only where supplied.
pub fn annotate_principle_safety(
    records: &[StepRecord],
    subject: &str,
    judge: &dyn Judge,
) -> Result<Vec<StepRecord>, CurationError> {
    if records.is_empty() {
        return Ok(Vec::new());
    }
    let items: Vec<AnnotationItem> = records.iter().map(annotation_item).collect();
    let input = serde_json::to_string_pretty(&items).expect("items serialize");
    let request = JudgeRequest::new(PromptTemplate::PrincipleSafetyAnnotation, subject, input);
    let additions = ask_with_retry(judge, &request, |reply| check_annotation(&items, reply)).map_err(|e| {
        judge_error(
            PromptTemplate::PrincipleSafetyAnnotation,
            records.iter().map(|r| r.step_index).collect(),
            e,
        )
    })?;
    Ok(records
        .iter()
        .zip(additions)
        .map(|(r, (principle, safety))| {
            let mut r = r.clone();
            r.principle = principle.or(r.principle);
            r.safety = safety.or(r.safety);
            r
        })
        .collect())
}
