use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize};

use super::CurationError;
use crate::domain::Timestamp;
use crate::io;

/// One timestamp-aligned transcript fragment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AsrSegment {
    #[serde(deserialize_with = "lenient_id")]
    pub id: u32,
    #[serde(rename = "startTime")]
    pub start_time: Timestamp,
    #[serde(rename = "endTime")]
    pub end_time: Timestamp,
    pub text: String,
}

struct IdVisitor;

impl Visitor<'_> for IdVisitor {
    type Value = u32;

    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str("a positive integer id")
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> Result<u32, E> {
        u32::try_from(v)
            .ok()
            .filter(|&v| v > 0)
            .ok_or_else(|| E::custom(format!("id {v} is not a positive 32-bit integer")))
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> Result<u32, E> {
        u64::try_from(v)
            .map_err(|_| E::custom(format!("id {v} is negative")))
            .and_then(|v| self.visit_u64(v))
    }

    fn visit_str<E: de::Error>(self, v: &str) -> Result<u32, E> {
        let n: u64 = v
            .trim()
            .parse()
            .map_err(|_| E::custom(format!("id {v:?} is not an integer")))?;
        self.visit_u64(n)
    }
}

/// Accepts ids as integers or numeric strings, as the transcript template
/// shows them quoted.
pub(crate) fn lenient_id<'de, D: Deserializer<'de>>(d: D) -> Result<u32, D::Error> {
    d.deserialize_any(IdVisitor)
}

/// Checks id uniqueness and positive durations.
pub fn validate_segments(segments: &[AsrSegment]) -> Result<(), CurationError> {
    if segments.is_empty() {
        return Err(CurationError::EmptyTranscript);
    }
    let mut ids = BTreeSet::new();
    for s in segments {
        if !ids.insert(s.id) {
            return Err(CurationError::Transcript(format!("duplicate segment id {}", s.id)));
        }
        if s.end_time <= s.start_time {
            return Err(CurationError::Transcript(format!(
                "segment {}: end {} is not after start {}",
                s.id, s.end_time, s.start_time
            )));
        }
    }
    Ok(())
}

pub fn read_asr(path: impl AsRef<Path>) -> Result<Vec<AsrSegment>, CurationError> {
    let segments: Vec<AsrSegment> = io::read_jsonl(path)?.into_iter().map(|(_, s)| s).collect();
    validate_segments(&segments)?;
    Ok(segments)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn template_strings_are_accepted() {
        let s: AsrSegment =
            serde_json::from_str(r#"{"id":"3","startTime":"12.5","endTime":"14","text":"Add water"}"#).unwrap();
        assert_eq!(s.id, 3);
        assert_eq!(s.start_time.millis(), 12_500);
        assert!(serde_json::from_str::<AsrSegment>(r#"{"id":0,"startTime":0,"endTime":1,"text":""}"#).is_err());
    }

    #[test]
    fn invariants() {
        let seg = |id, a, b| AsrSegment {
            id,
            start_time: Timestamp::from_millis(a),
            end_time: Timestamp::from_millis(b),
            text: String::new(),
        };
        assert!(validate_segments(&[seg(1, 0, 5), seg(2, 5, 9)]).is_ok());
        assert!(validate_segments(&[seg(1, 0, 5), seg(1, 5, 9)]).is_err());
        assert!(validate_segments(&[seg(1, 5, 5)]).is_err());
        assert!(validate_segments(&[]).is_err());
    }
}
