use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ControlToken {
    Ret,
    NotRet,
    Rel,
    NotRel,
}

impl ControlToken {
    pub const ALL: [ControlToken; 4] = [
        ControlToken::Ret,
        ControlToken::NotRet,
        ControlToken::Rel,
        ControlToken::NotRel,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ControlToken::Ret => "<RET>",
            ControlToken::NotRet => "<NOT RET>",
            ControlToken::Rel => "<REL>",
            ControlToken::NotRel => "<NOT REL>",
        }
    }

    pub fn is_decision(self) -> bool {
        matches!(self, ControlToken::Ret | ControlToken::NotRet)
    }

    pub fn is_relevance(self) -> bool {
        !self.is_decision()
    }

    pub fn relevance(relevant: bool) -> Self {
        if relevant {
            ControlToken::Rel
        } else {
            ControlToken::NotRel
        }
    }
}

impl fmt::Display for ControlToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ControlToken {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ControlToken::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown control token {s:?}"))
    }
}

impl Serialize for ControlToken {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for ControlToken {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentKind {
    VideoRef,
    Text,
    Control,
    Passage,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub kind: SegmentKind,
    pub value: String,
    pub supervised: bool,
}

impl Segment {
    pub fn video(clip_id: &str) -> Self {
        Segment {
            kind: SegmentKind::VideoRef,
            value: clip_id.to_owned(),
            supervised: false,
        }
    }

    /// Conditioning text (title, preceding commentary).
    pub fn context(text: impl Into<String>) -> Self {
        Segment {
            kind: SegmentKind::Text,
            value: text.into(),
            supervised: false,
        }
    }

    /// Text the model is trained to produce.
    pub fn target(text: impl Into<String>) -> Self {
        Segment {
            kind: SegmentKind::Text,
            value: text.into(),
            supervised: true,
        }
    }

    pub fn control(token: ControlToken) -> Self {
        Segment {
            kind: SegmentKind::Control,
            value: token.as_str().to_owned(),
            supervised: true,
        }
    }

    pub fn passage(text: impl Into<String>) -> Self {
        Segment {
            kind: SegmentKind::Passage,
            value: text.into(),
            supervised: false,
        }
    }

    fn control_token(&self) -> Option<ControlToken> {
        (self.kind == SegmentKind::Control)
            .then(|| self.value.parse().ok())
            .flatten()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlledSequence {
    pub clip_id: String,
    pub segments: Vec<Segment>,
}

/// The three shapes a valid training sequence can take.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SequenceKind {
    NotRet,
    RetRel,
    RetNotRel,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ShapeError {
    #[error("segment {index}: expected {expected}")]
    Unexpected { index: usize, expected: &'static str },
    #[error("segment {index}: wrong supervision flag for {kind:?}")]
    Supervision { index: usize, kind: SegmentKind },
    #[error("segment {index}: {value:?} is not a control token")]
    BadControl { index: usize, value: String },
    #[error("sequence continues after <NOT RET>")]
    TrailingAfterNotRet,
    #[error("sequence has {0} segments after the last relevance token, expected one target")]
    Target(usize),
}

/// Checks segment order and supervision flags; returns the sequence kind.
pub fn validate_sequence(seq: &ControlledSequence) -> Result<SequenceKind, ShapeError> {
    let segs = &seq.segments;
    let need = |index: usize, ok: bool, expected: &'static str| {
        if ok {
            Ok(())
        } else {
            Err(ShapeError::Unexpected { index, expected })
        }
    };
    for (index, s) in segs.iter().enumerate() {
        let flag_ok = match s.kind {
            SegmentKind::VideoRef | SegmentKind::Passage => !s.supervised,
            SegmentKind::Control => s.supervised,
            SegmentKind::Text => true,
        };
        if !flag_ok {
            return Err(ShapeError::Supervision { index, kind: s.kind });
        }
        if s.kind == SegmentKind::Control && s.control_token().is_none() {
            return Err(ShapeError::BadControl {
                index,
                value: s.value.clone(),
            });
        }
    }
    let kind_at = |i: usize| segs.get(i).map(|s| (s.kind, s.supervised));
    need(0, kind_at(0) == Some((SegmentKind::VideoRef, false)) && segs[0].value == seq.clip_id, "video reference for this clip")?;
    need(1, kind_at(1) == Some((SegmentKind::Text, false)), "unsupervised title")?;
    need(2, kind_at(2) == Some((SegmentKind::Text, false)), "unsupervised preceding commentary")?;
    need(
        3,
        kind_at(3) == Some((SegmentKind::Text, true)) && !segs[3].value.trim().is_empty(),
        "supervised procedure",
    )?;
    let decision = segs.get(4).and_then(Segment::control_token);
    match decision {
        Some(ControlToken::NotRet) => {
            if segs.len() > 5 {
                return Err(ShapeError::TrailingAfterNotRet);
            }
            Ok(SequenceKind::NotRet)
        }
        Some(ControlToken::Ret) => {
            let mut i = 5;
            let mut labels = Vec::new();
            while segs.get(i).map(|s| s.kind) == Some(SegmentKind::Passage) {
                match segs.get(i + 1).and_then(Segment::control_token) {
                    Some(t) if t.is_relevance() => labels.push(t),
                    _ => return Err(ShapeError::Unexpected { index: i + 1, expected: "relevance token after passage" }),
                }
                i += 2;
            }
            need(i, !labels.is_empty(), "passage after <RET>")?;
            let rest = &segs[i..];
            if rest.len() != 1 {
                return Err(ShapeError::Target(rest.len()));
            }
            need(i, rest[0].kind == SegmentKind::Text && rest[0].supervised, "supervised target text")?;
            if labels.contains(&ControlToken::Rel) {
                Ok(SequenceKind::RetRel)
            } else {
                Ok(SequenceKind::RetNotRel)
            }
        }
        _ => Err(ShapeError::Unexpected {
            index: 4,
            expected: "<RET> or <NOT RET>",
        }),
    }
}

/// Per-segment loss mask: true for procedure, control tokens and target sections.
pub fn supervision_mask(seq: &ControlledSequence) -> Vec<bool> {
    seq.segments.iter().map(|s| s.supervised).collect()
}
