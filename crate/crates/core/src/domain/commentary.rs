//! The tagged commentary codec.
//!
//! A commentary renders as `<Procedure> text`, optionally followed by
//! ` <Principle> text` and ` <Safety> text`, always in that order. Anything that
//! looks like a tag (`<` + uppercase letter + letters/spaces + `>`) and is not
//! one of the three section tags is rejected, which is how stray control tokens
//! in generated text are caught.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Section {
    Procedure,
    Principle,
    Safety,
}

impl Section {
    pub const ALL: [Section; 3] = [Section::Procedure, Section::Principle, Section::Safety];

    pub fn tag(self) -> &'static str {
        match self {
            Section::Procedure => "<Procedure>",
            Section::Principle => "<Principle>",
            Section::Safety => "<Safety>",
        }
    }

    fn from_tag(tag: &str) -> Option<Section> {
        Section::ALL.into_iter().find(|s| s.tag() == tag)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CommentaryError {
    #[error("commentary procedure is empty")]
    EmptyProcedure,
    #[error("{section:?} text contains tag-like sequence {tag}")]
    EmbeddedTag { section: Section, tag: String },
    #[error("missing <Procedure> section")]
    MissingProcedure,
    #[error("duplicate {0} section")]
    DuplicateTag(&'static str),
    #[error("unknown tag {0}")]
    UnknownTag(String),
    #[error("text before the first section tag: {0:?}")]
    LeadingText(String),
}

/// One step's commentary: a procedure plus optional principle and safety guideline.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Commentary {
    pub procedure: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub principle: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub safety: Option<String>,
}

fn present(text: Option<String>) -> Option<String> {
    text.map(|t| t.trim().to_owned()).filter(|t| !t.is_empty())
}

impl Commentary {
    pub fn new(procedure: impl Into<String>) -> Self {
        Commentary {
            procedure: procedure.into().trim().to_owned(),
            principle: None,
            safety: None,
        }
    }

    pub fn with_principle(mut self, principle: impl Into<String>) -> Self {
        self.principle = present(Some(principle.into()));
        self
    }

    pub fn with_safety(mut self, safety: impl Into<String>) -> Self {
        self.safety = present(Some(safety.into()));
        self
    }

    /// Builds a commentary from optional parts, treating blank strings as absent.
    pub fn from_parts(procedure: &str, principle: Option<&str>, safety: Option<&str>) -> Self {
        Commentary {
            procedure: procedure.trim().to_owned(),
            principle: present(principle.map(str::to_owned)),
            safety: present(safety.map(str::to_owned)),
        }
    }

    pub fn principle(&self) -> Option<&str> {
        self.principle.as_deref().map(str::trim).filter(|s| !s.is_empty())
    }

    pub fn safety(&self) -> Option<&str> {
        self.safety.as_deref().map(str::trim).filter(|s| !s.is_empty())
    }

    /// True when the step carries a principle or a safety guideline.
    pub fn has_knowledge(&self) -> bool {
        self.principle().is_some() || self.safety().is_some()
    }

    pub fn sections(&self) -> impl Iterator<Item = (Section, &str)> {
        [
            (Section::Procedure, Some(self.procedure.trim())),
            (Section::Principle, self.principle()),
            (Section::Safety, self.safety()),
        ]
        .into_iter()
        .filter_map(|(s, t)| t.map(|t| (s, t)))
    }

    /// Tag-stripped text in canonical section order, used for scoring.
    pub fn plain_text(&self) -> String {
        self.sections().map(|(_, t)| t).collect::<Vec<_>>().join(" ")
    }

    /// Renders only the principle and safety sections (empty when absent).
    pub fn render_knowledge(&self) -> Result<String, CommentaryError> {
        let mut parts = Vec::new();
        for (section, text) in self.sections().filter(|(s, _)| *s != Section::Procedure) {
            check_text(section, text)?;
            parts.push(format!("{} {}", section.tag(), text));
        }
        Ok(parts.join(" "))
    }

    pub fn render(&self) -> Result<String, CommentaryError> {
        render_commentary(self)
    }
}

/// Finds the first tag-like span at or after `from`: returns (start, end) byte
/// offsets covering `<...>`.
fn next_tag(text: &str, from: usize) -> Option<(usize, usize)> {
    let bytes = text.as_bytes();
    let mut i = from;
    while i < bytes.len() {
        if bytes[i] == b'<' {
            if let Some(end) = tag_end(bytes, i) {
                return Some((i, end));
            }
        }
        i += 1;
    }
    None
}

fn tag_end(bytes: &[u8], start: usize) -> Option<usize> {
    let first = *bytes.get(start + 1)?;
    if !first.is_ascii_uppercase() {
        return None;
    }
    let mut j = start + 2;
    while j < bytes.len() && j - start <= 32 {
        match bytes[j] {
            b'>' => return Some(j + 1),
            b if b.is_ascii_alphabetic() || b == b' ' || b == b'_' => j += 1,
            _ => return None,
        }
    }
    None
}

fn check_text(section: Section, text: &str) -> Result<(), CommentaryError> {
    match next_tag(text, 0) {
        Some((s, e)) => Err(CommentaryError::EmbeddedTag {
            section,
            tag: text[s..e].to_owned(),
        }),
        None => Ok(()),
    }
}

/// Renders `<Procedure> …[ <Principle> …][ <Safety> …]`.
pub fn render_commentary(c: &Commentary) -> Result<String, CommentaryError> {
    let procedure = c.procedure.trim();
    if procedure.is_empty() {
        return Err(CommentaryError::EmptyProcedure);
    }
    check_text(Section::Procedure, procedure)?;
    let mut out = format!("{} {}", Section::Procedure.tag(), procedure);
    let knowledge = c.render_knowledge()?;
    if !knowledge.is_empty() {
        out.push(' ');
        out.push_str(&knowledge);
    }
    Ok(out)
}

/// Inverse of [`render_commentary`]. Sections may appear in any order; each
/// section's text is trimmed and blank optional sections count as absent.
pub fn parse_commentary(text: &str) -> Result<Commentary, CommentaryError> {
    let mut spans: Vec<(Section, usize, usize)> = Vec::new();
    let mut cursor = 0;
    while let Some((start, end)) = next_tag(text, cursor) {
        let tag = &text[start..end];
        let section =
            Section::from_tag(tag).ok_or_else(|| CommentaryError::UnknownTag(tag.to_owned()))?;
        if spans.iter().any(|(s, _, _)| *s == section) {
            return Err(CommentaryError::DuplicateTag(section.tag()));
        }
        spans.push((section, start, end));
        cursor = end;
    }
    let Some(&(_, first_start, _)) = spans.first() else {
        return Err(CommentaryError::MissingProcedure);
    };
    let leading = text[..first_start].trim();
    if !leading.is_empty() {
        return Err(CommentaryError::LeadingText(leading.to_owned()));
    }

    let mut procedure = None;
    let mut principle = None;
    let mut safety = None;
    for (i, &(section, _, body_start)) in spans.iter().enumerate() {
        let body_end = spans.get(i + 1).map_or(text.len(), |s| s.1);
        let body = text[body_start..body_end].trim().to_owned();
        match section {
            Section::Procedure => procedure = Some(body),
            Section::Principle => principle = Some(body),
            Section::Safety => safety = Some(body),
        }
    }
    let procedure = procedure.ok_or(CommentaryError::MissingProcedure)?;
    if procedure.is_empty() {
        return Err(CommentaryError::EmptyProcedure);
    }
    Ok(Commentary {
        procedure,
        principle: present(principle),
        safety: present(safety),
    })
}
