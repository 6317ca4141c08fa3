use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::SequenceError;
use crate::domain::StepRecord;
use crate::judge::{ask_with_retry, strip_code_fence, Judge, JudgeError, JudgeRequest, PromptTemplate};
use crate::knowledge_index::Passage;
use crate::text::tokenize;

/// Judge scores at or above this value mark a passage relevant.
pub const RELEVANCE_THRESHOLD: u8 = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelevanceLabel {
    pub passage_id: String,
    pub score: u8,
    pub relevant: bool,
}

impl RelevanceLabel {
    pub fn from_score(passage_id: impl Into<String>, score: u8) -> Self {
        RelevanceLabel {
            passage_id: passage_id.into(),
            score,
            relevant: score >= RELEVANCE_THRESHOLD,
        }
    }
}

/// The judge input for one (step, passage) pair: the experiment title with the
/// ground-truth commentary as query, the passage as document.
pub fn relevance_input(step: &StepRecord, passage: &Passage) -> Result<String, SequenceError> {
    let commentary = step
        .commentary()
        .render()
        .map_err(|source| SequenceError::Commentary {
            clip_id: step.clip_id.clone(),
            source,
        })?;
    Ok(format!(
        "Query: {}. {}\nDocument: {}",
        step.title.trim(),
        commentary,
        passage.display_text()
    ))
}

fn parse_score(reply: &str) -> Result<u8, String> {
    let text = strip_code_fence(reply);
    let score: u8 = text
        .parse()
        .map_err(|_| format!("expected an integer score between 1 and 5, got {text:?}"))?;
    if !(1..=5).contains(&score) {
        return Err(format!("score {score} is outside 1..=5"));
    }
    Ok(score)
}

/// Scores every passage against the step's ground truth. Labels keep the
/// passage order.
pub fn label_relevance(
    step: &StepRecord,
    passages: &[&Passage],
    judge: &dyn Judge,
) -> Result<Vec<RelevanceLabel>, SequenceError> {
    if !step.has_knowledge() {
        return Err(SequenceError::NoKnowledge(step.clip_id.clone()));
    }
    if passages.is_empty() {
        return Err(SequenceError::NoPassages(step.clip_id.clone()));
    }
    passages
        .iter()
        .map(|p| {
            let request = JudgeRequest::new(
                PromptTemplate::RelevanceScoring,
                &step.subject,
                relevance_input(step, p)?,
            );
            let score = ask_with_retry(judge, &request, parse_score).map_err(|source| SequenceError::Judge {
                clip_id: step.clip_id.clone(),
                source,
            })?;
            Ok(RelevanceLabel::from_score(p.passage_id.clone(), score))
        })
        .collect()
}

const STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "by", "for", "from", "in", "into", "is", "it", "its",
    "of", "on", "or", "that", "the", "this", "to", "was", "when", "with",
];

fn content_words(text: &str) -> BTreeSet<String> {
    tokenize(text)
        .into_iter()
        .filter(|t| t.chars().any(char::is_alphanumeric) && !STOPWORDS.contains(&t.as_str()))
        .collect()
}

/// Deterministic 1–5 relevance score from content-word overlap: the share of the
/// document's content words that also occur in the query.
pub fn lexical_relevance_score(query: &str, document: &str) -> u8 {
    let q = content_words(query);
    let d = content_words(document);
    if d.is_empty() {
        return 1;
    }
    let overlap = d.intersection(&q).count() as f64 / d.len() as f64;
    match overlap {
        x if x == 0.0 => 1,
        x if x < 0.1 => 2,
        x if x < 0.2 => 3,
        x if x < 0.35 => 4,
        _ => 5,
    }
}

/// A mock relevance judge built on [`lexical_relevance_score`].
#[derive(Debug, Clone, Copy, Default)]
pub struct LexicalRelevanceJudge;

impl Judge for LexicalRelevanceJudge {
    fn id(&self) -> String {
        "mock:lexical".into()
    }

    fn complete(&self, request: &JudgeRequest) -> Result<String, JudgeError> {
        let protocol = |message: &str| JudgeError::Protocol {
            template: request.template,
            message: message.into(),
            raw: String::new(),
        };
        if request.template != PromptTemplate::RelevanceScoring {
            return Err(protocol("lexical judge only scores relevance"));
        }
        let body = request.input.strip_prefix("Query: ").ok_or_else(|| protocol("missing Query line"))?;
        let (query, document) = body
            .split_once("\nDocument: ")
            .ok_or_else(|| protocol("missing Document line"))?;
        Ok(lexical_relevance_score(query, document).to_string())
    }

    fn concurrency(&self) -> crate::judge::Concurrency {
        crate::judge::Concurrency::Parallel(usize::MAX)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Discipline, Timestamp};
    use crate::judge::ScriptedJudge;

    fn step() -> StepRecord {
        StepRecord {
            video_id: "v".into(),
            clip_id: "v_001".into(),
            step_index: 1,
            title: "Copper sulfate and sodium hydroxide".into(),
            subject: "chemistry".into(),
            discipline: Discipline::Science,
            start_time: Timestamp::from_millis(0),
            end_time: Timestamp::from_millis(4000),
            procedure: "Add sodium hydroxide solution".into(),
            principle: Some("CuSO4 + 2NaOH → Cu(OH)2 + Na2SO4".into()),
            safety: None,
        }
    }

    fn passage(id: &str) -> Passage {
        Passage {
            passage_id: id.into(),
            title: format!("Passage {id}"),
            text: "Copper(II) hydroxide is a blue precipitate.".into(),
            embedding: vec![1.0],
        }
    }

    #[test]
    fn all_fives_are_relevant() {
        let ps: Vec<_> = (0..3).map(|i| passage(&i.to_string())).collect();
        let refs: Vec<&Passage> = ps.iter().collect();
        let judge = ScriptedJudge::new(["5", "5", "5"]);
        let labels = label_relevance(&step(), &refs, &judge).unwrap();
        assert!(labels.iter().all(|l| l.relevant));
    }

    #[test]
    fn threshold_at_three() {
        let ps: Vec<_> = (0..5).map(|i| passage(&i.to_string())).collect();
        let refs: Vec<&Passage> = ps.iter().collect();
        let judge = ScriptedJudge::new(["1", "2", "3", "4", "5"]);
        let labels = label_relevance(&step(), &refs, &judge).unwrap();
        let rel: Vec<bool> = labels.iter().map(|l| l.relevant).collect();
        assert_eq!(rel, vec![false, false, true, true, true]);
        let ids: Vec<&str> = labels.iter().map(|l| l.passage_id.as_str()).collect();
        assert_eq!(ids, vec!["0", "1", "2", "3", "4"]);
    }

    #[test]
    fn prompt_is_relevance_template() {
        let p = passage("x");
        let judge = ScriptedJudge::new(["4"]);
        label_relevance(&step(), &[&p], &judge).unwrap();
        let req = &judge.requests()[0];
        assert_eq!(req.prompt, PromptTemplate::RelevanceScoring.render("chemistry"));
        assert!(req.input.starts_with("Query: Copper sulfate and sodium hydroxide. <Procedure> Add"));
        assert!(req.input.contains("\nDocument: Passage x\nCopper(II) hydroxide"));
    }

    #[test]
    fn verbal_reply_twice_is_protocol_error() {
        let p = passage("x");
        let judge = ScriptedJudge::new(["very relevant", "very relevant"]);
        let err = label_relevance(&step(), &[&p], &judge).unwrap_err();
        match err {
            SequenceError::Judge { source: JudgeError::Protocol { raw, .. }, .. } => {
                assert_eq!(raw, "very relevant")
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn out_of_range_is_rejected() {
        assert!(parse_score("0").is_err());
        assert!(parse_score("6").is_err());
        assert!(parse_score("3.5").is_err());
        assert_eq!(parse_score(" 3\n"), Ok(3));
    }

    #[test]
    fn requires_knowledge_and_passages() {
        let mut s = step();
        let p = passage("x");
        assert!(matches!(
            label_relevance(&s, &[], &LexicalRelevanceJudge),
            Err(SequenceError::NoPassages(_))
        ));
        s.principle = None;
        assert!(matches!(
            label_relevance(&s, &[&p], &LexicalRelevanceJudge),
            Err(SequenceError::NoKnowledge(_))
        ));
    }

    #[test]
    fn lexical_scores() {
        assert_eq!(lexical_relevance_score("heat copper", "copper heat"), 5);
        assert_eq!(lexical_relevance_score("heat copper", "blue sky"), 1);
        assert_eq!(lexical_relevance_score("q", "..."), 1);
    }
}
