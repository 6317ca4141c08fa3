//! Caption metrics over predicted and reference commentaries, safety
//! agreement statistics and human-score aggregation.
//!
//! Scored text is the tag-stripped canonical rendering of each commentary.
//! Tokenization is [`crate::text::tokenize`] throughout.

mod human;
mod metrics;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use human::{aggregate_human, HumanScore, HumanScoreError, HumanSummary, MeanSd};
pub use metrics::{bleu, cider, rouge_l, rouge_l_pair, MetricError, ROUGE_BETA};

use crate::domain::Commentary;
use crate::error::ErrorCategory;
use crate::io::{self, IoError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Bleu,
    Rouge,
    Cider,
    Safety,
    Meteor,
    Bertscore,
}

impl Metric {
    pub const NATIVE: [Metric; 4] = [Metric::Bleu, Metric::Rouge, Metric::Cider, Metric::Safety];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Bleu => "bleu",
            Metric::Rouge => "rouge",
            Metric::Cider => "cider",
            Metric::Safety => "safety",
            Metric::Meteor => "meteor",
            Metric::Bertscore => "bertscore",
        }
    }

    pub fn is_external(self) -> bool {
        matches!(self, Metric::Meteor | Metric::Bertscore)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bleu" => Ok(Metric::Bleu),
            "rouge" | "rougel" | "rouge_l" => Ok(Metric::Rouge),
            "cider" => Ok(Metric::Cider),
            "safety" => Ok(Metric::Safety),
            "meteor" => Ok(Metric::Meteor),
            "bertscore" => Ok(Metric::Bertscore),
            other => Err(format!("unknown metric {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScorerError {
    #[error("scorer unreachable: {0}")]
    Transport(String),
    #[error("scorer protocol error: {0}")]
    Protocol(String),
}

/// Scores a corpus with a metric the crate does not implement itself.
pub trait ExternalScorer: Send + Sync {
    fn id(&self) -> String;

    fn score(&self, metric: Metric, candidates: &[String], references: &[String]) -> Result<f64, ScorerError>;
}

/// A prediction or reference line. Extra fields are ignored so full dataset
/// records can be used directly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub clip_id: String,
    pub procedure: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub principle: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub safety: Option<String>,
}

impl EvalRecord {
    pub fn from_commentary(clip_id: impl Into<String>, c: &Commentary) -> Self {
        EvalRecord {
            clip_id: clip_id.into(),
            procedure: c.procedure.clone(),
            principle: c.principle().map(str::to_owned),
            safety: c.safety().map(str::to_owned),
        }
    }

    pub fn commentary(&self) -> Commentary {
        Commentary::from_parts(&self.procedure, self.principle.as_deref(), self.safety.as_deref())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SafetyStats {
    /// Share of pairs where prediction and reference agree on having a safety section.
    pub precision: f64,
    /// Share of predictions with a safety section.
    pub frequency: f64,
}

pub fn safety_stats(preds: &[Commentary], refs: &[Commentary]) -> Result<SafetyStats, MetricError> {
    if preds.len() != refs.len() {
        return Err(MetricError::Length {
            metric: "safety",
            predictions: preds.len(),
            references: refs.len(),
        });
    }
    if preds.is_empty() {
        return Err(MetricError::Empty("safety"));
    }
    let n = preds.len() as f64;
    let agree = preds
        .iter()
        .zip(refs)
        .filter(|(p, r)| p.safety().is_some() == r.safety().is_some())
        .count();
    let present = preds.iter().filter(|p| p.safety().is_some()).count();
    Ok(SafetyStats {
        precision: agree as f64 / n,
        frequency: present as f64 / n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub metrics: Vec<Metric>,
    pub rouge_beta: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            metrics: Metric::NATIVE.to_vec(),
            rouge_beta: ROUGE_BETA,
        }
    }
}

/// Fixed metric settings, echoed in every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSettings {
    pub text: String,
    pub tokenizer: String,
    pub bleu: String,
    pub rouge_beta: f64,
    pub cider: String,
}

impl EvalSettings {
    fn new(config: &EvalConfig) -> Self {
        EvalSettings {
            text: "tag-stripped sections in canonical order, space-joined".into(),
            tokenizer: "lowercase; alphanumeric runs and single punctuation characters".into(),
            bleu: "corpus-level, clipped precision, brevity penalty, no smoothing".into(),
            rouge_beta: config.rouge_beta,
            cider: "tf-idf n-gram cosine, n=1..4, df over references, x10".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bleu1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bleu2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bleu3: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bleu4: Option<f64>,
    #[serde(rename = "rougeL", skip_serializing_if = "Option::is_none")]
    pub rouge_l: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cider: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub meteor: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bertscore: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub safety_precision: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub safety_frequency: Option<f64>,
    /// Requested metrics left out because no external scorer is configured.
    pub omitted: Vec<Metric>,
    pub metrics: Vec<Metric>,
    pub settings: EvalSettings,
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("duplicate clip_id {clip_id} in {side}")]
    Duplicate { side: &'static str, clip_id: String },
    #[error("unmatched clip ids; without reference: {missing_reference:?}; without prediction: {missing_prediction:?}")]
    Unmatched {
        missing_reference: Vec<String>,
        missing_prediction: Vec<String>,
    },
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("{metric}: {source}")]
    Scorer {
        metric: Metric,
        #[source]
        source: ScorerError,
    },
}

impl EvalError {
    pub fn category(&self) -> ErrorCategory {
        match self {
            EvalError::Scorer {
                source: ScorerError::Transport(_),
                ..
            } => ErrorCategory::Transport,
            EvalError::Scorer { .. } => ErrorCategory::Protocol,
            _ => ErrorCategory::Validation,
        }
    }
}

fn by_id<'a>(side: &'static str, rows: &'a [EvalRecord]) -> Result<BTreeMap<&'a str, &'a EvalRecord>, EvalError> {
    let mut out = BTreeMap::new();
    for r in rows {
        if out.insert(r.clip_id.as_str(), r).is_some() {
            return Err(EvalError::Duplicate {
                side,
                clip_id: r.clip_id.clone(),
            });
        }
    }
    Ok(out)
}

/// Matches predictions to references by clip id and runs the configured metrics.
pub fn evaluate(
    preds: &[EvalRecord],
    refs: &[EvalRecord],
    config: &EvalConfig,
    scorer: Option<&dyn ExternalScorer>,
) -> Result<MetricReport, EvalError> {
    let p = by_id("predictions", preds)?;
    let r = by_id("references", refs)?;
    let missing_reference: Vec<String> = p.keys().filter(|k| !r.contains_key(*k)).map(|k| k.to_string()).collect();
    let missing_prediction: Vec<String> = r.keys().filter(|k| !p.contains_key(*k)).map(|k| k.to_string()).collect();
    if !missing_reference.is_empty() || !missing_prediction.is_empty() {
        return Err(EvalError::Unmatched {
            missing_reference,
            missing_prediction,
        });
    }
    let pc: Vec<Commentary> = p.values().map(|x| x.commentary()).collect();
    let rc: Vec<Commentary> = r.values().map(|x| x.commentary()).collect();
    let pt: Vec<String> = pc.iter().map(Commentary::plain_text).collect();
    let rt: Vec<String> = rc.iter().map(Commentary::plain_text).collect();

    let metrics: Vec<Metric> = config.metrics.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let mut report = MetricReport {
        n: pt.len(),
        bleu1: None,
        bleu2: None,
        bleu3: None,
        bleu4: None,
        rouge_l: None,
        cider: None,
        meteor: None,
        bertscore: None,
        safety_precision: None,
        safety_frequency: None,
        omitted: Vec::new(),
        metrics: metrics.clone(),
        settings: EvalSettings::new(config),
    };
    for m in metrics {
        match m {
            Metric::Bleu => {
                let b = bleu(&pt, &rt, 4)?;
                report.bleu1 = Some(b[0]);
                report.bleu2 = Some(b[1]);
                report.bleu3 = Some(b[2]);
                report.bleu4 = Some(b[3]);
            }
            Metric::Rouge => report.rouge_l = Some(rouge_l(&pt, &rt, config.rouge_beta)?),
            Metric::Cider => report.cider = Some(cider(&pt, &rt)?),
            Metric::Safety => {
                let s = safety_stats(&pc, &rc)?;
                report.safety_precision = Some(s.precision);
                report.safety_frequency = Some(s.frequency);
            }
            Metric::Meteor | Metric::Bertscore => {
                let Some(scorer) = scorer else {
                    tracing::info!(metric = %m, "no external scorer configured, metric omitted");
                    report.omitted.push(m);
                    continue;
                };
                let score = scorer
                    .score(m, &pt, &rt)
                    .map_err(|source| EvalError::Scorer { metric: m, source })?;
                if m == Metric::Meteor {
                    report.meteor = Some(score);
                } else {
                    report.bertscore = Some(score);
                }
            }
        }
    }
    Ok(report)
}

pub fn read_eval_records(path: impl AsRef<Path>) -> Result<Vec<EvalRecord>, IoError> {
    Ok(io::read_jsonl(path)?.into_iter().map(|(_, r)| r).collect())
}

pub fn evaluate_files(
    pred_path: impl AsRef<Path>,
    ref_path: impl AsRef<Path>,
    config: &EvalConfig,
    scorer: Option<&dyn ExternalScorer>,
) -> Result<MetricReport, EvalError> {
    let preds = read_eval_records(pred_path)?;
    let refs = read_eval_records(ref_path)?;
    evaluate(&preds, &refs, config, scorer)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(safety: bool) -> Commentary {
        let base = Commentary::new("Heat the tube");
        if safety {
            base.with_safety("Wear goggles")
        } else {
            base
        }
    }

    #[test]
    fn safety_hand_count() {
        let preds: Vec<_> = [true, false, true, false].map(c).to_vec();
        let refs: Vec<_> = [true, true, false, false].map(c).to_vec();
        let s = safety_stats(&preds, &refs).unwrap();
        assert_eq!(s, SafetyStats { precision: 0.5, frequency: 0.5 });
    }

    #[test]
    fn safety_all_absent() {
        let v = vec![c(false), c(false)];
        let s = safety_stats(&v, &v).unwrap();
        assert_eq!(s, SafetyStats { precision: 1.0, frequency: 0.0 });
    }

    fn rec(id: &str, text: &str) -> EvalRecord {
        EvalRecord {
            clip_id: id.into(),
            procedure: text.into(),
            principle: Some("Acids donate protons".into()),
            safety: None,
        }
    }

    #[test]
    fn identity_files() {
        let rows = vec![rec("a", "Rinse the burette twice"), rec("b", "Add three drops of indicator")];
        let r = evaluate(&rows, &rows, &EvalConfig::default(), None).unwrap();
        assert!((r.bleu4.unwrap() - 100.0).abs() < 1e-9);
        assert!((r.rouge_l.unwrap() - 100.0).abs() < 1e-9);
        assert_eq!(r.safety_precision, Some(1.0));
    }

    #[test]
    fn unmatched_ids() {
        let a = vec![rec("a", "x"), rec("b", "y")];
        let b = vec![rec("a", "x"), rec("c", "y")];
        match evaluate(&a, &b, &EvalConfig::default(), None) {
            Err(EvalError::Unmatched {
                missing_reference,
                missing_prediction,
            }) => {
                assert_eq!(missing_reference, vec!["b"]);
                assert_eq!(missing_prediction, vec!["c"]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn external_metrics_omitted_without_scorer() {
        let rows = vec![rec("a", "x y"), rec("b", "y z")];
        let config = EvalConfig {
            metrics: vec![Metric::Meteor, Metric::Bleu],
            ..EvalConfig::default()
        };
        let r = evaluate(&rows, &rows, &config, None).unwrap();
        assert_eq!(r.omitted, vec![Metric::Meteor]);
        assert!(r.meteor.is_none());
        let json = serde_json::to_value(&r).unwrap();
        assert!(json.get("meteor").is_none());
    }
}
