//! Preference pairs for safety alignment. Sampled candidates for a
//! safety-annotated step are split by a rule-based check against the
//! ground-truth safety note, and passing candidates are paired against
//! failing ones.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::ErrorCategory;
use crate::domain::{parse_commentary, Commentary, GenerationContext, StepRecord};
use crate::inference_engine::{Generator, GeneratorRequest, GeneratorResponse, Phase};
use crate::io::sha256_hex;
use crate::sequence_builder::ControlToken;
use crate::text::{lcs_f1, tokenize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FailReason {
    Absent,
    Incorrect,
    Malformed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SafetyCheck {
    pub pass: bool,
    pub reason: Option<FailReason>,
    /// LCS F1 of the candidate's safety section against the reference; 0 when absent.
    pub f1: f64,
}

/// LCS F1 over metric tokens.
pub fn safety_f1(candidate: &str, reference: &str) -> f64 {
    lcs_f1(&tokenize(candidate), &tokenize(reference))
}

/// Checks one rendered candidate against the reference safety text.
pub fn safety_rule(candidate: &str, reference_safety: &str, sim_threshold: f64) -> SafetyCheck {
    let fail = |reason, f1| SafetyCheck {
        pass: false,
        reason: Some(reason),
        f1,
    };
    let Ok(parsed) = parse_commentary(candidate) else {
        return fail(FailReason::Malformed, 0.0);
    };
    let Some(safety) = parsed.safety() else {
        return fail(FailReason::Absent, 0.0);
    };
    let f1 = safety_f1(safety, reference_safety);
    if f1 >= sim_threshold {
        SafetyCheck {
            pass: true,
            reason: None,
            f1,
        }
    } else {
        fail(FailReason::Incorrect, f1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairReason {
    SafetyPresentVsAbsent,
    SafetyCorrectVsIncorrect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub clip_id: String,
    pub prompt: String,
    pub chosen: String,
    pub rejected: String,
    pub reason: PairReason,
    pub f1_chosen: f64,
    pub f1_rejected: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairConfig {
    /// Candidates sampled per step.
    pub candidates: usize,
    pub top_p: f64,
    pub sim_threshold: f64,
    pub max_pairs_per_step: usize,
    pub seed: u64,
}

impl Default for PairConfig {
    fn default() -> Self {
        PairConfig {
            candidates: 8,
            top_p: 0.9,
            sim_threshold: 0.3,
            max_pairs_per_step: 4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PairConfigError {
    #[error("top_p must be in (0, 1], got {0}")]
    TopP(f64),
    #[error("at least 2 candidates per step are needed, got {0}")]
    Candidates(usize),
    #[error("similarity threshold must be in [0, 1], got {0}")]
    Threshold(f64),
}

impl PairConfig {
    pub fn check(&self) -> Result<(), PairConfigError> {
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(PairConfigError::TopP(self.top_p));
        }
        if self.candidates < 2 {
            return Err(PairConfigError::Candidates(self.candidates));
        }
        if !(0.0..=1.0).contains(&self.sim_threshold) {
            return Err(PairConfigError::Threshold(self.sim_threshold));
        }
        Ok(())
    }
}

/// Pairs for one step's candidates. Malformed candidates are never paired,
/// duplicates count once.
pub fn pairs_for_candidates(
    clip_id: &str,
    prompt: &str,
    candidates: &[String],
    reference_safety: &str,
    config: &PairConfig,
) -> Vec<PreferencePair> {
    let mut seen = BTreeSet::new();
    let mut passes = Vec::new();
    let mut fails = Vec::new();
    for c in candidates {
        if !seen.insert(c.as_str()) {
            continue;
        }
        let check = safety_rule(c, reference_safety, config.sim_threshold);
        match check.reason {
            None => passes.push((c, check)),
            Some(FailReason::Malformed) => {}
            Some(_) => fails.push((c, check)),
        }
    }
    // stable sorts keep sampling order among equals
    passes.sort_by(|a, b| b.1.f1.total_cmp(&a.1.f1));
    fails.sort_by_key(|f| f.1.reason);

    let mut out = Vec::new();
    'outer: for (chosen, pc) in &passes {
        for (rejected, fc) in &fails {
            if out.len() == config.max_pairs_per_step {
                break 'outer;
            }
            out.push(PreferencePair {
                clip_id: clip_id.to_owned(),
                prompt: prompt.to_owned(),
                chosen: (*chosen).clone(),
                rejected: (*rejected).clone(),
                reason: match fc.reason {
                    Some(FailReason::Absent) => PairReason::SafetyPresentVsAbsent,
                    _ => PairReason::SafetyCorrectVsIncorrect,
                },
                f1_chosen: pc.f1,
                f1_rejected: fc.f1,
            });
        }
    }
    out
}

/// Seed for one step, derived from the run seed and the clip id.
pub fn step_seed(seed: u64, clip_id: &str) -> u64 {
    let digest = sha256_hex(format!("{seed}:{clip_id}").as_bytes());
    u64::from_str_radix(&digest[..16], 16).expect("hex digest")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedStep {
    pub clip_id: String,
    pub category: ErrorCategory,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    pub pairs: usize,
    pub safety_present_vs_absent: usize,
    pub safety_correct_vs_incorrect: usize,
    pub safety_steps: usize,
    pub steps_with_pairs: usize,
    pub coverage: f64,
    /// Sampled steps whose candidates all passed or all failed.
    pub no_contrast: Vec<String>,
    pub sampling_failed: Vec<SkippedStep>,
}

/// Summarises pairs against the safety-bearing steps of `dataset`.
pub fn pair_report(pairs: &[PreferencePair], dataset: &[StepRecord]) -> PairReport {
    let safety_steps: BTreeSet<&str> = dataset
        .iter()
        .filter(|r| r.safety.is_some())
        .map(|r| r.clip_id.as_str())
        .collect();
    let with_pairs: BTreeSet<&str> = pairs
        .iter()
        .map(|p| p.clip_id.as_str())
        .filter(|c| safety_steps.contains(c))
        .collect();
    let absent = pairs
        .iter()
        .filter(|p| p.reason == PairReason::SafetyPresentVsAbsent)
        .count();
    PairReport {
        pairs: pairs.len(),
        safety_present_vs_absent: absent,
        safety_correct_vs_incorrect: pairs.len() - absent,
        safety_steps: safety_steps.len(),
        steps_with_pairs: with_pairs.len(),
        coverage: if safety_steps.is_empty() {
            0.0
        } else {
            with_pairs.len() as f64 / safety_steps.len() as f64
        },
        no_contrast: Vec::new(),
        sampling_failed: Vec::new(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairOutcome {
    pub pairs: Vec<PreferencePair>,
    pub report: PairReport,
}

enum StepResult {
    Pairs(Vec<PreferencePair>),
    NoContrast,
    Failed(ErrorCategory, String),
}

/// The sampling request for one step: the ground-truth context of earlier
/// steps and, when given, the passages the model kept at inference.
pub fn sample_request(
    step: &StepRecord,
    preceding: &[Commentary],
    passages: Option<&[String]>,
    config: &PairConfig,
) -> GeneratorRequest {
    let ctx = GenerationContext::new(step.clip_id.clone(), step.title.trim()).with_preceding(preceding.to_vec());
    let mut req = GeneratorRequest::from_context(Phase::Sample, &ctx);
    if let Some(ps) = passages {
        req.partial.push(ControlToken::Ret.as_str().to_owned());
        req.partial
            .extend(ps.iter().enumerate().map(|(j, p)| format!("Passage {}: {p}", j + 1)));
    }
    req.top_p = Some(config.top_p);
    req.count = Some(config.candidates);
    req.seed = Some(step_seed(config.seed, &step.clip_id));
    req
}

fn sample_step(
    step: &StepRecord,
    preceding: &[Commentary],
    passages: Option<&[String]>,
    generator: &dyn Generator,
    config: &PairConfig,
) -> StepResult {
    let reference = step.safety.as_deref().expect("only safety steps are sampled");
    let req = sample_request(step, preceding, passages, config);
    let candidates = match generator.call(&req) {
        Ok(GeneratorResponse {
            candidates: Some(c),
            text: None,
            control: None,
        }) if c.len() == config.candidates => c,
        Ok(other) => {
            let n = other.candidates.as_ref().map_or(0, Vec::len);
            return StepResult::Failed(
                ErrorCategory::Protocol,
                format!("expected {} candidates, got {n}", config.candidates),
            );
        }
        Err(e) => return StepResult::Failed(e.category(), e.to_string()),
    };
    let pairs = pairs_for_candidates(&step.clip_id, &req.prompt_text(), &candidates, reference, config);
    if pairs.is_empty() {
        StepResult::NoContrast
    } else {
        StepResult::Pairs(pairs)
    }
}

/// Samples every safety-annotated step and builds its pairs. `passages` maps
/// clip ids to the passage texts kept during a traced inference run.
pub fn build_pairs(
    dataset: &[StepRecord],
    generator: &dyn Generator,
    config: &PairConfig,
    passages: &BTreeMap<String, Vec<String>>,
    jobs: usize,
) -> Result<PairOutcome, PairConfigError> {
    config.check()?;
    let mut by_video: BTreeMap<&str, Vec<&StepRecord>> = BTreeMap::new();
    for r in dataset {
        by_video.entry(&r.video_id).or_default().push(r);
    }
    let mut preceding: HashMap<&str, Vec<Commentary>> = HashMap::new();
    for steps in by_video.values_mut() {
        steps.sort_by_key(|r| r.step_index);
        for (i, r) in steps.iter().enumerate() {
            preceding.insert(&r.clip_id, steps[..i].iter().map(|p| p.commentary()).collect());
        }
    }
    let mut steps: Vec<&StepRecord> = dataset.iter().filter(|r| r.safety.is_some()).collect();
    steps.sort_by(|a, b| a.clip_id.cmp(&b.clip_id));

    let one = |r: &&StepRecord| {
        sample_step(
            r,
            &preceding[r.clip_id.as_str()],
            passages.get(&r.clip_id).map(Vec::as_slice),
            generator,
            config,
        )
    };
    let workers = jobs.min(generator.concurrency_limit()).max(1);
    let results: Vec<StepResult> = if workers == 1 {
        steps.iter().map(one).collect()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .expect("thread pool")
            .install(|| steps.par_iter().map(one).collect())
    };

    let mut pairs = Vec::new();
    let mut no_contrast = Vec::new();
    let mut failed = Vec::new();
    for (r, res) in steps.iter().zip(results) {
        match res {
            StepResult::Pairs(p) => pairs.extend(p),
            StepResult::NoContrast => no_contrast.push(r.clip_id.clone()),
            StepResult::Failed(category, message) => {
                tracing::warn!(clip_id = %r.clip_id, %message, "sampling failed, step skipped");
                failed.push(SkippedStep {
                    clip_id: r.clip_id.clone(),
                    category,
                    message,
                });
            }
        }
    }
    let mut report = pair_report(&pairs, dataset);
    report.no_contrast = no_contrast;
    report.sampling_failed = failed;
    Ok(PairOutcome { pairs, report })
}
