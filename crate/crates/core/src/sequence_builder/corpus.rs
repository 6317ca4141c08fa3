use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    label_relevance, validate_sequence, ControlToken, ControlledSequence, Segment, SequenceError,
    SequenceKind,
};
use crate::domain::{ClipEmbeddingSet, Commentary, StepRecord};
use crate::io::{self, IoError};
use crate::judge::Judge;
use crate::knowledge_index::{fuse_query, FusionConfig, FusionMode, KnowledgeIndex, Passage, DEFAULT_K};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SequenceConfig {
    pub k: usize,
    pub fusion_mode: FusionMode,
    pub fusion: FusionConfig,
}

impl Default for SequenceConfig {
    fn default() -> Self {
        SequenceConfig {
            k: DEFAULT_K,
            fusion_mode: FusionMode::VT,
            fusion: FusionConfig::default(),
        }
    }
}

fn render(c: &Commentary, clip_id: &str) -> Result<String, SequenceError> {
    c.render().map_err(|source| SequenceError::Commentary {
        clip_id: clip_id.to_owned(),
        source,
    })
}

/// Preceding commentaries joined one per line; empty for the first step.
pub(crate) fn render_preceding(preceding: &[Commentary], clip_id: &str) -> Result<String, SequenceError> {
    let lines = preceding
        .iter()
        .map(|c| render(c, clip_id))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(lines.join("\n"))
}

/// Emits the training sequences for one step, using ground-truth `preceding`
/// commentary as context.
pub fn build_step_sequences(
    step: &StepRecord,
    preceding: &[Commentary],
    index: &KnowledgeIndex,
    clip: &ClipEmbeddingSet,
    judge: &dyn Judge,
    config: &SequenceConfig,
) -> Result<Vec<ControlledSequence>, SequenceError> {
    if config.k == 0 {
        return Err(SequenceError::ZeroK);
    }
    let commentary = step.commentary();
    let procedure = Commentary::new(commentary.procedure.clone());
    let prefix = vec![
        Segment::video(&step.clip_id),
        Segment::context(step.title.trim()),
        Segment::context(render_preceding(preceding, &step.clip_id)?),
        Segment::target(render(&procedure, &step.clip_id)?),
    ];

    let sequences = if !commentary.has_knowledge() {
        let mut segments = prefix;
        segments.push(Segment::control(ControlToken::NotRet));
        vec![ControlledSequence {
            clip_id: step.clip_id.clone(),
            segments,
        }]
    } else {
        let retrieval = |source| SequenceError::Retrieval {
            clip_id: step.clip_id.clone(),
            source,
        };
        let query = fuse_query(clip, config.fusion_mode, &config.fusion).map_err(retrieval)?;
        let hits = index.search(&query, config.k).map_err(retrieval)?;
        let passages: Vec<&Passage> = hits
            .iter()
            .filter_map(|h| index.passage(&h.passage_id))
            .collect();
        let labels = label_relevance(step, &passages, judge)?;
        let target = commentary.render_knowledge().map_err(|source| SequenceError::Commentary {
            clip_id: step.clip_id.clone(),
            source,
        })?;
        passages
            .iter()
            .zip(&labels)
            .map(|(p, label)| {
                let mut segments = prefix.clone();
                segments.push(Segment::control(ControlToken::Ret));
                segments.push(Segment::passage(p.display_text()));
                segments.push(Segment::control(ControlToken::relevance(label.relevant)));
                segments.push(Segment::target(target.clone()));
                ControlledSequence {
                    clip_id: step.clip_id.clone(),
                    segments,
                }
            })
            .collect()
    };
    for seq in &sequences {
        validate_sequence(seq).map_err(|source| SequenceError::Shape {
            clip_id: step.clip_id.clone(),
            source,
        })?;
    }
    Ok(sequences)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusCounts {
    pub steps: usize,
    pub sequences: usize,
    pub not_ret: usize,
    pub ret: usize,
    pub ret_rel: usize,
    pub ret_not_rel: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub counts: CorpusCounts,
    pub k: usize,
    pub fusion_mode: FusionMode,
    pub judge_id: String,
    pub index_checksum: String,
    /// Control tokens appear verbatim in segment values; the trainer maps them
    /// onto reserved vocabulary slots.
    pub control_tokens: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub sequences: Vec<ControlledSequence>,
    pub manifest: CorpusManifest,
}

impl Corpus {
    pub fn to_jsonl(&self) -> Result<Vec<u8>, IoError> {
        io::to_jsonl(&self.sequences)
    }
}

/// Ground-truth preceding commentary for each record, keyed by clip id.
fn teacher_forced_context(dataset: &[StepRecord]) -> HashMap<&str, Vec<Commentary>> {
    let mut by_video: BTreeMap<&str, Vec<&StepRecord>> = BTreeMap::new();
    for r in dataset {
        by_video.entry(&r.video_id).or_default().push(r);
    }
    let mut out = HashMap::new();
    for steps in by_video.values_mut() {
        steps.sort_by_key(|r| r.step_index);
        for (i, r) in steps.iter().enumerate() {
            out.insert(r.clip_id.as_str(), steps[..i].iter().map(|p| p.commentary()).collect());
        }
    }
    out
}

/// Builds the full training corpus in dataset order. Steps fan out over up to
/// `jobs` workers when the judge allows concurrent calls.
pub fn build_corpus(
    dataset: &[StepRecord],
    index: &KnowledgeIndex,
    embeddings: &BTreeMap<String, ClipEmbeddingSet>,
    judge: &dyn Judge,
    config: &SequenceConfig,
    jobs: usize,
) -> Result<Corpus, SequenceError> {
    let missing: Vec<String> = dataset
        .iter()
        .filter(|r| !embeddings.contains_key(&r.clip_id))
        .map(|r| r.clip_id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(SequenceError::MissingEmbeddings(missing));
    }
    let preceding = teacher_forced_context(dataset);
    let build = |r: &StepRecord| {
        build_step_sequences(r, &preceding[r.clip_id.as_str()], index, &embeddings[&r.clip_id], judge, config)
    };

    let workers = judge.concurrency().workers(jobs);
    let per_step: Vec<Vec<ControlledSequence>> = if workers <= 1 {
        dataset.iter().map(build).collect::<Result<_, _>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .expect("thread pool");
        pool.install(|| dataset.par_iter().map(build).collect::<Result<_, _>>())?
    };

    let mut counts = CorpusCounts {
        steps: dataset.len(),
        ..CorpusCounts::default()
    };
    let sequences: Vec<ControlledSequence> = per_step.into_iter().flatten().collect();
    for seq in &sequences {
        match validate_sequence(seq).expect("sequences are validated when built") {
            SequenceKind::NotRet => counts.not_ret += 1,
            SequenceKind::RetRel => counts.ret_rel += 1,
            SequenceKind::RetNotRel => counts.ret_not_rel += 1,
        }
    }
    counts.ret = counts.ret_rel + counts.ret_not_rel;
    counts.sequences = sequences.len();

    Ok(Corpus {
        sequences,
        manifest: CorpusManifest {
            counts,
            k: config.k,
            fusion_mode: config.fusion_mode,
            judge_id: judge.id(),
            index_checksum: index.checksum(),
            control_tokens: ControlToken::ALL.iter().map(|t| t.as_str().to_owned()).collect(),
        },
    })
}
