use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::Args;
use labcast_core::curation::{self, AsrSegment, CurationConfig, VideoMeta};
use labcast_core::domain::{load_dataset, write_dataset, Discipline, StepRecord};
use labcast_core::evaluation::{self, EvalConfig, EvalRecord, Metric};
use labcast_core::inference_engine::{self, EngineConfig, StepTrace, TokenBudget};
use labcast_core::io::{self, to_jsonl};
use labcast_core::knowledge_index::{self, load_index, write_index, FusionConfig};
use labcast_core::safety_preference::{self, step_seed, PairConfig};
use labcast_core::sequence_builder::{build_corpus, SequenceConfig};
use labcast_core::ErrorCategory;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{parse_file, resolve_config, Resolved};
use crate::provenance::{to_pretty, Provenance};
use crate::{backends, Cli, Command, Failure};

type Outcome = Result<(), Failure>;

fn invalid(e: impl Into<anyhow::Error>) -> Failure {
    Failure::validation(e)
}

pub(crate) fn dispatch(cli: &Cli, env: &BTreeMap<String, String>) -> Outcome {
    let file = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config file {}", path.display()))
                .map_err(invalid)?;
            Some(parse_file(&text).map_err(invalid)?)
        }
        None => None,
    };
    let resolved = resolve_config(&cli.settings.as_map(), env, file.as_ref()).map_err(invalid)?;
    tracing::info!(config = %serde_json::to_string(&resolved).unwrap_or_default(), "resolved configuration");
    match &cli.command {
        Command::Curate(a) => curate(a, &resolved),
        Command::Stats(a) => stats(a, &resolved),
        Command::BuildIndex(a) => build_index(a, &resolved),
        Command::PrepareSft(a) => prepare_sft(a, &resolved),
        Command::PrepareDpo(a) => prepare_dpo(a, &resolved),
        Command::Infer(a) => infer(a, &resolved),
        Command::Evaluate(a) => evaluate(a, &resolved),
    }
}

/// Seed for one pipeline stage, derived from the root seed.
pub fn stage_seed(root: u64, stage: &str) -> u64 {
    step_seed(root, stage)
}

#[derive(Debug, Args)]
pub struct CurateArgs {
    /// Line-delimited transcript of a single video.
    #[arg(long, conflicts_with = "manifest", required_unless_present = "manifest")]
    pub asr: Option<PathBuf>,
    /// Line-delimited list of videos: {video_id, title, subject, discipline, asr}.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, requires = "asr")]
    pub video_id: Option<String>,
    #[arg(long, requires = "asr")]
    pub title: Option<String>,
    #[arg(long)]
    pub subject: Option<String>,
    #[arg(long, requires = "asr")]
    pub discipline: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct VideoEntry {
    video_id: String,
    title: String,
    #[serde(default)]
    subject: Option<String>,
    discipline: Discipline,
    asr: PathBuf,
}

fn curate(a: &CurateArgs, cfg: &Resolved) -> Outcome {
    let mut jobs: Vec<(VideoMeta, PathBuf)> = Vec::new();
    let mut inputs: Vec<PathBuf> = Vec::new();
    if let Some(manifest) = &a.manifest {
        inputs.push(manifest.clone());
        let base = manifest.parent().unwrap_or(Path::new(""));
        let rows: Vec<(usize, VideoEntry)> = io::read_jsonl(manifest).map_err(invalid)?;
        for (line, v) in rows {
            let subject = v.subject.or_else(|| a.subject.clone()).ok_or_else(|| {
                invalid(anyhow!("{}: line {line}: no subject (add it or pass --subject)", manifest.display()))
            })?;
            jobs.push((
                VideoMeta {
                    video_id: v.video_id,
                    title: v.title,
                    subject,
                    discipline: v.discipline,
                },
                base.join(v.asr),
            ));
        }
    } else {
        let asr = a.asr.clone().expect("clap enforces --asr or --manifest");
        let need = |v: &Option<String>, flag: &str| v.clone().ok_or_else(|| invalid(anyhow!("--asr requires --{flag}")));
        let discipline: Discipline = need(&a.discipline, "discipline")?.parse().map_err(|e: String| invalid(anyhow!(e)))?;
        jobs.push((
            VideoMeta {
                video_id: need(&a.video_id, "video-id")?,
                title: need(&a.title, "title")?,
                subject: need(&a.subject, "subject")?,
                discipline,
            },
            asr,
        ));
    }
    let mut videos: Vec<(VideoMeta, Vec<AsrSegment>)> = Vec::new();
    for (meta, path) in jobs {
        let segs = curation::read_asr(&path)
            .with_context(|| format!("reading transcript {}", path.display()))
            .map_err(invalid)?;
        inputs.push(path);
        videos.push((meta, segs));
    }
    let judge = backends::judge(cfg.config.judge.as_deref(), cfg.config.jobs).map_err(invalid)?;
    let config = CurationConfig {
        batch_size: cfg.config.batch_size,
    };
    let curated = curation::curate_all(&videos, judge.as_ref(), &config, cfg.config.jobs)
        .map_err(|e| Failure::new(e.category(), e))?;
    let records: Vec<StepRecord> = curated.iter().flat_map(|v| v.records.clone()).collect();
    let bytes = write_dataset(&records).map_err(invalid)?;
    // the written dataset must load back under the dataset invariants
    labcast_core::domain::read_dataset(bytes.as_slice()).map_err(invalid)?;

    let input_refs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    let mut prov = Provenance::new("curate", cfg, &input_refs).map_err(invalid)?;
    prov.write(&a.out, &bytes).map_err(invalid)?;
    let quality = curation::quality_checks(&records);
    let summaries: BTreeMap<&str, &str> = curated.iter().map(|v| (v.video_id.as_str(), v.summary.as_str())).collect();
    prov.write_sidecar(
        &a.out,
        json!({
            "judge": judge.id(),
            "videos": curated.len(),
            "records": records.len(),
            "summaries": summaries,
            "quality": quality,
        }),
    )
    .map_err(invalid)?;
    tracing::info!(videos = curated.len(), records = records.len(), out = %a.out.display(), "curated");
    Ok(())
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

fn stats(a: &StatsArgs, cfg: &Resolved) -> Outcome {
    let records = load_dataset(&a.dataset).map_err(invalid)?;
    let stats = curation::dataset_stats(&records).map_err(invalid)?;
    let quality = curation::quality_checks(&records);
    let prov = Provenance::new("stats", cfg, &[&a.dataset]).map_err(invalid)?;
    let body = json!({ "stats": stats, "quality": quality, "provenance": prov });
    io::atomic_write(&a.out, &to_pretty(&body)).map_err(invalid)?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct BuildIndexArgs {
    /// Line-delimited passages: {passage_id, title, text}.
    #[arg(long)]
    pub passages: PathBuf,
    /// Line-aligned {passage_id, embedding}; otherwise the configured embedder is used.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

fn build_index(a: &BuildIndexArgs, cfg: &Resolved) -> Outcome {
    let texts = knowledge_index::read_passages(&a.passages).map_err(invalid)?;
    let mut inputs: Vec<&Path> = vec![&a.passages];
    let (raw, embedder) = match &a.embeddings {
        Some(path) => {
            inputs.push(path);
            let embs = knowledge_index::read_passage_embeddings(path).map_err(invalid)?;
            (knowledge_index::join_embeddings(texts, embs).map_err(invalid)?, "file".to_owned())
        }
        None => {
            let provider = backends::embedder(cfg.config.embedder.as_deref()).map_err(invalid)?;
            let raw = knowledge_index::embed_passages(texts, provider.as_ref(), cfg.config.batch_size)
                .map_err(|e| Failure::new(e.category(), e))?;
            (raw, provider.id())
        }
    };
    let index = knowledge_index::build_index(raw).map_err(invalid)?;
    let bytes = write_index(&index);
    let mut prov = Provenance::new("build-index", cfg, &inputs).map_err(invalid)?;
    prov.write(&a.out, &bytes).map_err(invalid)?;
    prov.write_sidecar(
        &a.out,
        json!({
            "passages": index.len(),
            "dimension": index.dimension(),
            "format_version": knowledge_index::FORMAT_VERSION,
            "checksum": index.checksum(),
            "embedder": embedder,
        }),
    )
    .map_err(invalid)?;
    tracing::info!(passages = index.len(), dimension = index.dimension(), "index built");
    Ok(())
}

#[derive(Debug, Args)]
pub struct PrepareSftArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub index: PathBuf,
    /// Line-delimited clip embeddings keyed by clip_id.
    #[arg(long)]
    pub clip_embeddings: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

fn prepare_sft(a: &PrepareSftArgs, cfg: &Resolved) -> Outcome {
    let dataset = load_dataset(&a.dataset).map_err(invalid)?;
    let index = load_index(&a.index).map_err(invalid)?;
    let clips = knowledge_index::load_clip_embeddings(&a.clip_embeddings).map_err(invalid)?;
    let judge = backends::judge(cfg.config.judge.as_deref(), cfg.config.jobs).map_err(invalid)?;
    let config = SequenceConfig {
        k: cfg.config.k,
        fusion_mode: cfg.config.fusion_mode,
        fusion: FusionConfig::default(),
    };
    let corpus = build_corpus(&dataset, &index, &clips, judge.as_ref(), &config, cfg.config.jobs)
        .map_err(|e| Failure::new(e.category(), e))?;
    let bytes = corpus.to_jsonl().map_err(invalid)?;
    let mut prov = Provenance::new("prepare-sft", cfg, &[&a.dataset, &a.index, &a.clip_embeddings]).map_err(invalid)?;
    prov.write(&a.out, &bytes).map_err(invalid)?;
    prov.write_sidecar(&a.out, serde_json::to_value(&corpus.manifest).map_err(invalid)?)
        .map_err(invalid)?;
    tracing::info!(sequences = corpus.manifest.counts.sequences, "corpus written");
    Ok(())
}

#[derive(Debug, Args)]
pub struct PrepareDpoArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Inference traces; passages kept on RET steps are added to the prompt.
    #[arg(long, requires = "index")]
    pub traces: Option<PathBuf>,
    /// Index holding the traced passages.
    #[arg(long)]
    pub index: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

fn prepare_dpo(a: &PrepareDpoArgs, cfg: &Resolved) -> Outcome {
    let dataset = load_dataset(&a.dataset).map_err(invalid)?;
    let mut inputs: Vec<&Path> = vec![&a.dataset];
    let mut passages: BTreeMap<String, Vec<String>> = BTreeMap::new();
    if let (Some(traces), Some(index)) = (&a.traces, &a.index) {
        inputs.push(traces);
        inputs.push(index);
        let index = load_index(index).map_err(invalid)?;
        let rows: Vec<(usize, StepTrace)> = io::read_jsonl(traces).map_err(invalid)?;
        for (line, t) in rows {
            if t.decision != labcast_core::sequence_builder::ControlToken::Ret {
                continue;
            }
            let texts = t
                .used_passages
                .iter()
                .map(|id| {
                    index
                        .passage(id)
                        .map(|p| p.display_text())
                        .ok_or_else(|| invalid(anyhow!("traces line {line}: passage {id} is not in the index")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            passages.insert(t.clip_id, texts);
        }
    }
    let generator = backends::generator(cfg.config.generator.as_deref(), cfg.config.jobs).map_err(invalid)?;
    let seed = stage_seed(cfg.config.seed, "prepare-dpo");
    let config = PairConfig {
        candidates: cfg.config.candidates,
        top_p: cfg.config.top_p,
        sim_threshold: cfg.config.sim_threshold,
        max_pairs_per_step: cfg.config.max_pairs,
        seed,
    };
    let outcome = safety_preference::build_pairs(&dataset, generator.as_ref(), &config, &passages, cfg.config.jobs)
        .map_err(invalid)?;
    let bytes = to_jsonl(&outcome.pairs).map_err(invalid)?;
    let mut prov = Provenance::new("prepare-dpo", cfg, &inputs).map_err(invalid)?;
    prov.write(&a.out, &bytes).map_err(invalid)?;
    prov.write_sidecar(
        &a.out,
        json!({
            "generator": generator.id(),
            "stage_seed": seed,
            "top_p": config.top_p,
            "candidates": config.candidates,
            "sim_threshold": config.sim_threshold,
            "max_pairs_per_step": config.max_pairs_per_step,
            "report": outcome.report,
        }),
    )
    .map_err(invalid)?;
    if let Some(first) = outcome.report.sampling_failed.first() {
        let n = outcome.report.sampling_failed.len();
        return Err(Failure::new(first.category, anyhow!("sampling failed on {n} of {} safety steps", outcome.report.safety_steps)));
    }
    tracing::info!(pairs = outcome.pairs.len(), coverage = outcome.report.coverage, "pairs written");
    Ok(())
}

#[derive(Debug, Args)]
pub struct InferArgs {
    /// Dataset whose videos and clip ids are run.
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long)]
    pub clip_embeddings: PathBuf,
    /// Trace output, one StepTrace per line.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write {clip_id, procedure, principle?, safety?} lines for evaluation.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
}

#[derive(Serialize)]
struct FailedVideo<'a> {
    video_id: &'a str,
    failed_clip: &'a str,
    completed_steps: usize,
    category: &'static str,
    error: String,
}

fn infer(a: &InferArgs, cfg: &Resolved) -> Outcome {
    let dataset = load_dataset(&a.dataset).map_err(invalid)?;
    let index = load_index(&a.index).map_err(invalid)?;
    let clips = knowledge_index::load_clip_embeddings(&a.clip_embeddings).map_err(invalid)?;
    let generator = backends::generator(cfg.config.generator.as_deref(), cfg.config.jobs).map_err(invalid)?;
    let config = EngineConfig {
        k: cfg.config.k,
        fusion_mode: cfg.config.fusion_mode,
        fusion: FusionConfig::default(),
        budget: TokenBudget {
            max_tokens: cfg.config.max_tokens,
            tokens_per_word: cfg.config.tokens_per_word,
        },
        record_timings: false,
    };
    let videos = inference_engine::videos_from_dataset(&dataset);
    let results = inference_engine::run_videos(&videos, generator.as_ref(), &index, &clips, &config, cfg.config.jobs);

    let mut traces: Vec<StepTrace> = Vec::new();
    let mut failures = Vec::new();
    let mut first_failure: Option<ErrorCategory> = None;
    for r in &results {
        match r {
            Ok(steps) => traces.extend(steps.iter().map(|(_, t)| t.clone())),
            Err(f) => {
                traces.extend(f.completed.iter().cloned());
                let category = f.error.category();
                first_failure.get_or_insert(category);
                tracing::error!(video_id = %f.video_id, clip_id = %f.failed_clip, error = %f.error, "video aborted");
                failures.push(FailedVideo {
                    video_id: &f.video_id,
                    failed_clip: &f.failed_clip,
                    completed_steps: f.completed.len(),
                    category: category.as_str(),
                    error: f.error.to_string(),
                });
            }
        }
    }
    let mut prov = Provenance::new("infer", cfg, &[&a.dataset, &a.index, &a.clip_embeddings]).map_err(invalid)?;
    prov.write(&a.out, &to_jsonl(&traces).map_err(invalid)?).map_err(invalid)?;
    if let Some(path) = &a.predictions {
        let preds: Vec<EvalRecord> = traces
            .iter()
            .map(|t| EvalRecord::from_commentary(t.clip_id.clone(), &t.output))
            .collect();
        prov.write(path, &to_jsonl(&preds).map_err(invalid)?).map_err(invalid)?;
    }
    let ret = traces
        .iter()
        .filter(|t| t.decision == labcast_core::sequence_builder::ControlToken::Ret)
        .count();
    prov.write_sidecar(
        &a.out,
        json!({
            "generator": generator.id(),
            "videos": videos.len(),
            "steps": traces.len(),
            "ret_steps": ret,
            "index_checksum": index.checksum(),
            "failures": failures,
        }),
    )
    .map_err(invalid)?;
    if let Some(category) = first_failure {
        return Err(Failure::new(category, anyhow!("{} of {} videos failed", failures.len(), videos.len())));
    }
    tracing::info!(videos = videos.len(), steps = traces.len(), "inference complete");
    Ok(())
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long = "ref")]
    pub reference: PathBuf,
    /// Comma-separated: bleu, rouge, cider, safety, meteor, bertscore.
    #[arg(long, default_value = "bleu,rouge,cider,safety")]
    pub metrics: String,
    #[arg(long)]
    pub out: PathBuf,
}

fn evaluate(a: &EvaluateArgs, cfg: &Resolved) -> Outcome {
    let metrics: Vec<Metric> = a
        .metrics
        .split(',')
        .filter(|m| !m.trim().is_empty())
        .map(str::parse)
        .collect::<Result<_, String>>()
        .map_err(|e| invalid(anyhow!(e)))?;
    let scorer = backends::scorer(cfg.config.scorer.as_deref()).map_err(invalid)?;
    let config = EvalConfig {
        metrics,
        ..EvalConfig::default()
    };
    let report = evaluation::evaluate_files(&a.pred, &a.reference, &config, scorer.as_deref())
        .map_err(|e| Failure::new(e.category(), e))?;
    let prov = Provenance::new("evaluate", cfg, &[&a.pred, &a.reference]).map_err(invalid)?;
    let mut body = serde_json::to_value(&report).map_err(invalid)?;
    body["provenance"] = serde_json::to_value(&prov).map_err(invalid)?;
    io::atomic_write(&a.out, &to_pretty(&body)).map_err(invalid)?;
    tracing::info!(n = report.n, out = %a.out.display(), "report written");
    Ok(())
}
