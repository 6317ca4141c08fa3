//! Fixtures, independent oracles and criterion checks shared by the core
//! integration tests and the CLI acceptance target.
//!
//! Each `check_*` function returns a one-line detail on success and a message
//! describing the first mismatch on failure.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};
use std::time::Instant;

use labcast_core::curation::{
    clip_records, dataset_stats, quality_checks, segment_steps, validate_plan, validate_segments, AsrSegment,
    CurationError, PlanViolation, StepPlan, VideoMeta,
};
use labcast_core::domain::{ClipEmbeddingSet, Commentary, Discipline, StepRecord, Timestamp};
use labcast_core::evaluation::{
    bleu, cider, evaluate, rouge_l, safety_stats, EvalConfig, EvalRecord, ROUGE_BETA,
};
use labcast_core::inference_engine::{
    run_video, EngineConfig, GeneratorResponse, Phase, ScriptedGenerator, VideoJob,
};
use labcast_core::judge::{FnJudge, JudgeError, JudgeRequest, ScriptedJudge};
use labcast_core::knowledge_index::{
    build_index, fuse_query, normalize, FusionConfig, FusionMode, KnowledgeIndex, RawPassage,
};
use labcast_core::safety_preference::{build_pairs, pairs_for_candidates, safety_rule, FailReason, PairConfig};
use labcast_core::sequence_builder::{
    build_corpus, supervision_mask, validate_sequence, ControlToken, SegmentKind, SequenceConfig, SequenceKind,
    RELEVANCE_THRESHOLD,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

pub const METRIC_PAIRS: &str = include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/../core/tests/data/metric_pairs.json"));
pub const METRIC_EXPECTED: &str = include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/../core/tests/data/metric_expected.json"));
pub const STATS_RECORDS: &str = include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/../core/tests/data/stats_records.csv"));
pub const STATS_EXPECTED: &str = include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/../core/tests/data/stats_expected.json"));

pub fn strings(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

pub fn random_vec(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f32> {
    (0..dim).map(|_| rng.gen_range(-1.0f32..1.0)).collect()
}

pub fn record(video: &str, step: u32, procedure: &str, principle: Option<&str>, safety: Option<&str>) -> StepRecord {
    let start = u64::from(step - 1) * 10_000;
    StepRecord {
        video_id: video.into(),
        clip_id: format!("{video}_{step:03}"),
        step_index: step,
        title: "Acid-base titration".into(),
        subject: "chemistry".into(),
        discipline: Discipline::Science,
        start_time: Timestamp::from_millis(start),
        end_time: Timestamp::from_millis(start + 8_000),
        procedure: procedure.into(),
        principle: principle.map(Into::into),
        safety: safety.map(Into::into),
    }
}

pub fn clip_set(clip_id: &str, frames: Vec<Vec<f32>>, title: Vec<f32>) -> ClipEmbeddingSet {
    ClipEmbeddingSet {
        clip_id: clip_id.into(),
        frame_embeddings: frames,
        title_embedding: title,
        procedure_embedding: None,
    }
}

// ---------------------------------------------------------------- retrieval

fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(&x, &y)| f64::from(x) * f64::from(y)).sum();
    let na: f64 = a.iter().map(|&x| f64::from(x).powi(2)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|&x| f64::from(x).powi(2)).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Full sort of every passage by raw cosine, ties by ascending id.
pub fn brute_force_top_k(passages: &[RawPassage], query: &[f32], k: usize) -> Vec<String> {
    let mut scored: Vec<(f64, &str)> = passages.iter().map(|p| (cosine(&p.embedding, query), p.passage_id.as_str())).collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
    scored.into_iter().take(k).map(|(_, id)| id.to_owned()).collect()
}

/// 1,000 passages of dimension 32. The last ten are exact multiples of the
/// first ten, so they tie on every query.
pub fn synthetic_passages(seed: u64) -> Vec<RawPassage> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<RawPassage> = (0..990)
        .map(|i| RawPassage {
            passage_id: format!("p{i:04}"),
            title: String::new(),
            text: format!("passage {i}"),
            embedding: random_vec(&mut rng, 32),
        })
        .collect();
    for i in 0..10 {
        let embedding = out[i].embedding.iter().map(|x| x * 2.0).collect();
        out.push(RawPassage {
            passage_id: format!("p{:04}", 990 + i),
            title: String::new(),
            text: format!("copy of passage {i}"),
            embedding,
        });
    }
    out
}

pub fn check_retrieval_oracle() -> Check {
    let started = Instant::now();
    let passages = synthetic_passages(7);
    let index = build_index(passages.clone()).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let queries: Vec<Vec<f32>> = (0..50)
        .map(|i| if i < 5 { passages[i].embedding.clone() } else { random_vec(&mut rng, 32) })
        .collect();
    let mut compared = 0;
    for (qi, q) in queries.iter().enumerate() {
        let unit = normalize(q).map_err(|e| e.to_string())?;
        for k in [1, 3, 5, 8] {
            let got: Vec<String> = index
                .search(&unit, k)
                .map_err(|e| e.to_string())?
                .into_iter()
                .map(|h| h.passage_id)
                .collect();
            let want = brute_force_top_k(&passages, q, k);
            ensure!(got == want, "query {qi}, k={k}: index {got:?} vs oracle {want:?}");
            compared += 1;
        }
    }
    let elapsed = started.elapsed();
    ensure!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}");
    Ok(format!("{compared} id lists identical, {:.0} ms", elapsed.as_secs_f64() * 1e3))
}

// ------------------------------------------------------------------- fusion

fn close(a: &[f32], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(&x, &y)| (f64::from(x) - y).abs() <= tol)
}

fn l2(v: &[f32]) -> f64 {
    v.iter().map(|&x| f64::from(x).powi(2)).sum::<f64>().sqrt()
}

pub fn check_fusion() -> Check {
    let cfg = FusionConfig::default();
    ensure!(cfg.visual_weight == 0.7 && cfg.text_weight == 0.3, "default weights are {cfg:?}");

    // frames average to (1/√2, 1/√2, 0); title normalizes to (0, 0, 1)
    let a = clip_set("a", vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]], vec![0.0, 0.0, 2.0]);
    let vt = fuse_query(&a, FusionMode::VT, &cfg).map_err(|e| e.to_string())?;
    let want = [0.6499336836196814, 0.6499336836196814, 0.3939192985791677];
    ensure!(close(&vt, &want, 1e-6), "VT on orthogonal inputs: {:?}", &vt[..]);
    let v = fuse_query(&a, FusionMode::V, &cfg).map_err(|e| e.to_string())?;
    let h = std::f64::consts::FRAC_1_SQRT_2;
    ensure!(close(&v, &[h, h, 0.0], 1e-6), "V mode: {:?}", &v[..]);

    // 0.7·(0.6, 0.8) + 0.3·(1, 0) = (0.72, 0.56)
    let b = clip_set("b", vec![vec![3.0, 4.0]], vec![5.0, 0.0]);
    let vt = fuse_query(&b, FusionMode::VT, &cfg).map_err(|e| e.to_string())?;
    ensure!(close(&vt, &[0.7893522173763262, 0.6139406135149205], 1e-6), "VT on 2-d inputs: {:?}", &vt[..]);

    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..20 {
        let u = random_vec(&mut rng, 16);
        let unit = normalize(&u).map_err(|e| e.to_string())?;
        let mut c = clip_set("s", vec![u.clone(), u.clone(), u.clone()], u.clone());
        c.procedure_embedding = Some(u.clone());
        for mode in [FusionMode::V, FusionMode::VT, FusionMode::VTP] {
            let q = fuse_query(&c, mode, &cfg).map_err(|e| e.to_string())?;
            let want: Vec<f64> = unit.iter().map(|&x| f64::from(x)).collect();
            ensure!(close(&q, &want, 1e-6), "equal inputs under {mode} changed the direction");
        }
    }

    let mut worst = 0.0f64;
    for i in 0..1000 {
        let dim = rng.gen_range(2..=64);
        let frames = (0..rng.gen_range(1..=8)).map(|_| random_vec(&mut rng, dim)).collect();
        let mut c = clip_set("r", frames, random_vec(&mut rng, dim));
        c.procedure_embedding = Some(random_vec(&mut rng, dim));
        let mode = [FusionMode::V, FusionMode::VT, FusionMode::VTP][i % 3];
        match fuse_query(&c, mode, &cfg) {
            Ok(q) => worst = worst.max((l2(&q) - 1.0).abs()),
            Err(e) => return Err(format!("random input {i}: {e}")),
        }
    }
    ensure!(worst < 1e-5, "norm deviates by {worst}");
    Ok(format!("hand vectors within 1e-6, max |‖q‖-1| = {worst:.1e} over 1000 inputs"))
}

// ---------------------------------------------------------------- sequences

/// Ten steps of one video; steps 2, 5, 7 and 10 carry knowledge.
pub fn ten_step_video() -> Vec<StepRecord> {
    (1..=10)
        .map(|i| {
            let (principle, safety) = match i {
                2 => (Some("Phenolphthalein turns pink in base."), None),
                5 => (None, Some("Wear goggles when handling sodium hydroxide.")),
                7 => (Some("NaOH + HCl → NaCl + H2O"), Some("Add acid to water slowly.")),
                10 => (Some("Heat speeds up the reaction."), None),
                _ => (None, None),
            };
            record("tv", i, &format!("Carry out step number {i} of the titration."), principle, safety)
        })
        .collect()
}

pub fn labelled_index(n: usize, dim: usize, seed: u64) -> KnowledgeIndex {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let passages = (1..=n)
        .map(|i| RawPassage {
            passage_id: format!("p{i:02}"),
            title: format!("P{i:02}"),
            text: format!("Reference passage number {i}."),
            embedding: random_vec(&mut rng, dim),
        })
        .collect();
    build_index(passages).expect("valid synthetic index")
}

pub fn random_clips(records: &[StepRecord], dim: usize, seed: u64) -> BTreeMap<String, ClipEmbeddingSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    records
        .iter()
        .map(|r| {
            let frames = (0..3).map(|_| random_vec(&mut rng, dim)).collect();
            (r.clip_id.clone(), clip_set(&r.clip_id, frames, random_vec(&mut rng, dim)))
        })
        .collect()
}

/// The mock judge's score for the passage titled `Pnn`.
pub fn mock_score(passage_number: u32) -> u8 {
    ((passage_number * 7) % 5 + 1) as u8
}

fn passage_number(text: &str) -> Option<u32> {
    let rest = text.split("Document: P").nth(1).or_else(|| text.strip_prefix('P'))?;
    rest.get(..2)?.parse().ok()
}

pub fn scoring_judge() -> impl labcast_core::judge::Judge {
    FnJudge::new("mock:by-passage", |req: &JudgeRequest| {
        passage_number(&req.input)
            .map(|n| mock_score(n).to_string())
            .ok_or_else(|| JudgeError::Transport(format!("no passage in {:?}", req.input)))
    })
}

pub fn check_sequence_law() -> Check {
    let dataset = ten_step_video();
    let index = labelled_index(12, 8, 3);
    let clips = random_clips(&dataset, 8, 4);
    let config = SequenceConfig {
        k: 3,
        ..SequenceConfig::default()
    };
    let serial = build_corpus(&dataset, &index, &clips, &scoring_judge(), &config, 1).map_err(|e| e.to_string())?;
    let parallel = build_corpus(&dataset, &index, &clips, &scoring_judge(), &config, 4).map_err(|e| e.to_string())?;

    let c = &serial.manifest.counts;
    ensure!(serial.sequences.len() == 18, "{} sequences, expected 4·3 + 6 = 18", serial.sequences.len());
    ensure!(c.not_ret == 6 && c.ret == 12, "counts {c:?}");

    let mut rel = 0;
    for seq in &serial.sequences {
        let kind = validate_sequence(seq).map_err(|e| format!("{}: {e}", seq.clip_id))?;
        if kind != SequenceKind::NotRet {
            let n = passage_number(&seq.segments[5].value).ok_or("passage segment without a title")?;
            let want = ControlToken::relevance(mock_score(n) >= RELEVANCE_THRESHOLD);
            ensure!(
                seq.segments[6].value == want.as_str(),
                "{}: P{n:02} scored {} but labelled {}",
                seq.clip_id,
                mock_score(n),
                seq.segments[6].value
            );
            rel += usize::from(want == ControlToken::Rel);
        }
        for (i, (seg, masked)) in seq.segments.iter().zip(supervision_mask(seq)).enumerate() {
            let want = match seg.kind {
                SegmentKind::VideoRef | SegmentKind::Passage => false,
                SegmentKind::Control => true,
                SegmentKind::Text => i >= 3,
            };
            ensure!(masked == want, "{} segment {i} ({:?}) mask {masked}", seq.clip_id, seg.kind);
        }
    }
    ensure!(rel == c.ret_rel, "manifest says {} REL, found {rel}", c.ret_rel);

    let a = serial.to_jsonl().map_err(|e| e.to_string())?;
    let b = parallel.to_jsonl().map_err(|e| e.to_string())?;
    ensure!(a == b, "serial and parallel corpora differ");
    let again = build_corpus(&dataset, &index, &clips, &scoring_judge(), &config, 1).map_err(|e| e.to_string())?;
    ensure!(again.to_jsonl().map_err(|e| e.to_string())? == a, "second run differs");
    Ok(format!("18 sequences ({} REL, {} NOT REL), masks exact, byte-identical", c.ret_rel, c.ret_not_rel))
}

// ------------------------------------------------------------------- traces

/// Four passages on the basis vectors; the trace clip ranks them a, b, c, d.
pub fn basis_index() -> KnowledgeIndex {
    let names = ["a", "b", "c", "d"];
    let passages = names
        .iter()
        .enumerate()
        .map(|(i, n)| {
            let mut e = vec![0.0; 4];
            e[i] = 1.0;
            RawPassage {
                passage_id: (*n).into(),
                title: n.to_uppercase(),
                text: format!("Passage about {n}."),
                embedding: e,
            }
        })
        .collect();
    build_index(passages).expect("basis index")
}

pub fn trace_script() -> Vec<GeneratorResponse> {
    vec![
        GeneratorResponse::text("<Procedure> Rinse the burette."),
        GeneratorResponse::control("<NOT RET>"),
        GeneratorResponse::text("<Procedure> Add the indicator."),
        GeneratorResponse::control("<RET>"),
        GeneratorResponse::control("<REL>"),
        GeneratorResponse::control("<NOT REL>"),
        GeneratorResponse::control("<REL>"),
        GeneratorResponse::text("<Principle> Phenolphthalein turns pink in base."),
        GeneratorResponse::text("<Procedure> Heat the tube."),
        GeneratorResponse::control("<RET>"),
        GeneratorResponse::control("<NOT REL>"),
        GeneratorResponse::control("<NOT REL>"),
        GeneratorResponse::control("<NOT REL>"),
        GeneratorResponse::text("<Safety> Point the tube away from people."),
    ]
}

pub fn check_trace_conformance() -> Check {
    let index = basis_index();
    let clips: BTreeMap<String, ClipEmbeddingSet> = (1..=3)
        .map(|i| {
            let id = format!("v_{i:03}");
            let set = clip_set(&id, vec![vec![4.0, 3.0, 2.0, 1.0]], vec![4.0, 3.0, 2.0, 1.0]);
            (id, set)
        })
        .collect();
    let video = VideoJob {
        video_id: "v".into(),
        title: "Indicator test".into(),
        clips: clips.keys().cloned().collect(),
    };
    let generator = ScriptedGenerator::new(trace_script());
    let config = EngineConfig {
        k: 3,
        ..EngineConfig::default()
    };
    let steps = run_video(&video, &generator, &index, &clips, &config).map_err(|f| f.error.to_string())?;
    let requests = generator.requests();
    ensure!(generator.remaining() == 0, "{} scripted responses unused", generator.remaining());

    let of = |clip: &str| requests.iter().filter(|r| r.clip_ref == clip).collect::<Vec<_>>();
    let phases = |clip: &str| of(clip).iter().map(|r| r.phase).collect::<Vec<_>>();

    let (_, t1) = &steps[0];
    ensure!(t1.decision == ControlToken::NotRet && t1.candidates.is_empty(), "step 1 trace {t1:?}");
    ensure!(phases("v_001") == [Phase::Procedure, Phase::Decide], "step 1 phases {:?}", phases("v_001"));

    let (_, t2) = &steps[1];
    let labels: Vec<(&str, ControlToken)> = t2.candidates.iter().map(|c| (c.passage_id.as_str(), c.label)).collect();
    ensure!(
        labels == [("a", ControlToken::Rel), ("b", ControlToken::NotRel), ("c", ControlToken::Rel)],
        "step 2 candidates {labels:?}"
    );
    ensure!(t2.used_passages == ["a", "c"], "step 2 used {:?}", t2.used_passages);
    let r2 = of("v_002");
    let judged: Vec<&str> = r2.iter().filter(|r| r.phase == Phase::Judge).filter_map(|r| r.passage.as_deref()).collect();
    ensure!(
        judged == ["A\nPassage about a.", "B\nPassage about b.", "C\nPassage about c."],
        "step 2 judged {judged:?}"
    );
    let final2 = r2.last().ok_or("no step 2 requests")?;
    ensure!(
        final2.phase == Phase::Final
            && final2.partial
                == strings(&[
                    "<Procedure> Add the indicator.",
                    "<RET>",
                    "Passage 1: A\nPassage about a.",
                    "Passage 2: C\nPassage about c.",
                ]),
        "step 2 final request {:?}",
        final2.partial
    );

    let (out3, t3) = &steps[2];
    ensure!(t3.decision == ControlToken::Ret && t3.used_passages.is_empty(), "step 3 trace {t3:?}");
    let final3 = of("v_003").last().cloned().ok_or("no step 3 requests")?;
    ensure!(final3.partial == strings(&["<Procedure> Heat the tube.", "<RET>"]), "step 3 final {:?}", final3.partial);
    ensure!(out3.safety() == Some("Point the tube away from people."), "step 3 output {out3:?}");

    let judge_on_not_ret = requests.iter().filter(|r| r.phase == Phase::Judge && r.clip_ref == "v_001").count();
    ensure!(judge_on_not_ret == 0, "{judge_on_not_ret} judge calls on the NOT RET step");

    for (i, (_, t)) in steps.iter().enumerate() {
        let want: Vec<String> = steps[..i].iter().map(|(c, _)| c.render().unwrap()).collect();
        for r in of(&t.clip_id) {
            ensure!(r.preceding == want, "{} {} saw preceding {:?}, expected {want:?}", t.clip_id, r.phase, r.preceding);
        }
    }
    Ok("NOT RET, mixed REL and empty S_rel paths match; context threads generated outputs".into())
}

// ---------------------------------------------------------------------- dpo

pub const DPO_REFERENCE: &str = "Wear goggles because sodium hydroxide is corrosive.";

/// Two passing candidates, one absent, one incorrect, one malformed and a duplicate.
pub fn dpo_candidates() -> Vec<String> {
    strings(&[
        "<Procedure> Add the sodium hydroxide. <Safety> Wear goggles, the base is corrosive.",
        "<Procedure> Add the sodium hydroxide.",
        "<Procedure> Add the sodium hydroxide. <Safety> Wear goggles because sodium hydroxide is corrosive.",
        "<Procedure> Add the sodium hydroxide. <Safety> Keep the bench tidy.",
        "Add the sodium hydroxide <Safety>",
        "<Procedure> Add the sodium hydroxide.",
    ])
}

pub fn check_dpo_soundness() -> Check {
    let config = PairConfig::default();
    ensure!(config.top_p == 0.9 && config.max_pairs_per_step == 4, "defaults {config:?}");
    let cands = dpo_candidates();
    let reasons: Vec<Option<FailReason>> = cands.iter().map(|c| safety_rule(c, DPO_REFERENCE, config.sim_threshold).reason).collect();
    ensure!(
        reasons
            == [None, Some(FailReason::Absent), None, Some(FailReason::Incorrect), Some(FailReason::Malformed), Some(FailReason::Absent)],
        "fixture classification {reasons:?}"
    );

    // 2 distinct passes × 2 distinct non-malformed fails, capped
    for (cap, want) in [(1, 1), (3, 3), (4, 4), (10, 4)] {
        let cfg = PairConfig {
            max_pairs_per_step: cap,
            ..config
        };
        let pairs = pairs_for_candidates("c", "prompt", &cands, DPO_REFERENCE, &cfg);
        ensure!(pairs.len() == want, "cap {cap}: {} pairs, expected {want}", pairs.len());
        for p in &pairs {
            ensure!(safety_rule(&p.chosen, DPO_REFERENCE, cfg.sim_threshold).pass, "chosen fails: {}", p.chosen);
            let r = safety_rule(&p.rejected, DPO_REFERENCE, cfg.sim_threshold);
            ensure!(!r.pass && r.reason != Some(FailReason::Malformed), "rejected {:?}: {}", r.reason, p.rejected);
        }
    }
    let pairs = pairs_for_candidates("c", "prompt", &cands, DPO_REFERENCE, &config);
    let order: Vec<(usize, usize)> = pairs
        .iter()
        .map(|p| {
            let pos = |s: &str| cands.iter().position(|c| c == s).unwrap();
            (pos(&p.chosen), pos(&p.rejected))
        })
        .collect();
    ensure!(order == [(2, 1), (2, 3), (0, 1), (0, 3)], "pair order {order:?}");

    // three steps through the sampler: 3×3 capped at 4, 1×2 = 2, and no passes
    let dataset = vec![
        record("d", 1, "Add the sodium hydroxide.", None, Some(DPO_REFERENCE)),
        record("d", 2, "Swirl the flask.", None, None),
        record("d", 3, "Heat the flask.", None, Some("Point the flask away from people.")),
        record("e", 1, "Pour the acid.", None, Some("Add acid to water slowly.")),
    ];
    let s = |safety: Option<&str>| match safety {
        Some(t) => format!("<Procedure> Step. <Safety> {t}"),
        None => "<Procedure> Step.".to_owned(),
    };
    // duplicates pad each draw to the configured eight candidates
    let draw = |mut c: Vec<String>| {
        while c.len() < 8 {
            c.push(c[0].clone());
        }
        GeneratorResponse::candidates(c)
    };
    let script = vec![
        // d_001
        draw(vec![
            s(Some(DPO_REFERENCE)),
            s(Some("Wear goggles, sodium hydroxide is corrosive.")),
            s(Some("Goggles because hydroxide is corrosive.")),
            s(None),
            s(Some("Tidy up.")),
            s(Some("Label the flask.")),
        ]),
        // d_003
        draw(vec![s(Some("Point the flask away from people.")), s(None), s(Some("Use a rack."))]),
        // e_001
        draw(vec![s(None), s(Some("Stir well."))]),
    ];
    let generator = ScriptedGenerator::new(script);
    let outcome = build_pairs(&dataset, &generator, &config, &BTreeMap::new(), 1).map_err(|e| e.to_string())?;
    let per_clip = |clip: &str| outcome.pairs.iter().filter(|p| p.clip_id == clip).count();
    ensure!(
        (per_clip("d_001"), per_clip("d_003"), per_clip("e_001")) == (4, 2, 0),
        "pairs per step {:?}",
        (per_clip("d_001"), per_clip("d_003"), per_clip("e_001"))
    );
    ensure!(outcome.report.no_contrast == ["e_001"], "no contrast {:?}", outcome.report.no_contrast);
    let sampled = generator.requests();
    ensure!(
        sampled.iter().all(|r| r.phase == Phase::Sample && r.top_p == Some(0.9) && r.count == Some(8)),
        "sampling requests {sampled:?}"
    );
    Ok(format!("{} pairs sound; cap law holds; top_p 0.9 sent", outcome.pairs.len()))
}

// ------------------------------------------------------------------ metrics

pub fn metric_fixture() -> (Vec<String>, Vec<String>) {
    let v: serde_json::Value = serde_json::from_str(METRIC_PAIRS).expect("metric fixture");
    v.as_array()
        .expect("array of pairs")
        .iter()
        .map(|p| (p["pred"].as_str().unwrap().to_owned(), p["ref"].as_str().unwrap().to_owned()))
        .unzip()
}

/// Independent reimplementations used as oracles.
pub mod oracle {
    use std::collections::HashMap;

    pub fn tokens(s: &str) -> Vec<String> {
        let lower = s.to_lowercase();
        let mut out: Vec<String> = Vec::new();
        let mut in_word = false;
        for ch in lower.chars() {
            if ch.is_alphanumeric() {
                if in_word {
                    out.last_mut().unwrap().push(ch);
                } else {
                    out.push(ch.to_string());
                }
                in_word = true;
            } else {
                in_word = false;
                if !ch.is_whitespace() {
                    out.push(ch.to_string());
                }
            }
        }
        out
    }

    fn grams(t: &[String], n: usize) -> HashMap<Vec<String>, usize> {
        let mut m = HashMap::new();
        for i in 0..(t.len() + 1).saturating_sub(n) {
            *m.entry(t[i..i + n].to_vec()).or_insert(0) += 1;
        }
        m
    }

    pub fn bleu(preds: &[String], refs: &[String], n: usize) -> f64 {
        let pt: Vec<_> = preds.iter().map(|s| tokens(s)).collect();
        let rt: Vec<_> = refs.iter().map(|s| tokens(s)).collect();
        let mut log_sum = 0.0;
        for k in 1..=n {
            let (mut hit, mut all) = (0, 0);
            for (p, r) in pt.iter().zip(&rt) {
                let rg = grams(r, k);
                for (g, c) in grams(p, k) {
                    hit += c.min(*rg.get(&g).unwrap_or(&0));
                    all += c;
                }
            }
            if hit == 0 {
                return 0.0;
            }
            log_sum += (hit as f64 / all as f64).ln();
        }
        let c: usize = pt.iter().map(Vec::len).sum();
        let r: usize = rt.iter().map(Vec::len).sum();
        let bp = if c > r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
        100.0 * bp * (log_sum / n as f64).exp()
    }

    fn lcs(a: &[String], b: &[String]) -> usize {
        let mut t = vec![vec![0usize; b.len() + 1]; a.len() + 1];
        for i in 1..=a.len() {
            for j in 1..=b.len() {
                t[i][j] = if a[i - 1] == b[j - 1] { t[i - 1][j - 1] + 1 } else { t[i - 1][j].max(t[i][j - 1]) };
            }
        }
        t[a.len()][b.len()]
    }

    pub fn rouge_l(preds: &[String], refs: &[String], beta: f64) -> f64 {
        let mut sum = 0.0;
        for (p, r) in preds.iter().zip(refs) {
            let (p, r) = (tokens(p), tokens(r));
            let l = lcs(&p, &r) as f64;
            if l > 0.0 {
                let (prec, rec) = (l / p.len() as f64, l / r.len() as f64);
                sum += (1.0 + beta * beta) * prec * rec / (rec + beta * beta * prec);
            }
        }
        100.0 * sum / preds.len() as f64
    }

    pub fn cider(preds: &[String], refs: &[String]) -> f64 {
        let pt: Vec<_> = preds.iter().map(|s| tokens(s)).collect();
        let rt: Vec<_> = refs.iter().map(|s| tokens(s)).collect();
        let big_n = refs.len() as f64;
        let mut score = 0.0;
        for n in 1..=4 {
            let rg: Vec<_> = rt.iter().map(|r| grams(r, n)).collect();
            let mut df: HashMap<Vec<String>, f64> = HashMap::new();
            for g in &rg {
                for k in g.keys() {
                    *df.entry(k.clone()).or_insert(0.0) += 1.0;
                }
            }
            let vec = |g: &HashMap<Vec<String>, usize>| -> HashMap<Vec<String>, f64> {
                g.iter()
                    .map(|(k, &tf)| (k.clone(), tf as f64 * (big_n / df.get(k).copied().unwrap_or(1.0).max(1.0)).ln()))
                    .collect()
            };
            for (p, r) in pt.iter().zip(&rg) {
                let (a, b) = (vec(&grams(p, n)), vec(r));
                let dot: f64 = a.iter().map(|(k, x)| x * b.get(k).unwrap_or(&0.0)).sum();
                let na = a.values().map(|x| x * x).sum::<f64>().sqrt();
                let nb = b.values().map(|x| x * x).sum::<f64>().sqrt();
                if na > 0.0 && nb > 0.0 {
                    score += dot / (na * nb);
                }
            }
        }
        10.0 * score / (4.0 * preds.len() as f64)
    }
}

fn within(name: &str, got: f64, want: f64, tol: f64) -> Result<(), String> {
    if (got - want).abs() <= tol {
        Ok(())
    } else {
        Err(format!("{name}: {got} vs {want} (tolerance {tol})"))
    }
}

pub fn check_metric_oracles() -> Check {
    let (preds, refs) = metric_fixture();
    ensure!(preds.len() == 20, "fixture has {} pairs", preds.len());
    let frozen: serde_json::Value = serde_json::from_str(METRIC_EXPECTED).expect("frozen metric values");

    let b = bleu(&preds, &refs, 4).map_err(|e| e.to_string())?;
    let r = rouge_l(&preds, &refs, ROUGE_BETA).map_err(|e| e.to_string())?;
    let c = cider(&preds, &refs).map_err(|e| e.to_string())?;
    for n in 1..=4 {
        within(&format!("BLEU-{n} vs oracle"), b[n - 1], oracle::bleu(&preds, &refs, n), 1e-6)?;
        within(&format!("BLEU-{n} vs nltk"), b[n - 1], frozen["bleu"][n - 1].as_f64().unwrap(), 1e-6)?;
    }
    within("ROUGE-L vs oracle", r, oracle::rouge_l(&preds, &refs, ROUGE_BETA), 1e-6)?;
    within("ROUGE-L vs pycocoevalcap", r, frozen["rouge_l"].as_f64().unwrap(), 1e-6)?;
    within("CIDEr vs oracle", c, oracle::cider(&preds, &refs), 1e-4)?;
    within("CIDEr vs python", c, frozen["cider"].as_f64().unwrap(), 1e-4)?;

    let identity: Vec<EvalRecord> = refs
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let c = if i % 3 == 0 { Commentary::new(t.clone()).with_safety("Wear goggles.") } else { Commentary::new(t.clone()) };
            EvalRecord::from_commentary(format!("c{i:02}"), &c)
        })
        .collect();
    let report = evaluate(&identity, &identity, &EvalConfig::default(), None).map_err(|e| e.to_string())?;
    within("identity BLEU-4", report.bleu4.unwrap_or(f64::NAN), 100.0, 1e-9)?;
    within("identity ROUGE-L", report.rouge_l.unwrap_or(f64::NAN), 100.0, 1e-9)?;
    within("identity safety precision", report.safety_precision.unwrap_or(f64::NAN), 1.0, 0.0)?;

    let with = |s: bool| if s { Commentary::new("Step.").with_safety("Careful.") } else { Commentary::new("Step.") };
    let preds4 = [with(true), with(true), with(false), with(false)];
    let refs4 = [with(true), with(false), with(true), with(false)];
    let st = safety_stats(&preds4, &refs4).map_err(|e| e.to_string())?;
    ensure!(st.precision == 0.5 && st.frequency == 0.5, "4-pair safety stats {st:?}");
    Ok(format!("BLEU-4 {:.4}, ROUGE-L {r:.4}, CIDEr {c:.4} agree with both oracles", b[3]))
}

// ----------------------------------------------------------------- curation

pub fn segments(n: u32) -> Vec<AsrSegment> {
    (1..=n)
        .map(|id| AsrSegment {
            id,
            start_time: Timestamp::from_millis(u64::from(id - 1) * 3_000),
            end_time: Timestamp::from_millis(u64::from(id - 1) * 3_000 + 2_500),
            text: format!("segment {id} words here"),
        })
        .collect()
}

pub fn plan(steps: &[&[u32]]) -> Vec<StepPlan> {
    steps
        .iter()
        .enumerate()
        .map(|(i, ids)| StepPlan {
            step: i as u32 + 1,
            procedure: format!("Do step {}.", i + 1),
            asr_ids: ids.to_vec(),
        })
        .collect()
}

/// Builds records from the stats table; word counts become runs of "w".
pub fn stats_records() -> Vec<StepRecord> {
    let words = |n: usize| vec!["w"; n].join(" ");
    STATS_RECORDS
        .lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            let num = |i: usize| f[i].parse::<u64>().expect("numeric column");
            let opt = |i: usize| (num(i) > 0).then(|| words(num(i) as usize));
            StepRecord {
                video_id: f[0].into(),
                clip_id: format!("{}_{:03}", f[0], num(2)),
                step_index: num(2) as u32,
                title: "t".into(),
                subject: "s".into(),
                discipline: f[1].parse().expect("discipline"),
                start_time: Timestamp::from_millis(num(3)),
                end_time: Timestamp::from_millis(num(4)),
                procedure: words(num(5) as usize),
                principle: opt(6),
                safety: opt(7),
            }
        })
        .collect()
}

fn compare_json(path: &str, got: &serde_json::Value, want: &serde_json::Value) -> Result<usize, String> {
    use serde_json::Value;
    match (got, want) {
        (Value::Object(g), Value::Object(w)) => {
            let (mut gk, mut wk): (Vec<_>, Vec<_>) = (g.keys().collect(), w.keys().collect());
            gk.sort();
            wk.sort();
            if gk != wk {
                return Err(format!("{path}: fields {gk:?} vs {wk:?}"));
            }
            w.iter().map(|(k, v)| compare_json(&format!("{path}.{k}"), &g[k], v)).sum()
        }
        (Value::Number(g), Value::Number(w)) => {
            let (g, w) = (g.as_f64().unwrap(), w.as_f64().unwrap());
            within(path, g, w, 1e-9).map(|_| 1)
        }
        (g, w) if g == w => Ok(1),
        (g, w) => Err(format!("{path}: {g} vs {w}")),
    }
}

pub fn check_curation_validators() -> Check {
    let segs = segments(8);
    let bad = plan(&[&[1], &[2, 3, 7, 5], &[4], &[6], &[8]]);
    ensure!(
        matches!(validate_plan(&bad, &segs), Err(PlanViolation::NotConsecutive { step: 2, .. })),
        "[2,3,7,5] accepted: {:?}",
        validate_plan(&bad, &segs)
    );
    let reply = serde_json::json!({ "summary": "s", "steps": bad }).to_string();
    let judge = ScriptedJudge::new([reply.clone(), reply]);
    ensure!(
        matches!(segment_steps(&segs, "chemistry", &judge), Err(CurationError::Segmentation { .. })),
        "segment_steps accepted [2,3,7,5]"
    );
    let repeated = plan(&[&[1, 2], &[2, 3], &[4, 5, 6, 7, 8]]);
    ensure!(
        matches!(validate_plan(&repeated, &segs), Err(PlanViolation::Repeated { id: 2 })),
        "repeated id accepted"
    );
    let mut dup = segments(4);
    dup[2].id = 2;
    ensure!(validate_segments(&dup).is_err(), "duplicate segment id accepted");

    let good = plan(&[&[1, 2], &[3], &[4, 5, 6], &[7, 8]]);
    validate_plan(&good, &segs).map_err(|e| e.to_string())?;
    let meta = VideoMeta {
        video_id: "v".into(),
        title: "T".into(),
        subject: "chemistry".into(),
        discipline: Discipline::Science,
    };
    let records = clip_records(&good, &segs, &meta).map_err(|e| e.to_string())?;
    for w in records.windows(2) {
        ensure!(
            w[0].step_index + 1 == w[1].step_index && w[0].end_time <= w[1].start_time,
            "clips {} and {} overlap or are out of order",
            w[0].clip_id,
            w[1].clip_id
        );
    }
    ensure!(quality_checks(&records).overlaps.is_empty(), "quality check reports overlaps");

    let stats = dataset_stats(&stats_records()).map_err(|e| e.to_string())?;
    let got = serde_json::to_value(&stats).expect("stats serialize");
    let want: serde_json::Value = serde_json::from_str(STATS_EXPECTED).expect("frozen stats");
    let fields = compare_json("stats", &got, &want)?;
    Ok(format!("[2,3,7,5] and duplicates rejected; {} clips ordered; {fields} stats fields match", records.len()))
}

pub fn step_seeds_differ(clips: &[&str]) -> bool {
    let seeds: HashMap<u64, &str> = clips.iter().map(|c| (labcast_core::safety_preference::step_seed(0, c), *c)).collect();
    seeds.len() == clips.len()
}
