//! Regenerates the shipped fixtures: transcripts, passages, clip embeddings
//! and scripted generator responses.
//!
//! The generator scripts replay curation and retrieval in-process, so they
//! line up call-for-call with `labcast infer` and `labcast prepare-dpo` run
//! on the curated fixture dataset with default settings.
//!
//!     cargo run -p labcast-core --example make_fixtures -- fixtures

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use labcast_core::curation::{curate_all, AsrSegment, CurationConfig, MockRules, RuleBasedJudge, VideoMeta};
use labcast_core::domain::{ClipEmbeddingSet, Commentary, Discipline, StepRecord, Timestamp};
use labcast_core::embed::HashEmbedder;
use labcast_core::inference_engine::GeneratorResponse;
use labcast_core::io::{atomic_write, to_jsonl};
use labcast_core::knowledge_index::{
    build_index, embed_passages, fuse_query, FusionConfig, FusionMode, PassageText, DEFAULT_K,
};
use labcast_core::sequence_builder::{lexical_relevance_score, ControlToken, RELEVANCE_THRESHOLD};
use serde_json::json;

const DIM: usize = 64;

struct Video {
    id: &'static str,
    title: &'static str,
    subject: &'static str,
    discipline: Discipline,
    lines: &'static [&'static str],
}

const VIDEOS: &[Video] = &[
    Video {
        id: "chem_titration",
        title: "Acid-base titration",
        subject: "chemistry",
        discipline: Discipline::Science,
        lines: &[
            "First, rinse the burette with distilled water and then with the sodium hydroxide solution.",
            "Make sure there are no air bubbles in the tip.",
            "Next, fill the burette with sodium hydroxide up to the zero mark.",
            "Then pipette 25 millilitres of hydrochloric acid into a conical flask.",
            "Now add two drops of phenolphthalein indicator to the flask.",
            "Next, start the tight ration by adding the base slowly while swirling.",
            "Stop when the solution turns a faint pink that lasts thirty seconds.",
            "Finally, record the final burette reading and calculate the concentration.",
        ],
    },
    Video {
        id: "chem_copper",
        title: "Copper sulfate and sodium hydroxide",
        subject: "chemistry",
        discipline: Discipline::Science,
        lines: &[
            "First, pour two millilitres of copper sulfate solution into a test tube.",
            "Then add sodium hydroxide solution drop by drop.",
            "A blue precipitate of copper hydroxide forms.",
            "Next, heat the test tube gently over the flame.",
            "The blue solid turns black as copper oxide forms.",
            "Finally, let the tube cool in the rack before cleaning it.",
        ],
    },
    Video {
        id: "chem_dilution",
        title: "Diluting concentrated sulfuric acid",
        subject: "chemistry",
        discipline: Discipline::Science,
        lines: &[
            "First, put on goggles and gloves and work in the fume hood.",
            "Next, measure 90 millilitres of water into a beaker.",
            "Then slowly add 10 millilitres of concentrated sulfuric acid to the water while stirring.",
            "The beaker becomes warm because the dilution releases heat.",
            "Finally, label the beaker and let it cool on the bench.",
        ],
    },
    Video {
        id: "care_handwash",
        title: "Hand hygiene before a sterile procedure",
        subject: "nursing",
        discipline: Discipline::Healthcare,
        lines: &[
            "First, remove rings and watches from both hands.",
            "Next, wet your hands with warm water and apply soap.",
            "Then rub palms, backs and between the fingers for twenty seconds.",
            "Finally, rinse and dry the hands with a paper towel.",
        ],
    },
];

const PASSAGES: &[(&str, &str, &str)] = &[
    ("p01", "Sodium hydroxide", "Sodium hydroxide is a strong base that is corrosive to skin and eyes; wear goggles and gloves when handling its solutions."),
    ("p02", "Neutralization", "An acid and a base react to form a salt and water, for example NaOH + HCl → NaCl + H2O."),
    ("p03", "Phenolphthalein", "Phenolphthalein is an acid-base indicator that is colourless in acid and turns pink above pH 8.2."),
    ("p04", "Burette", "A burette is a graduated glass tube with a tap used to deliver measured volumes of solution in a titration."),
    ("p05", "Titration end point", "The end point of a titration is reached when the indicator changes colour permanently after a single drop."),
    ("p06", "Copper(II) hydroxide", "Copper sulfate reacts with sodium hydroxide to give a blue precipitate of copper hydroxide: CuSO4 + 2NaOH → Cu(OH)2 + Na2SO4."),
    ("p07", "Copper(II) oxide", "On heating, blue copper hydroxide decomposes into black copper oxide and water."),
    ("p08", "Heating test tubes", "Heat a test tube gently near the top of the liquid and point its mouth away from yourself and other people."),
    ("p09", "Bunsen burner", "A Bunsen burner produces an open gas flame; keep flammable materials and loose hair away from it."),
    ("p10", "Diluting acids", "Always add concentrated acid slowly to water, never water to acid, because the dilution releases a large amount of heat."),
    ("p11", "Sulfuric acid", "Concentrated sulfuric acid is corrosive and dehydrating, and causes severe burns on contact with skin."),
    ("p12", "Fume hood", "A fume hood draws vapours away from the user and should be used when working with volatile or corrosive chemicals."),
    ("p13", "Volumetric pipette", "A volumetric pipette delivers one fixed volume, such as 25 millilitres, with high accuracy."),
    ("p14", "Molarity", "Concentration in moles per litre is found from the titre volume and the known concentration of the titrant."),
    ("p15", "Hand hygiene", "Washing with soap for at least twenty seconds removes transient microorganisms from the hands."),
    ("p16", "Photosynthesis", "Plants convert carbon dioxide and water into glucose and oxygen using light energy captured by chlorophyll."),
    ("p17", "Ohm's law", "The current through a conductor is proportional to the voltage across it, V = IR."),
    ("p18", "Newton's second law", "The net force on a body equals its mass times its acceleration, F = ma."),
    ("p19", "Mitosis", "Mitosis divides one nucleus into two genetically identical nuclei in four phases."),
    ("p20", "Density", "Density is mass per unit volume and is measured in grams per cubic centimetre."),
    ("p21", "Exothermic reactions", "Exothermic processes release heat to the surroundings, so the container becomes warm."),
    ("p22", "Precipitation reactions", "A precipitate is an insoluble solid that forms when two solutions are mixed."),
    ("p23", "Laboratory goggles", "Safety goggles protect the eyes from splashes of corrosive liquids and flying glass."),
    ("p24", "Waste disposal", "Heavy metal solutions such as copper salts must be collected for proper disposal rather than poured down the sink."),
];

fn segments(lines: &[&str]) -> Vec<AsrSegment> {
    let mut t = 0u64;
    lines
        .iter()
        .enumerate()
        .map(|(i, text)| {
            // roughly 0.4 s per word, whole hundreds of milliseconds
            let dur = (text.split_whitespace().count() as u64 * 400).max(1000);
            let seg = AsrSegment {
                id: i as u32 + 1,
                start_time: Timestamp::from_millis(t),
                end_time: Timestamp::from_millis(t + dur),
                text: (*text).to_owned(),
            };
            t += dur;
            seg
        })
        .collect()
}

fn clip_embedding(e: &HashEmbedder, r: &StepRecord) -> ClipEmbeddingSet {
    let c = r.commentary();
    ClipEmbeddingSet {
        clip_id: r.clip_id.clone(),
        frame_embeddings: vec![e.embed_one(&r.procedure), e.embed_one(&c.plain_text())],
        title_embedding: e.embed_one(&r.title),
        procedure_embedding: Some(e.embed_one(&r.procedure)),
    }
}

/// The model's procedure: verbatim on odd steps, trimmed of its last sentence
/// on even steps so metrics are not trivially perfect.
fn predicted_procedure(r: &StepRecord) -> String {
    let p = r.procedure.trim();
    if r.step_index % 2 == 1 {
        return p.to_owned();
    }
    match p.trim_end_matches('.').rsplit_once(". ") {
        Some((head, _)) => format!("{head}."),
        None => p.to_owned(),
    }
}

fn write(path: PathBuf, bytes: &[u8]) {
    atomic_write(&path, bytes).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    println!("wrote {}", path.display());
}

fn main() {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "fixtures".into()));
    std::fs::create_dir_all(out.join("asr")).expect("create fixture dir");

    let mut manifest = Vec::new();
    let mut inputs = Vec::new();
    for v in VIDEOS {
        let segs = segments(v.lines);
        write(out.join("asr").join(format!("{}.jsonl", v.id)), &to_jsonl(&segs).unwrap());
        manifest.push(json!({
            "video_id": v.id, "title": v.title, "subject": v.subject,
            "discipline": v.discipline, "asr": format!("asr/{}.jsonl", v.id),
        }));
        inputs.push((
            VideoMeta {
                video_id: v.id.into(),
                title: v.title.into(),
                subject: v.subject.into(),
                discipline: v.discipline,
            },
            segs,
        ));
    }
    write(out.join("videos.jsonl"), &to_jsonl(&manifest).unwrap());

    let passages: Vec<PassageText> = PASSAGES
        .iter()
        .map(|(id, title, text)| PassageText {
            passage_id: (*id).into(),
            title: (*title).into(),
            text: (*text).into(),
        })
        .collect();
    write(out.join("passages.jsonl"), &to_jsonl(&passages).unwrap());

    let judge = RuleBasedJudge::new(MockRules::builtin());
    let curated = curate_all(&inputs, &judge, &CurationConfig::default(), 1).expect("fixture curation");
    let records: Vec<StepRecord> = curated.into_iter().flat_map(|v| v.records).collect();

    let embedder = HashEmbedder::new(DIM);
    let clips: Vec<ClipEmbeddingSet> = records.iter().map(|r| clip_embedding(&embedder, r)).collect();
    write(out.join("clip_embeddings.jsonl"), &to_jsonl(&clips).unwrap());

    let index = build_index(embed_passages(passages, &embedder, 64).unwrap()).unwrap();
    let fusion = FusionConfig::default();
    let mut script = Vec::new();
    for (r, clip) in records.iter().zip(&clips) {
        let gt = r.commentary();
        let procedure = Commentary::new(predicted_procedure(r));
        script.push(GeneratorResponse::text(procedure.render().unwrap()));
        if !gt.has_knowledge() {
            script.push(GeneratorResponse::control(ControlToken::NotRet.as_str()));
            continue;
        }
        script.push(GeneratorResponse::control(ControlToken::Ret.as_str()));
        let query = fuse_query(clip, FusionMode::VT, &fusion).unwrap();
        let ground = gt.plain_text();
        for hit in index.search(&query, DEFAULT_K).unwrap() {
            let p = index.passage(&hit.passage_id).unwrap();
            let rel = lexical_relevance_score(&ground, &p.display_text()) >= RELEVANCE_THRESHOLD;
            script.push(GeneratorResponse::control(ControlToken::relevance(rel).as_str()));
        }
        // the model drops the principle on the second video's knowledge steps
        let knowledge = if r.video_id == "chem_copper" && gt.safety().is_some() {
            Commentary::from_parts("x", None, gt.safety())
        } else {
            gt.clone()
        };
        script.push(GeneratorResponse::text(knowledge.render_knowledge().unwrap()));
    }
    write(out.join("generator_script.jsonl"), &to_jsonl(&script).unwrap());

    // one sampling response per safety step, in clip id order
    let mut safety_steps: Vec<&StepRecord> = records.iter().filter(|r| r.safety.is_some()).collect();
    safety_steps.sort_by(|a, b| a.clip_id.cmp(&b.clip_id));
    let mut samples: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for r in safety_steps {
        let base = Commentary::new(r.procedure.clone());
        let safety = r.safety.as_deref().unwrap();
        let c = |s: Option<&str>| match s {
            Some(s) => base.clone().with_safety(s).render().unwrap(),
            None => base.render().unwrap(),
        };
        let first_words: String = safety.split_whitespace().take(3).collect::<Vec<_>>().join(" ");
        samples.insert(
            r.clip_id.clone(),
            vec![
                c(Some(safety)),
                c(None),
                c(Some("Work carefully.")),
                c(Some(&first_words)),
                c(None),
                format!("{} <RET>", base.render().unwrap()),
                c(Some("Keep the bench tidy.")),
                c(Some(safety)),
            ],
        );
    }
    let sample_script: Vec<GeneratorResponse> = samples.into_values().map(GeneratorResponse::candidates).collect();
    write(out.join("sampler_script.jsonl"), &to_jsonl(&sample_script).unwrap());
    let _ = Path::new("");
}
