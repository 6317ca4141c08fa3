mod common;

use common::*;
use labcast_core::sequence_builder::{build_corpus, validate_sequence, SequenceConfig, SequenceError, SequenceKind};

#[test]
fn ten_step_corpus_law() {
    check_sequence_law().unwrap();
}

#[test]
fn sequences_follow_dataset_order() {
    let dataset = ten_step_video();
    let corpus = build_corpus(
        &dataset,
        &labelled_index(12, 8, 3),
        &random_clips(&dataset, 8, 4),
        &scoring_judge(),
        &SequenceConfig { k: 3, ..SequenceConfig::default() },
        1,
    )
    .unwrap();
    let clips: Vec<&str> = corpus.sequences.iter().map(|s| s.clip_id.as_str()).collect();
    let mut sorted = clips.clone();
    sorted.sort();
    assert_eq!(clips, sorted);
    assert_eq!(corpus.manifest.k, 3);
    assert_eq!(corpus.manifest.control_tokens, ["<RET>", "<NOT RET>", "<REL>", "<NOT REL>"]);
}

#[test]
fn preceding_context_is_ground_truth() {
    let dataset = ten_step_video();
    let corpus = build_corpus(
        &dataset,
        &labelled_index(12, 8, 3),
        &random_clips(&dataset, 8, 4),
        &scoring_judge(),
        &SequenceConfig { k: 3, ..SequenceConfig::default() },
        1,
    )
    .unwrap();
    let third = corpus.sequences.iter().find(|s| s.clip_id == "tv_003").unwrap();
    let want: Vec<String> = dataset[..2].iter().map(|r| r.commentary().render().unwrap()).collect();
    assert_eq!(third.segments[2].value, want.join("\n"));
    assert_eq!(validate_sequence(third).unwrap(), SequenceKind::NotRet);
}

#[test]
fn missing_clip_embeddings_are_reported() {
    let dataset = ten_step_video();
    let mut clips = random_clips(&dataset, 8, 4);
    clips.remove("tv_004");
    let err = build_corpus(&dataset, &labelled_index(12, 8, 3), &clips, &scoring_judge(), &SequenceConfig::default(), 1)
        .unwrap_err();
    assert!(matches!(err, SequenceError::MissingEmbeddings(ref m) if m == &["tv_004".to_string()]));
}
