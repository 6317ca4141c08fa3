mod common;

use common::*;
use labcast_core::safety_preference::{pairs_for_candidates, safety_f1, PairConfig};
use proptest::prelude::*;

#[test]
fn pairs_are_sound_and_capped() {
    check_dpo_soundness().unwrap();
}

#[test]
fn step_seeds_are_distinct() {
    assert!(step_seeds_differ(&["a_001", "a_002", "b_001", "b_002"]));
}

#[test]
fn identical_safety_scores_one() {
    assert_eq!(safety_f1(DPO_REFERENCE, DPO_REFERENCE), 1.0);
    assert_eq!(safety_f1("", DPO_REFERENCE), 0.0);
}

fn candidate() -> impl Strategy<Value = String> {
    let safety = prop_oneof![
        Just(None),
        Just(Some(DPO_REFERENCE.to_owned())),
        Just(Some("Wear goggles, it is corrosive.".to_owned())),
        Just(Some("Tidy the bench.".to_owned())),
        "[a-z ]{1,30}".prop_map(Some),
    ];
    safety.prop_map(|s| match s {
        Some(s) if !s.trim().is_empty() => format!("<Procedure> Add the base. <Safety> {s}"),
        _ => "<Procedure> Add the base.".to_owned(),
    })
}

proptest! {
    #[test]
    fn pair_count_is_capped_cross_product(cands in prop::collection::vec(candidate(), 0..10), cap in 1usize..8) {
        let cfg = PairConfig { max_pairs_per_step: cap, ..PairConfig::default() };
        let pairs = pairs_for_candidates("c", "p", &cands, DPO_REFERENCE, &cfg);
        let mut distinct = cands.clone();
        distinct.sort();
        distinct.dedup();
        let pass = distinct.iter().filter(|c| labcast_core::safety_preference::safety_rule(c, DPO_REFERENCE, 0.3).pass).count();
        let fail = distinct.len() - pass;
        prop_assert_eq!(pairs.len(), cap.min(pass * fail));
        for p in &pairs {
            prop_assert!(p.f1_chosen >= 0.3 && p.f1_chosen > p.f1_rejected);
        }
    }
}
