//! Dataset ingest, dedup, pairing and quality over generated reasoner output.

use pathforge_core::data::*;
use pathforge_core::puzzle::*;
use proptest::prelude::*;

fn instances() -> impl Strategy<Value = Vec<PuzzleInstance>> {
    prop::collection::vec(
        (prop::array::uniform4(1i64..=20), 10i64..=30).prop_map(|(i, t)| PuzzleInstance::countdown(i, t)),
        1..6,
    )
}

fn records(insts: &[PuzzleInstance]) -> Vec<PathRecord> {
    let tagged: Vec<(PuzzleInstance, Split)> = insts.iter().map(|i| (i.clone(), Split::Train)).collect();
    let cfg = ReasonerConfig::default();
    let mut all = generate_paths(Reasoner::Bfs, &tagged, None, &cfg, true).unwrap();
    all.extend(generate_paths(Reasoner::Dfs, &tagged, None, &cfg, true).unwrap());
    // Duplicate everything once more so dedup has work to do.
    let again = all.clone();
    all.extend(again);
    all
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn dedup_is_idempotent_and_keeps_quality(insts in instances()) {
        let recs = records(&insts);
        let once = dedup(recs.clone());
        prop_assert_eq!(dedup(once.clone()), once.clone());
        prop_assert_eq!(quality(&recs, &insts).unwrap(), quality(&once, &insts).unwrap());
        for r in &once {
            prop_assert!(r.check().is_ok());
        }
    }

    #[test]
    fn pairs_always_prefer_a_correct_path(insts in instances(), e in 1usize..4, seed in any::<u64>()) {
        let (pos, neg) = split_by_label(dedup(records(&insts)));
        prop_assert!(pos.iter().all(PathRecord::success));
        prop_assert!(neg.iter().all(|r| !r.success()));
        for p in make_pairs(&pos, &neg, e, seed) {
            let inst = p.instance().unwrap();
            prop_assert!(verify_text(&inst, &p.chosen).success());
            prop_assert!(!verify_text(&inst, &p.rejected).success());
        }
    }

    #[test]
    fn canonicalization_is_idempotent(text in "[0-9 +*/=()\n-]{0,60}") {
        let once = canonicalize(&text);
        prop_assert_eq!(canonicalize(&once), once);
    }
}

#[test]
fn jsonl_round_trip_and_test_split_guard() {
    let insts = vec![PuzzleInstance::countdown([25, 5, 5, 33], 27), PuzzleInstance::countdown([4, 14, 9, 5], 22)];
    let recs = dedup(records(&insts));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("paths.jsonl");
    write_jsonl(&path, &recs).unwrap();
    assert_eq!(load_paths(&path).unwrap(), recs);

    let tagged = vec![(insts[0].clone(), Split::Test)];
    let err = generate_paths(Reasoner::Bfs, &tagged, None, &ReasonerConfig::default(), true);
    assert!(matches!(err, Err(DataError::SplitViolation(_))));
    assert!(generate_paths(Reasoner::Bfs, &tagged, None, &ReasonerConfig::default(), false).is_ok());
}

#[test]
fn tampered_labels_are_caught_on_load() {
    let inst = PuzzleInstance::countdown([25, 5, 5, 33], 27);
    let mut recs = dedup(records(&[inst]));
    let flip = recs.iter().position(|r| !r.success()).unwrap();
    recs[flip].label = 1;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("paths.jsonl");
    write_jsonl(&path, &recs).unwrap();
    assert!(matches!(load_paths(&path), Err(DataError::LabelMismatch { .. })));
}

#[test]
fn policy_reasoners_need_a_policy() {
    let tagged = vec![(PuzzleInstance::countdown([1, 2, 3, 4], 10), Split::Train)];
    for r in [Reasoner::Cot, Reasoner::Tot, Reasoner::Rap] {
        assert!(matches!(
            generate_paths(r, &tagged, None, &ReasonerConfig::default(), true),
            Err(DataError::MissingPolicy(_))
        ));
    }
}
