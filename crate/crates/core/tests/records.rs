use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use studchain_core::records::{
    correction_counts, effective_transcript, transcript_text, validate_correction, CorrectionAction, CorrectionError,
    CorrectionRecord,
};
use studchain_core::store::PayloadRejection;
use studchain_core::{AppendError, Decimal, Digest, Payload};
use studchain_testkit::random::{random_chain, random_students};
use studchain_testkit::{achievement, oracle, student, World};

fn correction(target: Digest, action: CorrectionAction) -> Payload {
    Payload::Correction(CorrectionRecord {
        target_block_hash: target,
        action,
        reason: "exam office fix".into(),
    })
}

#[test]
fn single_achievement_is_the_transcript() {
    let mut w = World::with_orgs(&["home-u"]);
    let s = student(101);
    let a = achievement(s, w.org("home-u"), "MA-101", "6.0", &["math"], true);
    let h = w.submit("home-u", Payload::Achievement(a.clone())).unwrap();
    let t = effective_transcript(&w.store, &s);
    assert_eq!(t.entries.len(), 1);
    assert_eq!(t.entries[0].achievement, a);
    assert_eq!(t.entries[0].origin_block_hash, h);
    assert!(t.entries[0].correction_trail.is_empty());
    assert!(effective_transcript(&w.store, &student(999)).entries.is_empty());
}

#[test]
fn replacement_is_shown_with_its_trail() {
    let mut w = World::with_orgs(&["home-u"]);
    let s = student(1);
    let mut a = achievement(s, w.org("home-u"), "MA-101", "6.0", &["math"], true);
    a.grade = Some("2.7".parse().unwrap());
    let h = w.submit("home-u", Payload::Achievement(a.clone())).unwrap();
    let original_bytes = w.store.block_by_hash(&h).unwrap().encode();
    let mut fixed = a.clone();
    fixed.grade = Some("1.7".parse().unwrap());
    let c = w.submit("home-u", correction(h, CorrectionAction::Replace(fixed.clone()))).unwrap();
    let t = effective_transcript(&w.store, &s);
    assert_eq!(t.entries.len(), 1);
    assert_eq!(t.entries[0].achievement, fixed);
    assert_eq!(t.entries[0].correction_trail, vec![c]);
    // The original stays retrievable and byte-identical.
    assert_eq!(w.store.block_by_hash(&h).unwrap().encode(), original_bytes);
    assert_eq!(effective_transcript(&w.store, &s), t);
}

#[test]
fn later_replacement_wins_in_either_order() {
    for order in [[0usize, 1], [1, 0]] {
        let mut w = World::with_orgs(&["home-u"]);
        let s = student(1);
        let a = achievement(s, w.org("home-u"), "MA-101", "6.0", &["math"], true);
        let h = w.submit("home-u", Payload::Achievement(a.clone())).unwrap();
        let versions = ["4.0", "5.0"].map(|c| {
            let mut r = a.clone();
            r.credit_points = c.parse().unwrap();
            r
        });
        for &i in &order {
            w.submit("home-u", correction(h, CorrectionAction::Replace(versions[i].clone())))
                .unwrap();
        }
        let t = effective_transcript(&w.store, &s);
        assert_eq!(t.entries[0].achievement, versions[order[1]]);
        assert_eq!(t.entries[0].correction_trail.len(), 2);
    }
}

#[test]
fn correction_rules() {
    let mut w = World::with_orgs(&["home-u", "other-u"]);
    let s = student(1);
    let a = achievement(s, w.org("home-u"), "MA-101", "6.0", &["math"], true);
    let h = w.submit("home-u", Payload::Achievement(a.clone())).unwrap();
    let invalidate = CorrectionRecord {
        target_block_hash: h,
        action: CorrectionAction::Invalidate,
        reason: String::new(),
    };
    assert_eq!(validate_correction(&w.store, &invalidate, &w.org("home-u")), Ok(()));
    assert_eq!(
        validate_correction(&w.store, &invalidate, &w.org("other-u")),
        Err(CorrectionError::IssuerMismatch)
    );
    let unknown = CorrectionRecord {
        target_block_hash: Digest::of(b"nowhere"),
        ..invalidate.clone()
    };
    assert_eq!(
        validate_correction(&w.store, &unknown, &w.org("home-u")),
        Err(CorrectionError::UnknownTarget)
    );
    let genesis = CorrectionRecord {
        target_block_hash: w.store.hash_at(0).unwrap(),
        ..invalidate.clone()
    };
    assert_eq!(
        validate_correction(&w.store, &genesis, &w.org("home-u")),
        Err(CorrectionError::TargetNotAchievement)
    );
    let mut other_student = a.clone();
    other_student.student = student(2);
    let swap = CorrectionRecord {
        action: CorrectionAction::Replace(other_student),
        ..invalidate.clone()
    };
    assert_eq!(
        validate_correction(&w.store, &swap, &w.org("home-u")),
        Err(CorrectionError::StudentMismatch)
    );

    w.submit("home-u", Payload::Correction(invalidate.clone())).unwrap();
    assert!(effective_transcript(&w.store, &s).entries.is_empty());
    assert_eq!(
        w.submit("home-u", Payload::Correction(invalidate)),
        Err(AppendError::PayloadInvalid(PayloadRejection::Correction(
            CorrectionError::AlreadyInvalidated
        )))
    );
}

#[test]
fn transcripts_match_replay_oracle_on_random_chains() {
    for seed in 0..60 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = random_chain(&mut rng, 50, 5);
        assert!(w.store.len() <= 50);
        for s in random_students(5) {
            let got: Vec<_> = effective_transcript(&w.store, &s)
                .entries
                .into_iter()
                .map(|e| (e.achievement, e.origin_block_hash, e.correction_trail))
                .collect();
            assert_eq!(got, oracle::transcript(w.store.blocks(), &s), "seed {seed}");
        }
    }
}

#[test]
fn correction_counts_match_linear_scan() {
    assert!(correction_counts(&World::with_orgs(&["a-u"]).store, 10).is_empty());
    for seed in 0..40 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let w = random_chain(&mut rng, 50, 5);
        for window in [1, 3, 10, 25, 1000] {
            assert_eq!(
                correction_counts(&w.store, window),
                oracle::correction_counts(w.store.blocks(), window),
                "seed {seed} window {window}"
            );
        }
    }
}

#[test]
fn three_corrections_in_window_are_counted() {
    let mut w = World::with_orgs(&["a-u"]);
    let a = achievement(student(1), w.org("a-u"), "X", "1.0", &["cs"], true);
    let h = w.submit("a-u", Payload::Achievement(a.clone())).unwrap();
    for credits in ["2.0", "3.0", "4.0"] {
        let mut r = a.clone();
        r.credit_points = credits.parse::<Decimal>().unwrap();
        w.submit("a-u", correction(h, CorrectionAction::Replace(r))).unwrap();
    }
    let counts = correction_counts(&w.store, 100);
    assert_eq!(counts.into_iter().collect::<Vec<_>>(), vec![(w.org("a-u"), 3)]);
    assert_eq!(correction_counts(&w.store, 2).get(&w.org("a-u")), Some(&2));
}

#[test]
fn failed_results_are_public_and_exported() {
    let mut w = World::with_orgs(&["a-u"]);
    let s = student(4);
    let a = achievement(s, w.org("a-u"), "MA-1", "5.0", &["math", "cs"], false);
    let h = w.submit("a-u", Payload::Achievement(a)).unwrap();
    let text = transcript_text(&effective_transcript(&w.store, &s));
    assert_eq!(text, format!("{h}\tMA-1\t5.0\tmath,cs\tFAILED\n"));
}
