use proptest::prelude::*;

use studchain_core::block::BlockHeader;
use studchain_core::consensus::{
    difficulty_at, fork_choice, solve_challenge, solve_challenge_counted, verify_pow, ForkChoiceError,
};
use studchain_core::{ChainStore, DifficultySchedule, Digest, OrgId, Payload};
use studchain_testkit::{achievement, easy_schedule, student, World};

fn template(seed: u64) -> BlockHeader {
    BlockHeader {
        height: seed,
        prev_hash: Digest::of(&seed.to_be_bytes()),
        payload_hash: Digest::of(b"payload"),
        issuer: OrgId(Digest::of(b"issuer")),
        timestamp: seed.wrapping_mul(7),
        difficulty: 12,
        nonce: 0,
    }
}

#[test]
fn schedule_examples() {
    let s = DifficultySchedule::default();
    assert_eq!((s.base_bits, s.step_every, s.cap_bits), (8, 1000, 24));
    assert_eq!(difficulty_at(&s, 0), 8);
    assert_eq!(difficulty_at(&s, 999), 8);
    assert_eq!(difficulty_at(&s, 1000), 9);
    assert_eq!(difficulty_at(&s, 1_000_000_000), 24);
    assert!(DifficultySchedule::new(0, 10, 4).is_err());
    assert!(DifficultySchedule::new(5, 10, 4).is_err());
    assert!(DifficultySchedule::new(4, 10, 33).is_err());
    assert!(DifficultySchedule::new(4, 0, 8).is_err());
}

#[test]
fn schedule_is_nondecreasing_to_a_million() {
    for s in [DifficultySchedule::default(), DifficultySchedule::new(1, 7, 32).unwrap()] {
        let mut prev = difficulty_at(&s, 0);
        for h in 1..=1_000_000 {
            let d = difficulty_at(&s, h);
            assert!(d >= prev && d <= s.cap_bits);
            prev = d;
        }
    }
}

#[test]
fn mining_statistics_at_twelve_bits() {
    let mut total = 0u64;
    for i in 0..50 {
        let mut h = template(i);
        let (nonce, attempts) = solve_challenge_counted(&h, 12, 0).unwrap();
        h.nonce = nonce;
        assert!(h.hash().leading_zero_bits() >= 12);
        total += attempts;
    }
    let mean = total as f64 / 50.0;
    let expected = 4096.0;
    assert!(mean >= expected / 4.0 && mean <= expected * 4.0, "mean attempts {mean}");
}

#[test]
fn found_nonce_is_minimal() {
    let schedule = DifficultySchedule::default();
    let mut h = template(0);
    h.difficulty = 8;
    h.nonce = solve_challenge(&h, 8, 0).unwrap();
    assert!(verify_pow(&schedule, &h));
    for n in 0..h.nonce {
        let mut earlier = h.clone();
        earlier.nonce = n;
        assert!(!verify_pow(&schedule, &earlier), "nonce {n}");
    }
    assert_eq!(solve_challenge(&h, 0, 42).unwrap(), 42);
    let mut lazy = h.clone();
    lazy.difficulty = 7;
    lazy.nonce = solve_challenge(&lazy, 7, 0).unwrap();
    assert!(!verify_pow(&schedule, &lazy));
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn solved_headers_verify(seed in any::<u64>(), height in 0u64..20_000, start in any::<u32>()) {
        let schedule = DifficultySchedule::new(4, 2_500, 16).unwrap();
        let mut h = template(seed);
        h.height = height;
        h.difficulty = difficulty_at(&schedule, height);
        h.nonce = solve_challenge(&h, h.difficulty, u64::from(start)).unwrap();
        prop_assert!(verify_pow(&schedule, &h));
        prop_assert!(h.nonce >= u64::from(start));
    }
}

fn chain_of(extra: usize, tag: &str) -> ChainStore {
    let mut w = World::with_orgs(&["a-u"]);
    for i in 0..extra {
        let a = achievement(student(i as u32), w.org("a-u"), tag, "1.0", &["cs"], true);
        w.submit("a-u", Payload::Achievement(a)).unwrap();
    }
    w.store
}

#[test]
fn fork_choice_cases() {
    assert_eq!(fork_choice::<ChainStore>(&[]), Err(ForkChoiceError::EmptyCandidateSet));
    let ten = chain_of(8, "x");
    let nine = chain_of(7, "y");
    assert_eq!((ten.len(), nine.len()), (10, 9));
    assert_eq!(fork_choice(std::slice::from_ref(&ten)), Ok(0));
    assert_eq!(fork_choice(&[nine.clone(), ten.clone()]), Ok(1));
    assert_eq!(fork_choice(&[&ten, &nine]), Ok(0));

    // Equal work: the smaller head digest wins regardless of order.
    let a = chain_of(8, "p");
    let b = chain_of(8, "q");
    assert_eq!(a.total_work(), b.total_work());
    let smaller = if a.head_hash() < b.head_hash() { a.head_hash() } else { b.head_hash() };
    for pair in [[&a, &b], [&b, &a]] {
        let i = fork_choice(&pair).unwrap();
        assert_eq!(pair[i].head_hash(), smaller);
    }
    assert_eq!(ten.total_work(), 10 * (1 << easy_schedule().base_bits));
}
