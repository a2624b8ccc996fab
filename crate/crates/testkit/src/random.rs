use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use studchain_core::records::{CorrectionAction, CorrectionRecord};
use studchain_core::{Decimal, Payload, StudentId};

use crate::world::{achievement, student, World};

pub const RANDOM_ORGS: [&str; 3] = ["uni-a", "uni-b", "mooc-c"];
const TOPICS: [&str; 4] = ["math", "physics", "cs", "art"];

pub fn random_students(n: u32) -> Vec<StudentId> {
    (1..=n).map(student).collect()
}

/// A random chain of at most `max_blocks` blocks over `students` students:
/// achievements, replacements, invalidations (valid and rejected ones), an
/// occasional recognition contract and the fulfillments it produces.
pub fn random_chain(rng: &mut ChaCha8Rng, max_blocks: usize, students: u32) -> World {
    let mut world = World::with_orgs(&RANDOM_ORGS);
    let students = random_students(students);
    let mut recognition_published = false;
    let mut achievements = Vec::new();
    let mut attempts = 0;
    while world.store.len() < max_blocks && attempts < max_blocks * 4 {
        attempts += 1;
        let roll = rng.gen_range(0..100);
        let org = *RANDOM_ORGS.choose(rng).unwrap();
        if roll < 55 || achievements.is_empty() {
            let s = *students.choose(rng).unwrap();
            let a = random_achievement(rng, &world, org, s);
            if let Ok(h) = world.submit_settled(org, Payload::Achievement(a)) {
                achievements.push((h, org));
            }
        } else if roll < 90 {
            let (target, owner) = *achievements.choose(rng).unwrap();
            // Occasionally a foreign org tries to correct; that must fail.
            let writer = if rng.gen_bool(0.1) { org } else { owner };
            let action = if rng.gen_bool(0.5) {
                let original = match &world.store.block_by_hash(&target).unwrap().payload {
                    Payload::Achievement(a) => a.clone(),
                    _ => unreachable!(),
                };
                let mut r = random_achievement(rng, &world, owner, original.student);
                r.course_id = original.course_id;
                CorrectionAction::Replace(r)
            } else {
                CorrectionAction::Invalidate
            };
            let c = CorrectionRecord {
                target_block_hash: target,
                action,
                reason: "random correction".into(),
            };
            let _ = world.submit_settled(writer, Payload::Correction(c));
        } else if !recognition_published {
            recognition_published = true;
            let foreign = *["uni-b", "mooc-c"].choose(rng).unwrap();
            let factor = ["0.5", "1.0", "1.5"].choose(rng).unwrap();
            let src = format!(
                "RECOGNITION BETWEEN uni-a AND {foreign} WHERE ISSUER = {foreign} AND PASSED MAP FACTOR {factor} TOPIC art -> cs"
            );
            world.contract("uni-a", &src).expect("recognition accepted");
        }
    }
    // Fulfillments may overshoot the limit; a prefix is still a valid chain.
    if world.store.len() > max_blocks {
        world.store = world.store.truncated(max_blocks);
    }
    world
}

pub fn random_achievement(
    rng: &mut ChaCha8Rng,
    world: &World,
    org: &str,
    student: StudentId,
) -> studchain_core::AchievementRecord {
    let n_topics = rng.gen_range(1..=2);
    let mut topics: Vec<&str> = TOPICS.choose_multiple(rng, n_topics).copied().collect();
    topics.sort();
    let credits = Decimal::from_units(rng.gen_range(0..=20u64) * 5_000);
    let mut a = achievement(
        student,
        world.org(org),
        &format!("C{}", rng.gen_range(0..6)),
        "1.0",
        &topics,
        rng.gen_bool(0.8),
    );
    a.credit_points = credits;
    a.assessment_tick = rng.gen_range(0..1000);
    a
}
