//! Brute-force reference implementations. Each one re-reads raw blocks or
//! raw records and shares no code with the library beyond the data types.

use std::collections::{BTreeMap, BTreeSet};

use studchain_core::contract::{Atom, Predicate, Requirement, Sanction};
use studchain_core::records::{AssessmentResult, CorrectionAction};
use studchain_core::{AchievementRecord, Block, Digest, FulfillmentRecord, OrgId, Payload, StudentId};

/// (record, origin block, correction trail)
pub type OracleEntry = (AchievementRecord, Digest, Vec<Digest>);

struct Slot {
    origin: Digest,
    record: AchievementRecord,
    trail: Vec<Digest>,
    dead: bool,
    source: Option<Digest>,
}

/// A student's transcript by linear replay of the raw blocks.
pub fn transcript(blocks: &[Block], student: &StudentId) -> Vec<OracleEntry> {
    let mut slots: Vec<Slot> = Vec::new();
    for block in blocks {
        let hash = block.hash();
        match &block.payload {
            Payload::Achievement(a) if a.student == *student => slots.push(Slot {
                origin: hash,
                record: a.clone(),
                trail: vec![],
                dead: false,
                source: None,
            }),
            Payload::Correction(c) => {
                for slot in slots.iter_mut().filter(|s| s.origin == c.target_block_hash) {
                    match &c.action {
                        CorrectionAction::Replace(r) => slot.record = r.clone(),
                        CorrectionAction::Invalidate => slot.dead = true,
                    }
                    slot.trail.push(hash);
                }
            }
            Payload::Fulfillment(FulfillmentRecord::RecognizedAchievement {
                source_achievement_block,
                derived,
                ..
            }) if derived.student == *student => slots.push(Slot {
                origin: hash,
                record: derived.clone(),
                trail: vec![],
                dead: false,
                source: Some(*source_achievement_block),
            }),
            _ => {}
        }
    }
    let dead: BTreeSet<Digest> = slots.iter().filter(|s| s.dead).map(|s| s.origin).collect();
    slots
        .into_iter()
        .filter(|s| !s.dead && !s.source.is_some_and(|src| dead.contains(&src)))
        .map(|s| (s.record, s.origin, s.trail))
        .collect()
}

/// Correction blocks per issuer whose height lies in the last `window`
/// heights of the chain.
pub fn correction_counts(blocks: &[Block], window: u64) -> BTreeMap<OrgId, u64> {
    let head = blocks.len() as i64 - 1;
    let mut out = BTreeMap::new();
    for b in blocks {
        if matches!(b.payload, Payload::Correction(_)) && (b.header.height as i64) > head - window as i64 {
            *out.entry(b.header.issuer).or_insert(0) += 1;
        }
    }
    out
}

/// Orgs that at any height had `threshold` or more corrections among the
/// `window` heights ending there.
pub fn sanctioned(blocks: &[Block], s: &Sanction) -> BTreeSet<OrgId> {
    let mut out = BTreeSet::new();
    for end in 0..blocks.len() {
        let start = (end + 1).saturating_sub(s.window as usize);
        let mut counts: BTreeMap<OrgId, u64> = BTreeMap::new();
        for b in &blocks[start..=end] {
            if matches!(b.payload, Payload::Correction(_)) {
                *counts.entry(b.header.issuer).or_insert(0) += 1;
            }
        }
        out.extend(counts.into_iter().filter(|(_, n)| *n >= s.threshold).map(|(o, _)| o));
    }
    out
}

pub fn atom_holds(atom: &Atom<OrgId>, a: &AchievementRecord) -> bool {
    match atom {
        Atom::Passed => matches!(a.result, AssessmentResult::Passed),
        Atom::IssuerEquals(o) => &a.issuer == o,
        Atom::CreditsAtLeast(min) => a.credit_points.units() >= min.units(),
        Atom::TopicContains(t) => a.topics.iter().any(|x| x == t),
        Atom::SourceIn(kinds) => kinds.contains(&a.source_kind),
    }
}

pub fn predicate_holds(p: &Predicate<OrgId>, a: &AchievementRecord) -> bool {
    let mut ok = true;
    for atom in &p.atoms {
        ok &= atom_holds(atom, a);
    }
    ok
}

fn leaf_entry_matches(leaf: &Requirement<OrgId>, a: &AchievementRecord) -> bool {
    if a.result != AssessmentResult::Passed {
        return false;
    }
    match leaf {
        Requirement::CreditsAtLeast { topic, .. } => a.topics.contains(topic),
        Requirement::Course { course_id, issuer } => {
            a.course_id == *course_id && issuer.as_ref().is_none_or(|o| *o == a.issuer)
        }
        _ => unreachable!("not a leaf"),
    }
}

/// Truth-table evaluation of a requirement over a set of records: leaves by
/// direct summation/search, composites by counting satisfied children.
pub fn fulfilled(r: &Requirement<OrgId>, records: &[AchievementRecord]) -> bool {
    match r {
        Requirement::CreditsAtLeast { amount, .. } => {
            let mut sum = 0u64;
            for a in records {
                if leaf_entry_matches(r, a) {
                    sum += a.credit_points.units();
                }
            }
            sum >= amount.units()
        }
        Requirement::Course { .. } => records.iter().any(|a| leaf_entry_matches(r, a)),
        Requirement::AllOf(c) => c.iter().filter(|x| fulfilled(x, records)).count() == c.len(),
        Requirement::AnyOf(c) => c.iter().filter(|x| fulfilled(x, records)).count() >= 1,
        Requirement::AtLeastNOf { n, children } => {
            children.iter().filter(|x| fulfilled(x, records)).count() >= *n as usize
        }
    }
}

/// Witness set: origins of the passed records matching each satisfied leaf.
pub fn witnesses(r: &Requirement<OrgId>, records: &[(AchievementRecord, Digest)]) -> BTreeSet<Digest> {
    let mut out = BTreeSet::new();
    let plain: Vec<AchievementRecord> = records.iter().map(|(a, _)| a.clone()).collect();
    let mut stack = vec![r];
    while let Some(node) = stack.pop() {
        match node {
            Requirement::AllOf(c) | Requirement::AnyOf(c) | Requirement::AtLeastNOf { children: c, .. } => {
                stack.extend(c.iter())
            }
            leaf => {
                if fulfilled(leaf, &plain) {
                    out.extend(records.iter().filter(|(a, _)| leaf_entry_matches(leaf, a)).map(|(_, d)| *d));
                }
            }
        }
    }
    out
}
