//! Contract evaluation: recognition of foreign achievements, degree
//! requirements, sanctions, and the fulfillments a new block triggers.
//!
//! Everything here is a pure function of the chain, so every peer derives
//! the same fulfillments and can verify the ones others publish by
//! recomputing them.

use std::collections::BTreeSet;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::Serialize;

use crate::block::Block;
use crate::contract::{requirement_text, Atom, ContractAst, Degree, Predicate, Recognition, Requirement, Sanction};
use crate::crypto::{Digest, OrgId};
use crate::ids::{Decimal, StudentId};
use crate::payload::{validate_text, InvalidPayload, Payload, MAX_CREDIT_POINTS};
use crate::records::{effective_transcript, AchievementRecord, CorrectionAction, EffectiveTranscript, TranscriptEntry};
use crate::store::{AppendError, ChainStore, PayloadRejection};

/// A contract that fulfilled itself.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum FulfillmentRecord {
    RecognizedAchievement {
        contract_block: Digest,
        source_achievement_block: Digest,
        derived: AchievementRecord,
    },
    DegreeAward {
        contract_block: Digest,
        student: StudentId,
        degree_name: String,
        /// Sorted, without duplicates.
        evidence: Vec<Digest>,
    },
}

impl FulfillmentRecord {
    pub fn validate(&self) -> Result<(), InvalidPayload> {
        match self {
            FulfillmentRecord::RecognizedAchievement { derived, .. } => derived.validate(),
            FulfillmentRecord::DegreeAward {
                degree_name, evidence, ..
            } => {
                validate_text("degree_name", degree_name, false)?;
                if evidence.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(InvalidPayload("evidence must be sorted and unique".into()));
                }
                Ok(())
            }
        }
    }

    pub fn contract_block(&self) -> &Digest {
        match self {
            FulfillmentRecord::RecognizedAchievement { contract_block, .. }
            | FulfillmentRecord::DegreeAward { contract_block, .. } => contract_block,
        }
    }

    /// Ordering key: contract block, then the source achievement block or
    /// the student id bytes.
    fn sort_key(&self) -> (Digest, Vec<u8>) {
        match self {
            FulfillmentRecord::RecognizedAchievement {
                contract_block,
                source_achievement_block,
                ..
            } => (*contract_block, source_achievement_block.as_bytes().to_vec()),
            FulfillmentRecord::DegreeAward {
                contract_block, student, ..
            } => (*contract_block, student.as_bytes().to_vec()),
        }
    }

    /// Organization entitled to publish this fulfillment: the home org of a
    /// recognition, the issuer of a degree.
    pub fn publisher(&self, store: &ChainStore) -> Option<OrgId> {
        match &store.state().contract(self.contract_block())?.ast {
            ContractAst::Recognition(r) => Some(r.home),
            ContractAst::Degree(d) => Some(d.issuer),
            ContractAst::Sanction(_) => None,
        }
    }
}

pub fn eval_atom(atom: &Atom<OrgId>, a: &AchievementRecord) -> bool {
    match atom {
        Atom::IssuerEquals(org) => a.issuer == *org,
        Atom::TopicContains(t) => a.topics.contains(t),
        Atom::CreditsAtLeast(c) => a.credit_points >= *c,
        Atom::Passed => a.passed(),
        Atom::SourceIn(kinds) => kinds.contains(&a.source_kind),
    }
}

pub fn eval_predicate(p: &Predicate<OrgId>, a: &AchievementRecord) -> bool {
    p.atoms.iter().all(|atom| eval_atom(atom, a))
}

/// The achievement as the home organization recognizes it, if the contract
/// applies: issuer becomes the home org, credits are scaled by the factor
/// (half-even to one decimal, capped at 60), topics are remapped and the
/// grade is dropped.
pub fn eval_recognition(c: &Recognition<OrgId>, a: &AchievementRecord) -> Option<AchievementRecord> {
    if a.issuer != c.foreign || !eval_predicate(&c.predicate, a) {
        return None;
    }
    let mut topics: Vec<String> = Vec::with_capacity(a.topics.len());
    for t in &a.topics {
        let mapped = c
            .topic_map
            .iter()
            .find(|(from, _)| from == t)
            .map_or(t, |(_, to)| to);
        if !topics.contains(mapped) {
            topics.push(mapped.clone());
        }
    }
    Some(AchievementRecord {
        issuer: c.home,
        credit_points: a.credit_points.mul_round_tenths(c.factor).min(MAX_CREDIT_POINTS),
        topics,
        grade: None,
        ..a.clone()
    })
}

/// Outcome of evaluating a requirement tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RequirementEval {
    pub fulfilled: bool,
    /// Exact progress in [0, 1]; equals 1 iff `fulfilled`.
    pub fraction: BigRational,
    /// Unmet leaves, left to right.
    pub missing: Vec<Requirement<OrgId>>,
}

fn leaf_matches(leaf: &Requirement<OrgId>, e: &AchievementRecord, scope: Option<&OrgId>) -> bool {
    if !e.passed() {
        return false;
    }
    match leaf {
        Requirement::CreditsAtLeast { topic, .. } => e.topics.contains(topic) && scope.is_none_or(|o| e.issuer == *o),
        Requirement::Course { course_id, issuer } => {
            e.course_id == *course_id
                && match issuer {
                    Some(o) => e.issuer == *o,
                    None => scope.is_none_or(|o| e.issuer == *o),
                }
        }
        _ => false,
    }
}

fn ratio(num: u64, den: u64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// Evaluates `r` over the passed entries of `t`.
///
/// With `scope = Some(org)`, credit leaves and course leaves without a
/// `FROM` clause only count entries issued by `org`; degree contracts use
/// their own issuer as scope, so foreign achievements count once they have
/// been recognized.
///
/// Progress: leaves are 1 or `min(1, have/need)` for credit leaves; ALL is
/// the mean of its children, ANY the maximum, ATLEAST n the sum of the n
/// largest child fractions divided by n.
pub fn eval_requirement(r: &Requirement<OrgId>, t: &EffectiveTranscript, scope: Option<&OrgId>) -> RequirementEval {
    match r {
        Requirement::CreditsAtLeast { amount, .. } => {
            let have = t
                .entries
                .iter()
                .filter(|e| leaf_matches(r, &e.achievement, scope))
                .fold(0u64, |acc, e| acc.saturating_add(e.achievement.credit_points.units()));
            let fulfilled = have >= amount.units();
            let fraction = if fulfilled { BigRational::one() } else { ratio(have, amount.units()) };
            RequirementEval {
                fulfilled,
                fraction,
                missing: if fulfilled { vec![] } else { vec![r.clone()] },
            }
        }
        Requirement::Course { .. } => {
            let fulfilled = t.entries.iter().any(|e| leaf_matches(r, &e.achievement, scope));
            RequirementEval {
                fulfilled,
                fraction: if fulfilled { BigRational::one() } else { BigRational::zero() },
                missing: if fulfilled { vec![] } else { vec![r.clone()] },
            }
        }
        Requirement::AllOf(children) => {
            let evals: Vec<_> = children.iter().map(|c| eval_requirement(c, t, scope)).collect();
            let fulfilled = evals.iter().all(|e| e.fulfilled);
            let sum = evals.iter().fold(BigRational::zero(), |acc, e| acc + &e.fraction);
            combine(fulfilled, sum / BigInt::from(evals.len()), evals)
        }
        Requirement::AnyOf(children) => {
            let evals: Vec<_> = children.iter().map(|c| eval_requirement(c, t, scope)).collect();
            let fulfilled = evals.iter().any(|e| e.fulfilled);
            let max = evals.iter().map(|e| e.fraction.clone()).max().unwrap_or_else(BigRational::zero);
            combine(fulfilled, max, evals)
        }
        Requirement::AtLeastNOf { n, children } => {
            let evals: Vec<_> = children.iter().map(|c| eval_requirement(c, t, scope)).collect();
            let n = (*n as usize).clamp(1, evals.len().max(1));
            let fulfilled = evals.iter().filter(|e| e.fulfilled).count() >= n;
            let mut fractions: Vec<_> = evals.iter().map(|e| e.fraction.clone()).collect();
            fractions.sort_by(|a, b| b.cmp(a));
            let top = fractions.into_iter().take(n).fold(BigRational::zero(), |acc, f| acc + f);
            combine(fulfilled, (top / BigInt::from(n)).min(BigRational::one()), evals)
        }
    }
}

fn combine(fulfilled: bool, fraction: BigRational, children: Vec<RequirementEval>) -> RequirementEval {
    let missing = if fulfilled {
        vec![]
    } else {
        children.into_iter().filter(|e| !e.fulfilled).flat_map(|e| e.missing).collect()
    };
    RequirementEval {
        fulfilled,
        fraction,
        missing,
    }
}

/// Origins of every entry that satisfies a fulfilled leaf, sorted.
pub fn requirement_evidence(r: &Requirement<OrgId>, t: &EffectiveTranscript, scope: Option<&OrgId>) -> Vec<Digest> {
    let mut out = BTreeSet::new();
    collect_evidence(r, t, scope, &mut out);
    out.into_iter().collect()
}

fn collect_evidence(r: &Requirement<OrgId>, t: &EffectiveTranscript, scope: Option<&OrgId>, out: &mut BTreeSet<Digest>) {
    match r {
        Requirement::AllOf(c) | Requirement::AnyOf(c) | Requirement::AtLeastNOf { children: c, .. } => {
            c.iter().for_each(|child| collect_evidence(child, t, scope, out))
        }
        leaf => {
            if eval_requirement(leaf, t, scope).fulfilled {
                out.extend(
                    t.entries
                        .iter()
                        .filter(|e| leaf_matches(leaf, &e.achievement, scope))
                        .map(|e: &TranscriptEntry| e.origin_block_hash),
                );
            }
        }
    }
}

/// First height `>= active_from` at which `heights` (sorted correction
/// heights) has at least `threshold` entries within the trailing window.
pub fn ban_height(heights: &[u64], s: &Sanction, active_from: u64) -> Option<u64> {
    let count_at = |h: u64| {
        let lowest = (h + 1).saturating_sub(s.window);
        heights.iter().filter(|&&x| x >= lowest && x <= h).count() as u64
    };
    std::iter::once(active_from)
        .chain(heights.iter().copied().filter(|&h| h > active_from))
        .find(|&h| count_at(h) >= s.threshold)
}

/// Organizations the sanction bans on this chain, evaluating the sanction
/// as if it had been in force since genesis.
pub fn eval_sanction(store: &ChainStore, s: &Sanction) -> BTreeSet<OrgId> {
    store
        .state()
        .corrections
        .iter()
        .filter(|(_, heights)| ban_height(heights, s, 0).is_some())
        .map(|(org, _)| *org)
        .collect()
}

fn recognition_contracts(store: &ChainStore) -> impl Iterator<Item = (Digest, &Recognition<OrgId>)> {
    store.state().contracts.iter().filter_map(|c| match &c.ast {
        ContractAst::Recognition(r) => Some((c.block, r)),
        _ => None,
    })
}

fn degree_contracts(store: &ChainStore) -> impl Iterator<Item = (Digest, &Degree<OrgId>)> {
    store.state().contracts.iter().filter_map(|c| match &c.ast {
        ContractAst::Degree(d) => Some((c.block, d)),
        _ => None,
    })
}

fn recognitions_for_source(store: &ChainStore, source: &Digest, out: &mut Vec<FulfillmentRecord>) {
    let state = store.state();
    let Some(achievement) = state.achievements.get(source).filter(|a| !a.invalidated) else {
        return;
    };
    for (contract_block, c) in recognition_contracts(store) {
        if state.recognized_pairs.contains(&(contract_block, *source)) {
            continue;
        }
        if let Some(derived) = eval_recognition(c, &achievement.current) {
            out.push(FulfillmentRecord::RecognizedAchievement {
                contract_block,
                source_achievement_block: *source,
                derived,
            });
        }
    }
}

fn award_for(store: &ChainStore, contract_block: Digest, d: &Degree<OrgId>, t: &EffectiveTranscript) -> Option<FulfillmentRecord> {
    if store.state().awards.contains_key(&(contract_block, t.student)) {
        return None;
    }
    if !eval_requirement(&d.requirement, t, Some(&d.issuer)).fulfilled {
        return None;
    }
    Some(FulfillmentRecord::DegreeAward {
        contract_block,
        student: t.student,
        degree_name: d.degree_name.clone(),
        evidence: requirement_evidence(&d.requirement, t, Some(&d.issuer)),
    })
}

fn awards_for_student(store: &ChainStore, student: &StudentId, out: &mut Vec<FulfillmentRecord>) {
    let t = effective_transcript(store, student);
    for (contract_block, d) in degree_contracts(store) {
        out.extend(award_for(store, contract_block, d, &t));
    }
}

fn finish(mut out: Vec<FulfillmentRecord>) -> Vec<Payload> {
    out.sort_by_key(FulfillmentRecord::sort_key);
    out.dedup();
    out.into_iter().map(Payload::Fulfillment).collect()
}

/// Fulfillments triggered by `block`, which must be the block most recently
/// appended to `store`.
///
/// Degrees are evaluated on the chain as it stands; an award that needs a
/// recognition emitted here follows once that recognition is appended.
/// Recognized achievements never feed other recognitions.
pub fn on_block_appended(store: &ChainStore, block: &Block) -> Vec<Payload> {
    let hash = block.hash();
    let state = store.state();
    let mut out = Vec::new();
    match &block.payload {
        Payload::Achievement(a) => {
            recognitions_for_source(store, &hash, &mut out);
            awards_for_student(store, &a.student, &mut out);
        }
        Payload::Correction(c) => {
            if let CorrectionAction::Replace(r) = &c.action {
                recognitions_for_source(store, &c.target_block_hash, &mut out);
                awards_for_student(store, &r.student, &mut out);
            }
        }
        Payload::Contract(_) => match state.contract(&hash).map(|c| &c.ast) {
            Some(ContractAst::Recognition(_)) => {
                let mut sources: Vec<(u64, Digest)> = state
                    .achievements
                    .iter()
                    .filter(|(_, a)| !a.invalidated)
                    .map(|(h, a)| (a.height, *h))
                    .collect();
                sources.sort();
                for (_, source) in sources {
                    recognitions_for_source(store, &source, &mut out);
                }
                out.retain(|f| *f.contract_block() == hash);
            }
            Some(ContractAst::Degree(d)) => {
                for student in state.student_origins.keys() {
                    let t = effective_transcript(store, student);
                    out.extend(award_for(store, hash, d, &t));
                }
            }
            _ => {}
        },
        Payload::Fulfillment(FulfillmentRecord::RecognizedAchievement { derived, .. }) => {
            awards_for_student(store, &derived.student, &mut out);
        }
        Payload::Fulfillment(FulfillmentRecord::DegreeAward { .. }) | Payload::OrgRegistration(_) => {}
    }
    finish(out)
}

/// Every fulfillment the chain currently owes, regardless of which block
/// triggered it. Used to recover after a fork switch.
pub fn due_fulfillments(store: &ChainStore) -> Vec<Payload> {
    let state = store.state();
    let mut out = Vec::new();
    for source in state.achievements.keys() {
        recognitions_for_source(store, source, &mut out);
    }
    for student in state.student_origins.keys() {
        awards_for_student(store, student, &mut out);
    }
    finish(out)
}

/// Recomputes a published fulfillment and checks it matches exactly.
pub(crate) fn check_fulfillment(store: &ChainStore, f: &FulfillmentRecord, issuer: &OrgId) -> Result<(), AppendError> {
    let state = store.state();
    let reject = |msg: &str| AppendError::PayloadInvalid(PayloadRejection::Fulfillment(msg.to_owned()));
    let contract = state
        .contract(f.contract_block())
        .ok_or_else(|| reject("contract block unknown"))?;
    match (f, &contract.ast) {
        (
            FulfillmentRecord::RecognizedAchievement {
                contract_block,
                source_achievement_block,
                derived,
            },
            ContractAst::Recognition(c),
        ) => {
            if c.home != *issuer {
                return Err(reject("recognitions are published by the home organization"));
            }
            if state.recognized_pairs.contains(&(*contract_block, *source_achievement_block)) {
                return Err(AppendError::DuplicateFulfillment);
            }
            let source = state
                .achievements
                .get(source_achievement_block)
                .filter(|a| !a.invalidated)
                .ok_or_else(|| reject("source is not an effective achievement"))?;
            match eval_recognition(c, &source.current) {
                Some(expected) if expected == *derived => Ok(()),
                Some(_) => Err(reject("derived record differs from recomputation")),
                None => Err(reject("contract does not apply to source")),
            }
        }
        (
            FulfillmentRecord::DegreeAward {
                contract_block,
                student,
                degree_name,
                evidence,
            },
            ContractAst::Degree(d),
        ) => {
            if d.issuer != *issuer {
                return Err(reject("degrees are awarded by their issuer"));
            }
            if state.awards.contains_key(&(*contract_block, *student)) {
                return Err(AppendError::DuplicateFulfillment);
            }
            if d.degree_name != *degree_name {
                return Err(reject("degree name differs from contract"));
            }
            let t = effective_transcript(store, student);
            if !eval_requirement(&d.requirement, &t, Some(&d.issuer)).fulfilled {
                return Err(reject("requirements are not met"));
            }
            if requirement_evidence(&d.requirement, &t, Some(&d.issuer)) != *evidence {
                return Err(reject("evidence differs from recomputation"));
            }
            Ok(())
        }
        _ => Err(reject("fulfillment kind does not match contract kind")),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProgressError {
    #[error("no block with that hash")]
    UnknownBlock,
    #[error("block does not hold a degree contract")]
    NotADegreeContract,
}

impl ProgressError {
    pub fn name(&self) -> &'static str {
        match self {
            ProgressError::UnknownBlock => "UnknownBlock",
            ProgressError::NotADegreeContract => "NotADegreeContract",
        }
    }
}

/// A student's progress towards a degree.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProgressReport {
    pub student: StudentId,
    pub contract_block: Digest,
    pub fulfilled: bool,
    pub fraction: f64,
    /// Unmet requirement leaves in contract syntax.
    pub missing: Vec<String>,
}

pub fn progress_report(store: &ChainStore, student: &StudentId, contract_block: &Digest) -> Result<ProgressReport, ProgressError> {
    if store.block_by_hash(contract_block).is_none() {
        return Err(ProgressError::UnknownBlock);
    }
    let Some(ContractAst::Degree(d)) = store.state().contract(contract_block).map(|c| &c.ast) else {
        return Err(ProgressError::NotADegreeContract);
    };
    let t = effective_transcript(store, student);
    let eval = eval_requirement(&d.requirement, &t, Some(&d.issuer));
    Ok(ProgressReport {
        student: *student,
        contract_block: *contract_block,
        fulfilled: eval.fulfilled,
        fraction: eval.fraction.to_f64().unwrap_or(0.0),
        missing: eval.missing.iter().map(requirement_text).collect(),
    })
}

impl Decimal {
    pub fn as_ratio(self) -> BigRational {
        ratio(self.units(), Decimal::SCALE)
    }
}
