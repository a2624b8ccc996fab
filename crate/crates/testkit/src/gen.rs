//! proptest strategies for contracts and payloads.

use proptest::collection::{btree_set, vec};
use proptest::prelude::*;

use studchain_core::contract::{Atom, ContractAst, Degree, OrgRef, Predicate, Recognition, Requirement, Sanction};
use studchain_core::payload::{ContractPayload, OrgRegistration};
use studchain_core::records::{AssessmentResult, CorrectionAction, CorrectionRecord, SourceKind};
use studchain_core::{AchievementRecord, Decimal, Digest, FulfillmentRecord, OrgId, Payload, StudentId};

pub fn tag() -> impl Strategy<Value = String> {
    "[a-z][a-z0-9_]{0,6}(-[a-z0-9]{1,3})?"
}

pub fn org_ref() -> impl Strategy<Value = OrgRef> {
    prop_oneof![
        3 => "[a-z][a-z0-9]{0,5}-[a-z]{1,4}".prop_map(OrgRef::Name),
        1 => any::<[u8; 32]>().prop_map(|b| OrgRef::Id(OrgId(Digest(b)))),
    ]
}

/// Decimal with at most four fractional digits in `[lo, hi]` units.
pub fn decimal(lo: u64, hi: u64) -> impl Strategy<Value = Decimal> {
    (lo..=hi).prop_map(Decimal::from_units)
}

pub fn quoted_text() -> impl Strategy<Value = String> {
    "[A-Za-z0-9 \"\\\\.äé-]{1,20}"
}

pub fn source_kind() -> impl Strategy<Value = SourceKind> {
    prop_oneof![
        Just(SourceKind::UniversityExam),
        Just(SourceKind::Mooc),
        Just(SourceKind::OpenBadge)
    ]
}

fn atom_of_kind(kind: u8) -> BoxedStrategy<Atom> {
    match kind {
        0 => org_ref().prop_map(Atom::IssuerEquals).boxed(),
        1 => tag().prop_map(Atom::TopicContains).boxed(),
        2 => decimal(0, 600_000).prop_map(Atom::CreditsAtLeast).boxed(),
        3 => Just(Atom::Passed).boxed(),
        _ => proptest::sample::subsequence(vec![SourceKind::UniversityExam, SourceKind::Mooc, SourceKind::OpenBadge], 1..=3)
            .prop_shuffle()
            .prop_map(Atom::SourceIn)
            .boxed(),
    }
}

pub fn predicate() -> impl Strategy<Value = Predicate> {
    proptest::sample::subsequence(vec![0u8, 1, 2, 3, 4], 1..=5)
        .prop_shuffle()
        .prop_flat_map(|kinds| kinds.into_iter().map(atom_of_kind).collect::<Vec<_>>())
        .prop_map(|atoms| Predicate { atoms })
}

fn leaf() -> impl Strategy<Value = Requirement> {
    prop_oneof![
        (decimal(0, 2_000_000), tag()).prop_map(|(amount, topic)| Requirement::CreditsAtLeast { amount, topic }),
        (quoted_text(), proptest::option::of(org_ref()))
            .prop_map(|(course_id, issuer)| Requirement::Course { course_id, issuer }),
    ]
}

pub fn requirement() -> impl Strategy<Value = Requirement> {
    leaf().prop_recursive(3, 24, 4, |inner| {
        prop_oneof![
            vec(inner.clone(), 1..4).prop_map(Requirement::AllOf),
            vec(inner.clone(), 1..4).prop_map(Requirement::AnyOf),
            vec(inner, 1..4).prop_flat_map(|children| {
                let len = children.len() as u32;
                (1..=len).prop_map(move |n| Requirement::AtLeastNOf {
                    n,
                    children: children.clone(),
                })
            }),
        ]
    })
}

pub fn contract() -> impl Strategy<Value = ContractAst> {
    let recognition = (
        org_ref(),
        org_ref(),
        predicate(),
        decimal(1, 20_000),
        btree_set(tag(), 0..3),
        vec(tag(), 3),
    )
        .prop_filter("home and foreign differ", |(h, f, ..)| h != f)
        .prop_map(|(home, foreign, predicate, factor, sources, targets)| {
            let topic_map = sources.into_iter().zip(targets).collect();
            ContractAst::Recognition(Recognition {
                home,
                foreign,
                predicate,
                factor,
                topic_map,
            })
        });
    let degree = (org_ref(), quoted_text(), requirement()).prop_map(|(issuer, degree_name, requirement)| {
        ContractAst::Degree(Degree {
            issuer,
            degree_name,
            requirement,
        })
    });
    let sanction = (1..1_000_000u64, 1..1_000_000u64)
        .prop_map(|(threshold, window)| ContractAst::Sanction(Sanction { threshold, window }));
    prop_oneof![2 => recognition, 3 => degree, 1 => sanction]
}

fn student_id() -> impl Strategy<Value = StudentId> {
    any::<[u8; 16]>().prop_map(|mut b| {
        b[6] = (b[6] & 0x0f) | 0x40;
        b[8] = (b[8] & 0x3f) | 0x80;
        StudentId::from_bytes(b).unwrap()
    })
}

fn digest() -> impl Strategy<Value = Digest> {
    any::<[u8; 32]>().prop_map(Digest)
}

pub fn achievement_record() -> impl Strategy<Value = AchievementRecord> {
    (
        student_id(),
        "[A-Z]{2}-[0-9]{1,3}",
        "[A-Za-z ]{0,12}",
        decimal(0, 600_000),
        any::<u32>(),
        digest(),
        btree_set(tag(), 1..4),
        any::<bool>(),
        proptest::option::of(decimal(0, 100_000)),
        any::<u64>(),
        source_kind(),
    )
        .prop_map(
            |(student, course_id, title, credit_points, workload_hours, issuer, topics, passed, grade, tick, kind)| {
                AchievementRecord {
                    student,
                    course_id,
                    title,
                    credit_points,
                    workload_hours,
                    issuer: OrgId(issuer),
                    topics: topics.into_iter().collect(),
                    result: if passed {
                        AssessmentResult::Passed
                    } else {
                        AssessmentResult::Failed
                    },
                    grade,
                    assessment_tick: tick,
                    source_kind: kind,
                }
            },
        )
}

/// Any payload that passes its field invariants.
pub fn payload() -> impl Strategy<Value = Payload> {
    prop_oneof![
        ("[a-z ]{1,12}", any::<[u8; 32]>()).prop_map(|(display_name, public_key)| {
            Payload::OrgRegistration(OrgRegistration {
                display_name,
                public_key,
            })
        }),
        achievement_record().prop_map(Payload::Achievement),
        (digest(), proptest::option::of(achievement_record()), "[a-z ]{0,10}").prop_map(|(target, r, reason)| {
            Payload::Correction(CorrectionRecord {
                target_block_hash: target,
                action: r.map_or(CorrectionAction::Invalidate, CorrectionAction::Replace),
                reason,
            })
        }),
        "[A-Z ]{1,30}".prop_map(|source| Payload::Contract(ContractPayload { source })),
        (digest(), digest(), achievement_record()).prop_map(|(c, s, derived)| {
            Payload::Fulfillment(FulfillmentRecord::RecognizedAchievement {
                contract_block: c,
                source_achievement_block: s,
                derived,
            })
        }),
        (digest(), student_id(), "[a-z]{1,8}", btree_set(digest(), 0..4)).prop_map(|(c, student, name, ev)| {
            Payload::Fulfillment(FulfillmentRecord::DegreeAward {
                contract_block: c,
                student,
                degree_name: name,
                evidence: ev.into_iter().collect(),
            })
        }),
    ]
}
