//! Block payloads and their canonical encoding.
//!
//! Every block carries exactly one [`Payload`]. The encoding starts with a
//! one-byte variant tag followed by the variant's fields in declaration
//! order.

use serde::Serialize;

use crate::crypto::{Digest, OrgId, PUBLIC_KEY_LEN};
use crate::encoding::{DecodeError, Decoder, Encoder};
use crate::engine::FulfillmentRecord;
use crate::ids::{Decimal, StudentId};
use crate::records::{AchievementRecord, AssessmentResult, CorrectionAction, CorrectionRecord, SourceKind};

pub const MAX_TEXT_LEN: usize = 256;
pub const MAX_CREDIT_POINTS: Decimal = Decimal::from_int(60);

/// A payload violated one of its field invariants.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{0}")]
pub struct InvalidPayload(pub String);

fn invalid(msg: impl Into<String>) -> InvalidPayload {
    InvalidPayload(msg.into())
}

/// Public self-description of an organization that wants to write.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OrgRegistration {
    pub display_name: String,
    #[serde(serialize_with = "crate::payload::hex_bytes")]
    pub public_key: [u8; PUBLIC_KEY_LEN],
}

impl OrgRegistration {
    pub fn org_id(&self) -> OrgId {
        OrgId::from_public_key(&self.public_key)
    }

    pub fn validate(&self) -> Result<(), InvalidPayload> {
        if self.display_name.is_empty() || self.display_name.len() > MAX_TEXT_LEN {
            return Err(invalid("display_name must be 1..=256 bytes"));
        }
        Ok(())
    }
}

/// A published smart contract in canonical source form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ContractPayload {
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payload {
    OrgRegistration(OrgRegistration),
    Achievement(AchievementRecord),
    Correction(CorrectionRecord),
    Contract(ContractPayload),
    Fulfillment(FulfillmentRecord),
}

impl Payload {
    const TAG_REGISTRATION: u8 = 0x01;
    const TAG_ACHIEVEMENT: u8 = 0x02;
    const TAG_CORRECTION: u8 = 0x03;
    const TAG_CONTRACT: u8 = 0x04;
    const TAG_FULFILLMENT: u8 = 0x05;

    pub fn kind_name(&self) -> &'static str {
        match self {
            Payload::OrgRegistration(_) => "org_registration",
            Payload::Achievement(_) => "achievement",
            Payload::Correction(_) => "correction",
            Payload::Contract(_) => "contract",
            Payload::Fulfillment(_) => "fulfillment",
        }
    }

    /// Field-level invariants, independent of any chain state.
    pub fn validate(&self) -> Result<(), InvalidPayload> {
        match self {
            Payload::OrgRegistration(r) => r.validate(),
            Payload::Achievement(a) => a.validate(),
            Payload::Correction(c) => c.validate(),
            Payload::Contract(c) => {
                if c.source.is_empty() {
                    Err(invalid("contract source is empty"))
                } else {
                    Ok(())
                }
            }
            Payload::Fulfillment(f) => f.validate(),
        }
    }

    pub fn hash(&self) -> Digest {
        Digest::of(&self.encode_unchecked())
    }

    /// Canonical bytes; fails if a field invariant is violated.
    pub fn canonical_encode(&self) -> Result<Vec<u8>, InvalidPayload> {
        self.validate()?;
        Ok(self.encode_unchecked())
    }

    /// Canonical bytes without invariant checks. Only meaningful for
    /// payloads that were validated or decoded.
    pub fn encode_unchecked(&self) -> Vec<u8> {
        let mut e = Encoder::new();
        match self {
            Payload::OrgRegistration(r) => {
                e.u8(Self::TAG_REGISTRATION).text(&r.display_name).raw(&r.public_key);
            }
            Payload::Achievement(a) => {
                e.u8(Self::TAG_ACHIEVEMENT);
                encode_achievement(&mut e, a);
            }
            Payload::Correction(c) => {
                e.u8(Self::TAG_CORRECTION).digest(&c.target_block_hash);
                match &c.action {
                    CorrectionAction::Replace(a) => {
                        e.u8(1);
                        encode_achievement(&mut e, a);
                    }
                    CorrectionAction::Invalidate => {
                        e.u8(2);
                    }
                }
                e.text(&c.reason);
            }
            Payload::Contract(c) => {
                e.u8(Self::TAG_CONTRACT).text(&c.source);
            }
            Payload::Fulfillment(f) => {
                e.u8(Self::TAG_FULFILLMENT);
                match f {
                    FulfillmentRecord::RecognizedAchievement {
                        contract_block,
                        source_achievement_block,
                        derived,
                    } => {
                        e.u8(1).digest(contract_block).digest(source_achievement_block);
                        encode_achievement(&mut e, derived);
                    }
                    FulfillmentRecord::DegreeAward {
                        contract_block,
                        student,
                        degree_name,
                        evidence,
                    } => {
                        e.u8(2)
                            .digest(contract_block)
                            .raw(student.as_bytes())
                            .text(degree_name)
                            .len_prefix(evidence.len());
                        for d in evidence {
                            e.digest(d);
                        }
                    }
                }
            }
        }
        e.finish()
    }

    /// Strict decoding: the result re-encodes to exactly `bytes` and
    /// satisfies all field invariants.
    pub fn decode(bytes: &[u8]) -> Result<Payload, DecodeError> {
        let mut d = Decoder::new(bytes);
        let payload = match d.u8()? {
            Self::TAG_REGISTRATION => Payload::OrgRegistration(OrgRegistration {
                display_name: d.text()?,
                public_key: d.array()?,
            }),
            Self::TAG_ACHIEVEMENT => Payload::Achievement(decode_achievement(&mut d)?),
            Self::TAG_CORRECTION => {
                let target_block_hash = d.digest()?;
                let action = match d.u8()? {
                    1 => CorrectionAction::Replace(decode_achievement(&mut d)?),
                    2 => CorrectionAction::Invalidate,
                    tag => return Err(DecodeError::UnknownTag { what: "correction action", tag }),
                };
                Payload::Correction(CorrectionRecord {
                    target_block_hash,
                    action,
                    reason: d.text()?,
                })
            }
            Self::TAG_CONTRACT => Payload::Contract(ContractPayload { source: d.text()? }),
            Self::TAG_FULFILLMENT => Payload::Fulfillment(match d.u8()? {
                1 => FulfillmentRecord::RecognizedAchievement {
                    contract_block: d.digest()?,
                    source_achievement_block: d.digest()?,
                    derived: decode_achievement(&mut d)?,
                },
                2 => {
                    let contract_block = d.digest()?;
                    let student = decode_student(&mut d)?;
                    let degree_name = d.text()?;
                    let n = d.count(32)?;
                    let evidence = (0..n).map(|_| d.digest()).collect::<Result<_, _>>()?;
                    FulfillmentRecord::DegreeAward {
                        contract_block,
                        student,
                        degree_name,
                        evidence,
                    }
                }
                tag => return Err(DecodeError::UnknownTag { what: "fulfillment", tag }),
            }),
            tag => return Err(DecodeError::UnknownTag { what: "payload", tag }),
        };
        d.finish()?;
        payload
            .validate()
            .map_err(|_| DecodeError::InvalidValue("payload invariant"))?;
        Ok(payload)
    }
}

fn encode_achievement(e: &mut Encoder, a: &AchievementRecord) {
    e.raw(a.student.as_bytes())
        .text(&a.course_id)
        .text(&a.title)
        .u64(a.credit_points.units())
        .u32(a.workload_hours)
        .raw(a.issuer.as_bytes())
        .len_prefix(a.topics.len());
    for t in &a.topics {
        e.text(t);
    }
    e.u8(match a.result {
        AssessmentResult::Failed => 0,
        AssessmentResult::Passed => 1,
    });
    match a.grade {
        None => e.u8(0),
        Some(g) => e.u8(1).u64(g.units()),
    };
    e.u64(a.assessment_tick).u8(match a.source_kind {
        SourceKind::UniversityExam => 1,
        SourceKind::Mooc => 2,
        SourceKind::OpenBadge => 3,
    });
}

fn decode_student(d: &mut Decoder<'_>) -> Result<StudentId, DecodeError> {
    StudentId::from_bytes(d.array()?).map_err(|_| DecodeError::InvalidValue("student id"))
}

fn decode_achievement(d: &mut Decoder<'_>) -> Result<AchievementRecord, DecodeError> {
    let student = decode_student(d)?;
    let course_id = d.text()?;
    let title = d.text()?;
    let credit_points = Decimal::from_units(d.u64()?);
    let workload_hours = d.u32()?;
    let issuer = OrgId(d.digest()?);
    let n = d.count(4)?;
    let topics = (0..n).map(|_| d.text()).collect::<Result<_, _>>()?;
    let result = match d.u8()? {
        0 => AssessmentResult::Failed,
        1 => AssessmentResult::Passed,
        tag => return Err(DecodeError::UnknownTag { what: "result", tag }),
    };
    let grade = match d.u8()? {
        0 => None,
        1 => Some(Decimal::from_units(d.u64()?)),
        tag => return Err(DecodeError::UnknownTag { what: "grade option", tag }),
    };
    let assessment_tick = d.u64()?;
    let source_kind = match d.u8()? {
        1 => SourceKind::UniversityExam,
        2 => SourceKind::Mooc,
        3 => SourceKind::OpenBadge,
        tag => return Err(DecodeError::UnknownTag { what: "source kind", tag }),
    };
    Ok(AchievementRecord {
        student,
        course_id,
        title,
        credit_points,
        workload_hours,
        issuer,
        topics,
        result,
        grade,
        assessment_tick,
        source_kind,
    })
}

/// Validates a topic tag: lowercase ASCII letters, digits, `_` and `-`,
/// starting with a letter or digit.
pub fn is_valid_tag(tag: &str) -> bool {
    let bytes = tag.as_bytes();
    !bytes.is_empty()
        && bytes.len() <= 64
        && (bytes[0].is_ascii_lowercase() || bytes[0].is_ascii_digit())
        && bytes
            .iter()
            .all(|&b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_' || b == b'-')
}

pub(crate) fn validate_text(field: &str, s: &str, allow_empty: bool) -> Result<(), InvalidPayload> {
    if (!allow_empty && s.is_empty()) || s.len() > MAX_TEXT_LEN {
        return Err(invalid(format!("{field} must be {}..=256 bytes", if allow_empty { 0 } else { 1 })));
    }
    Ok(())
}

pub(crate) fn hex_bytes<S: serde::Serializer>(bytes: &[u8; 32], s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&hex::encode(bytes))
}

/// Canonical encoding of a payload; see [`Payload::canonical_encode`].
pub fn canonical_encode(payload: &Payload) -> Result<Vec<u8>, InvalidPayload> {
    payload.canonical_encode()
}
