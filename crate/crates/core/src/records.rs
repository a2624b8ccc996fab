//! Achievement and correction records, and the effective transcript a
//! student ends up with once corrections are applied.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::crypto::{Digest, OrgId};
use crate::ids::{Decimal, StudentId};
use crate::payload::{is_valid_tag, validate_text, InvalidPayload, Payload, MAX_CREDIT_POINTS};
use crate::store::ChainStore;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum AssessmentResult {
    Passed,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum SourceKind {
    UniversityExam,
    Mooc,
    OpenBadge,
}

/// One assessment result of one (anonymous) student.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AchievementRecord {
    pub student: StudentId,
    pub course_id: String,
    pub title: String,
    /// ECTS-style credit points, at most 60.
    pub credit_points: Decimal,
    pub workload_hours: u32,
    pub issuer: OrgId,
    pub topics: Vec<String>,
    pub result: AssessmentResult,
    pub grade: Option<Decimal>,
    pub assessment_tick: u64,
    pub source_kind: SourceKind,
}

impl AchievementRecord {
    pub fn validate(&self) -> Result<(), InvalidPayload> {
        validate_text("course_id", &self.course_id, false)?;
        validate_text("title", &self.title, true)?;
        if self.credit_points > MAX_CREDIT_POINTS {
            return Err(InvalidPayload("credit_points must not exceed 60".into()));
        }
        if self.topics.is_empty() {
            return Err(InvalidPayload("topics must not be empty".into()));
        }
        for (i, t) in self.topics.iter().enumerate() {
            if !is_valid_tag(t) {
                return Err(InvalidPayload(format!("topic `{t}` is not a lowercase tag")));
            }
            if self.topics[..i].contains(t) {
                return Err(InvalidPayload(format!("topic `{t}` listed twice")));
            }
        }
        Ok(())
    }

    pub fn passed(&self) -> bool {
        self.result == AssessmentResult::Passed
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum CorrectionAction {
    Replace(AchievementRecord),
    Invalidate,
}

/// Later block that replaces or withdraws an earlier achievement. The
/// original block stays in the chain untouched.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CorrectionRecord {
    pub target_block_hash: Digest,
    pub action: CorrectionAction,
    pub reason: String,
}

impl CorrectionRecord {
    pub fn validate(&self) -> Result<(), InvalidPayload> {
        validate_text("reason", &self.reason, true)?;
        match &self.action {
            CorrectionAction::Replace(a) => a.validate(),
            CorrectionAction::Invalidate => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TranscriptEntry {
    pub achievement: AchievementRecord,
    pub origin_block_hash: Digest,
    /// Correction blocks applied to this entry, in chain order.
    pub correction_trail: Vec<Digest>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EffectiveTranscript {
    pub student: StudentId,
    pub entries: Vec<TranscriptEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CorrectionError {
    #[error("correction target is not in the chain")]
    UnknownTarget,
    #[error("only the original issuer may correct an achievement")]
    IssuerMismatch,
    #[error("achievement was already invalidated")]
    AlreadyInvalidated,
    #[error("correction target is not an achievement")]
    TargetNotAchievement,
    #[error("replacement names a different student")]
    StudentMismatch,
}

/// A student's achievements after applying corrections in chain order.
///
/// Invalidated achievements are dropped, as are recognitions derived from
/// them. Entries appear in the order their origin blocks were written.
/// An unknown student yields an empty transcript.
pub fn effective_transcript(store: &ChainStore, student: &StudentId) -> EffectiveTranscript {
    let state = store.state();
    let mut entries = Vec::new();
    for origin in state.student_origins.get(student).into_iter().flatten() {
        if let Some(a) = state.achievements.get(origin) {
            if !a.invalidated {
                entries.push(TranscriptEntry {
                    achievement: a.current.clone(),
                    origin_block_hash: *origin,
                    correction_trail: a.trail.clone(),
                });
            }
        } else if let Some(r) = state.recognitions.get(origin) {
            let source_alive = state.achievements.get(&r.source).is_some_and(|s| !s.invalidated);
            if source_alive {
                entries.push(TranscriptEntry {
                    achievement: r.record.clone(),
                    origin_block_hash: *origin,
                    correction_trail: Vec::new(),
                });
            }
        }
    }
    EffectiveTranscript {
        student: *student,
        entries,
    }
}

/// Checks a correction against the current chain.
pub fn validate_correction(store: &ChainStore, c: &CorrectionRecord, issuer: &OrgId) -> Result<(), CorrectionError> {
    let Some(block) = store.block_by_hash(&c.target_block_hash) else {
        return Err(CorrectionError::UnknownTarget);
    };
    let Payload::Achievement(original) = &block.payload else {
        return Err(CorrectionError::TargetNotAchievement);
    };
    if original.issuer != *issuer {
        return Err(CorrectionError::IssuerMismatch);
    }
    let state = store
        .state()
        .achievements
        .get(&c.target_block_hash)
        .expect("every achievement block has derived state");
    if state.invalidated {
        return Err(CorrectionError::AlreadyInvalidated);
    }
    if let CorrectionAction::Replace(replacement) = &c.action {
        if replacement.issuer != *issuer {
            return Err(CorrectionError::IssuerMismatch);
        }
        if replacement.student != original.student {
            return Err(CorrectionError::StudentMismatch);
        }
    }
    Ok(())
}

/// Number of correction blocks (replacements and withdrawals) each
/// organization wrote within the last `window` heights, head included.
pub fn correction_counts(store: &ChainStore, window: u64) -> BTreeMap<OrgId, u64> {
    let Some(head) = store.head_height() else {
        return BTreeMap::new();
    };
    let lowest = (head + 1).saturating_sub(window.max(1));
    store
        .state()
        .corrections
        .iter()
        .filter_map(|(org, heights)| {
            let n = heights.iter().filter(|&&h| h >= lowest).count() as u64;
            (n > 0).then_some((*org, n))
        })
        .collect()
}

/// Plain-text dump: one tab-separated line per entry with origin hash,
/// course id, credits, topics and result.
pub fn transcript_text(t: &EffectiveTranscript) -> String {
    let mut out = String::new();
    for e in &t.entries {
        let a = &e.achievement;
        let result = match a.result {
            AssessmentResult::Passed => "PASSED",
            AssessmentResult::Failed => "FAILED",
        };
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            e.origin_block_hash,
            a.course_id,
            a.credit_points,
            a.topics.join(","),
            result
        );
    }
    out
}
