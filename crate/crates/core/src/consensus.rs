//! Proof-of-work, the hardening difficulty schedule, fork choice and write
//! permission.

use serde::{Deserialize, Serialize};

use crate::block::{block_hash, sign_block, Block, BlockHeader};
use crate::crypto::{Digest, OrgId, OrgKey};
use crate::payload::Payload;
use crate::store::ChainStore;

/// Difficulty grows by one bit every `step_every` heights, starting at
/// `base_bits` and capped at `cap_bits`.
///
/// This is the only place the write cost is decided; swapping the
/// admission rule for something other than proof-of-work would start here.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DifficultySchedule {
    pub base_bits: u32,
    pub step_every: u64,
    pub cap_bits: u32,
}

impl Default for DifficultySchedule {
    fn default() -> Self {
        DifficultySchedule {
            base_bits: 8,
            step_every: 1000,
            cap_bits: 24,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScheduleError {
    #[error("require 1 <= base_bits <= cap_bits <= 32 (got base {base}, cap {cap})")]
    Bits { base: u32, cap: u32 },
    #[error("step_every must be at least 1")]
    Step,
}

impl DifficultySchedule {
    pub fn new(base_bits: u32, step_every: u64, cap_bits: u32) -> Result<Self, ScheduleError> {
        if !(1 <= base_bits && base_bits <= cap_bits && cap_bits <= 32) {
            return Err(ScheduleError::Bits {
                base: base_bits,
                cap: cap_bits,
            });
        }
        if step_every == 0 {
            return Err(ScheduleError::Step);
        }
        Ok(DifficultySchedule {
            base_bits,
            step_every,
            cap_bits,
        })
    }

    pub fn difficulty_at(&self, height: u64) -> u32 {
        difficulty_at(self, height)
    }
}

/// `min(cap_bits, base_bits + floor(height / step_every))`.
pub fn difficulty_at(schedule: &DifficultySchedule, height: u64) -> u32 {
    let steps = height / schedule.step_every.max(1);
    let bits = u64::from(schedule.base_bits).saturating_add(steps);
    bits.min(u64::from(schedule.cap_bits)) as u32
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PowError {
    #[error("nonce space exhausted")]
    NonceExhausted,
}

/// Smallest nonce `>= nonce_start` whose header hash has at least `bits`
/// leading zero bits. Returns the nonce and the number of hashes tried.
pub fn solve_challenge_counted(
    template: &BlockHeader,
    bits: u32,
    nonce_start: u64,
) -> Result<(u64, u64), PowError> {
    let mut header = template.clone();
    let mut attempts = 0u64;
    let mut nonce = nonce_start;
    loop {
        header.nonce = nonce;
        attempts += 1;
        if block_hash(&header).leading_zero_bits() >= bits {
            return Ok((nonce, attempts));
        }
        nonce = nonce.checked_add(1).ok_or(PowError::NonceExhausted)?;
    }
}

pub fn solve_challenge(template: &BlockHeader, bits: u32, nonce_start: u64) -> Result<u64, PowError> {
    solve_challenge_counted(template, bits, nonce_start).map(|(nonce, _)| nonce)
}

/// Builds, seals and signs a block carrying `payload` at `height` on top of
/// `prev_hash`. The nonce search starts at 0, so mining is deterministic.
pub fn mine_block(
    schedule: &DifficultySchedule,
    height: u64,
    prev_hash: Digest,
    payload: Payload,
    key: &OrgKey,
    timestamp: u64,
) -> Result<Block, PowError> {
    let difficulty = difficulty_at(schedule, height);
    let mut header = BlockHeader {
        height,
        prev_hash,
        payload_hash: payload.hash(),
        issuer: key.org_id(),
        timestamp,
        difficulty,
        nonce: 0,
    };
    header.nonce = solve_challenge(&header, difficulty, 0)?;
    let signature = sign_block(&header, key);
    Ok(Block {
        header,
        payload,
        signature,
    })
}

/// The header meets its own difficulty and that difficulty is the one the
/// schedule demands at its height.
pub fn verify_pow(schedule: &DifficultySchedule, header: &BlockHeader) -> bool {
    header.difficulty == difficulty_at(schedule, header.height)
        && block_hash(header).leading_zero_bits() >= header.difficulty
}

/// Expected hash attempts for a block of the given difficulty.
pub fn block_work(difficulty: u32) -> u128 {
    1u128 << difficulty.min(127)
}

/// Anything that can compete in fork choice.
pub trait ChainTip {
    fn total_work(&self) -> u128;
    fn head_hash(&self) -> Digest;
}

impl<T: ChainTip + ?Sized> ChainTip for &T {
    fn total_work(&self) -> u128 {
        (**self).total_work()
    }
    fn head_hash(&self) -> Digest {
        (**self).head_hash()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ForkChoiceError {
    #[error("no candidate chains")]
    EmptyCandidateSet,
}

/// Index of the preferred candidate: most total work, then the
/// lexicographically smaller head digest.
pub fn fork_choice<C: ChainTip>(candidates: &[C]) -> Result<usize, ForkChoiceError> {
    candidates
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| {
            b.total_work()
                .cmp(&a.total_work())
                .then_with(|| a.head_hash().cmp(&b.head_hash()))
        })
        .map(|(i, _)| i)
        .ok_or(ForkChoiceError::EmptyCandidateSet)
}

/// True if a chain with `(work, head)` beats `(other_work, other_head)`.
pub fn prefers(work: u128, head: &Digest, other_work: u128, other_head: &Digest) -> bool {
    work > other_work || (work == other_work && head < other_head)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DenyReason {
    Unregistered,
    Banned,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Permission {
    Allowed,
    Denied(DenyReason),
}

/// Whether `issuer` may write a block at `at_height`: it must have been
/// registered at a lower height and not be banned by a sanction that took
/// effect below `at_height`.
pub fn write_permission(store: &ChainStore, issuer: &OrgId, at_height: u64) -> Permission {
    let state = store.state();
    match state.orgs.get(issuer) {
        Some(entry) if entry.registered_at < at_height => {}
        _ => return Permission::Denied(DenyReason::Unregistered),
    }
    match state.bans.get(issuer) {
        Some(&ban_height) if ban_height < at_height => Permission::Denied(DenyReason::Banned),
        _ => Permission::Allowed,
    }
}
