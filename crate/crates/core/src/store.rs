//! The append-only, validated chain and the state derived from it.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{self, Read, Write};

use serde::Serialize;

use crate::block::{verify_header_signature, Block, BlockHeader};
use crate::consensus::{block_work, mine_block, verify_pow, PowError, write_permission, ChainTip, DenyReason, DifficultySchedule, Permission};
use crate::contract::{self, CheckError, ContractAst, OrgRef, ParseError, Sanction};
use crate::crypto::{Digest, OrgId, OrgKey, PUBLIC_KEY_LEN};
use crate::encoding::DecodeError;
use crate::engine::{self, FulfillmentRecord};
use crate::ids::StudentId;
use crate::payload::{InvalidPayload, Payload};
use crate::records::{validate_correction, AchievementRecord, CorrectionAction, CorrectionError};

/// Why a payload was refused.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PayloadRejection {
    #[error("{0}")]
    Field(#[from] InvalidPayload),
    #[error("payload does not match header payload_hash")]
    HashMismatch,
    #[error("record issuer differs from block issuer")]
    IssuerMismatch,
    #[error("organization is already registered")]
    AlreadyRegistered,
    #[error("display name `{0}` is already taken")]
    NameTaken(String),
    #[error("the first block must register the root organization")]
    GenesisNotRegistration,
    #[error("{0}")]
    Correction(#[from] CorrectionError),
    #[error("{0}")]
    ContractSyntax(#[from] ParseError),
    #[error("contract source is not in canonical form")]
    NonCanonicalContract,
    #[error("{0}")]
    ContractCheck(#[from] CheckError),
    #[error("fulfillment rejected: {0}")]
    Fulfillment(String),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AppendError {
    #[error("block does not extend the head (expected height {expected_height}, prev {expected_prev})")]
    LinkageMismatch { expected_height: u64, expected_prev: Digest },
    #[error("proof-of-work invalid")]
    PowInvalid,
    #[error("signature invalid")]
    SignatureInvalid,
    #[error("issuer {0} is not registered")]
    UnknownIssuer(OrgId),
    #[error("issuer {0} lost its write permission")]
    WritePermissionDenied(OrgId),
    #[error("{0}")]
    PayloadInvalid(PayloadRejection),
    #[error("fulfillment was already published")]
    DuplicateFulfillment,
}

impl AppendError {
    /// Stable name of the error kind, as printed by the CLI.
    pub fn name(&self) -> &'static str {
        match self {
            AppendError::LinkageMismatch { .. } => "LinkageMismatch",
            AppendError::PowInvalid => "PowInvalid",
            AppendError::SignatureInvalid => "SignatureInvalid",
            AppendError::UnknownIssuer(_) => "UnknownIssuer",
            AppendError::WritePermissionDenied(_) => "WritePermissionDenied",
            AppendError::PayloadInvalid(_) => "PayloadInvalid",
            AppendError::DuplicateFulfillment => "DuplicateFulfillment",
        }
    }
}

impl From<PayloadRejection> for AppendError {
    fn from(e: PayloadRejection) -> Self {
        AppendError::PayloadInvalid(e)
    }
}

macro_rules! payload_rejection_from {
    ($($t:ty),*) => {$(
        impl From<$t> for AppendError {
            fn from(e: $t) -> Self {
                AppendError::PayloadInvalid(e.into())
            }
        }
    )*};
}

payload_rejection_from!(InvalidPayload, CorrectionError, ParseError, CheckError);

/// An organization as registered on chain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OrgIdentity {
    pub org_id: OrgId,
    pub display_name: String,
    #[serde(serialize_with = "crate::payload::hex_bytes")]
    pub public_key: [u8; PUBLIC_KEY_LEN],
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OrgEntry {
    #[serde(flatten)]
    pub identity: OrgIdentity,
    pub registered_at: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AchievementState {
    pub height: u64,
    pub current: AchievementRecord,
    pub trail: Vec<Digest>,
    pub invalidated: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecognitionState {
    pub height: u64,
    pub contract: Digest,
    pub source: Digest,
    pub record: AchievementRecord,
}

/// A published contract with organization references resolved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActiveContract {
    pub block: Digest,
    pub height: u64,
    pub publisher: OrgId,
    pub ast: ContractAst<OrgId>,
}

/// Everything derived from replaying the chain. Always equal to a fresh
/// replay from genesis.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DerivedState {
    pub root: Option<OrgId>,
    pub orgs: BTreeMap<OrgId, OrgEntry>,
    pub names: BTreeMap<String, OrgId>,
    /// Height at which each banned org crossed a sanction threshold.
    pub bans: BTreeMap<OrgId, u64>,
    pub achievements: BTreeMap<Digest, AchievementState>,
    /// Recognized achievements keyed by their fulfillment block.
    pub recognitions: BTreeMap<Digest, RecognitionState>,
    pub recognized_pairs: BTreeSet<(Digest, Digest)>,
    pub awards: BTreeMap<(Digest, StudentId), Digest>,
    /// Achievement and recognition blocks per student, in chain order.
    pub student_origins: BTreeMap<StudentId, Vec<Digest>>,
    pub contracts: Vec<ActiveContract>,
    pub contract_index: BTreeMap<Digest, usize>,
    /// Heights of correction blocks per issuing org.
    pub corrections: BTreeMap<OrgId, Vec<u64>>,
}

impl DerivedState {
    pub fn replay<'a>(blocks: impl IntoIterator<Item = &'a Block>) -> Self {
        let mut state = DerivedState::default();
        for block in blocks {
            state.apply(block.hash(), block);
        }
        state
    }

    pub fn contract(&self, block: &Digest) -> Option<&ActiveContract> {
        self.contract_index.get(block).map(|&i| &self.contracts[i])
    }

    pub fn sanctions(&self) -> impl Iterator<Item = (u64, &Sanction)> {
        self.contracts.iter().filter_map(|c| match &c.ast {
            ContractAst::Sanction(s) => Some((c.height, s)),
            _ => None,
        })
    }

    /// Applies an already validated block.
    fn apply(&mut self, hash: Digest, block: &Block) {
        let height = block.header.height;
        let issuer = block.header.issuer;
        match &block.payload {
            Payload::OrgRegistration(r) => {
                let org_id = r.org_id();
                if height == 0 {
                    self.root = Some(org_id);
                }
                self.names.insert(r.display_name.clone(), org_id);
                self.orgs.insert(
                    org_id,
                    OrgEntry {
                        identity: OrgIdentity {
                            org_id,
                            display_name: r.display_name.clone(),
                            public_key: r.public_key,
                        },
                        registered_at: height,
                    },
                );
            }
            Payload::Achievement(a) => {
                self.achievements.insert(
                    hash,
                    AchievementState {
                        height,
                        current: a.clone(),
                        trail: Vec::new(),
                        invalidated: false,
                    },
                );
                self.student_origins.entry(a.student).or_default().push(hash);
            }
            Payload::Correction(c) => {
                if let Some(target) = self.achievements.get_mut(&c.target_block_hash) {
                    match &c.action {
                        CorrectionAction::Replace(r) => target.current = r.clone(),
                        CorrectionAction::Invalidate => target.invalidated = true,
                    }
                    target.trail.push(hash);
                }
                self.corrections.entry(issuer).or_default().push(height);
                let sanctions: Vec<Sanction> = self.sanctions().map(|(_, s)| *s).collect();
                for s in sanctions {
                    self.maybe_ban(issuer, &s, height);
                }
            }
            Payload::Contract(c) => {
                let ast = contract::parse(&c.source)
                    .ok()
                    .and_then(|ast| self.resolve(&ast).ok())
                    .expect("validated contract resolves");
                if let ContractAst::Sanction(s) = &ast {
                    // Past correction bursts count, but earlier blocks stay
                    // valid: the ban takes effect from this height.
                    for (org, heights) in &self.corrections {
                        if engine::ban_height(heights, s, 0).is_some() {
                            self.bans.entry(*org).or_insert(height);
                        }
                    }
                }
                self.contract_index.insert(hash, self.contracts.len());
                self.contracts.push(ActiveContract {
                    block: hash,
                    height,
                    publisher: issuer,
                    ast,
                });
            }
            Payload::Fulfillment(FulfillmentRecord::RecognizedAchievement {
                contract_block,
                source_achievement_block,
                derived,
            }) => {
                self.recognized_pairs.insert((*contract_block, *source_achievement_block));
                self.student_origins.entry(derived.student).or_default().push(hash);
                self.recognitions.insert(
                    hash,
                    RecognitionState {
                        height,
                        contract: *contract_block,
                        source: *source_achievement_block,
                        record: derived.clone(),
                    },
                );
            }
            Payload::Fulfillment(FulfillmentRecord::DegreeAward {
                contract_block, student, ..
            }) => {
                self.awards.insert((*contract_block, *student), hash);
            }
        }
    }

    fn maybe_ban(&mut self, org: OrgId, s: &Sanction, height: u64) {
        if self.bans.contains_key(&org) {
            return;
        }
        let lowest = (height + 1).saturating_sub(s.window);
        let count = self
            .corrections
            .get(&org)
            .map_or(0, |hs| hs.iter().filter(|&&h| h >= lowest && h <= height).count() as u64);
        if count >= s.threshold {
            self.bans.insert(org, height);
        }
    }

    pub(crate) fn resolve(&self, ast: &ContractAst) -> Result<ContractAst<OrgId>, CheckError> {
        ast.try_map_orgs(&mut |r: &OrgRef| match r {
            OrgRef::Id(id) if self.orgs.contains_key(id) => Ok(*id),
            OrgRef::Name(name) => self
                .names
                .get(name)
                .copied()
                .ok_or_else(|| CheckError::UnknownOrg(name.clone())),
            OrgRef::Id(id) => Err(CheckError::UnknownOrg(id.to_string())),
        })
    }
}

/// Append-only chain replica with its derived state.
///
/// Appends are serialized through `&mut self`; readers can clone or share
/// `&ChainStore` snapshots freely.
#[derive(Debug, Clone)]
pub struct ChainStore {
    schedule: DifficultySchedule,
    blocks: Vec<Block>,
    hashes: Vec<Digest>,
    index: HashMap<Digest, u64>,
    /// Cumulative work up to and including each height.
    work: Vec<u128>,
    /// Rolling digest over the full encoded bytes of every block.
    replica: Vec<Digest>,
    state: DerivedState,
}

impl ChainStore {
    pub fn new(schedule: DifficultySchedule) -> Self {
        ChainStore {
            schedule,
            blocks: Vec::new(),
            hashes: Vec::new(),
            index: HashMap::new(),
            work: Vec::new(),
            replica: Vec::new(),
            state: DerivedState::default(),
        }
    }

    pub fn schedule(&self) -> &DifficultySchedule {
        &self.schedule
    }

    pub fn state(&self) -> &DerivedState {
        &self.state
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Height the next block must have.
    pub fn next_height(&self) -> u64 {
        self.blocks.len() as u64
    }

    pub fn head_height(&self) -> Option<u64> {
        self.next_height().checked_sub(1)
    }

    /// Hash of the head block, or all zeros for an empty store.
    pub fn head_hash(&self) -> Digest {
        self.hashes.last().copied().unwrap_or(Digest::ZERO)
    }

    pub fn head(&self) -> Option<&Block> {
        self.blocks.last()
    }

    pub fn block(&self, height: u64) -> Option<&Block> {
        self.blocks.get(usize::try_from(height).ok()?)
    }

    pub fn hash_at(&self, height: u64) -> Option<Digest> {
        self.hashes.get(usize::try_from(height).ok()?).copied()
    }

    pub fn height_of(&self, hash: &Digest) -> Option<u64> {
        self.index.get(hash).copied()
    }

    pub fn block_by_hash(&self, hash: &Digest) -> Option<&Block> {
        self.height_of(hash).and_then(|h| self.block(h))
    }

    pub fn total_work(&self) -> u128 {
        self.work.last().copied().unwrap_or(0)
    }

    /// Digest committing to every byte of every stored block. Two replicas
    /// agree on it iff they hold byte-identical chains.
    pub fn replica_digest(&self) -> Digest {
        self.replica.last().copied().unwrap_or(Digest::ZERO)
    }

    pub fn headers(&self) -> impl Iterator<Item = &BlockHeader> {
        self.blocks.iter().map(|b| &b.header)
    }

    /// Mines `payload` as the next block, signed by `key`. No validity
    /// checks are made; see [`check_payload`](Self::check_payload).
    pub fn mine_next(&self, key: &OrgKey, payload: Payload, timestamp: u64) -> Result<Block, PowError> {
        mine_block(&self.schedule, self.next_height(), self.head_hash(), payload, key, timestamp)
    }

    /// Validates `block` as the next block and appends it. Returns the new
    /// head height.
    pub fn append(&mut self, block: Block) -> Result<u64, AppendError> {
        self.check(&block)?;
        Ok(self.push_trusted(block))
    }

    /// Every check [`append`](Self::append) performs, without appending.
    pub fn check(&self, block: &Block) -> Result<(), AppendError> {
        let header = &block.header;
        let height = self.next_height();
        if header.height != height || header.prev_hash != self.head_hash() {
            return Err(AppendError::LinkageMismatch {
                expected_height: height,
                expected_prev: self.head_hash(),
            });
        }
        block.payload.validate().map_err(PayloadRejection::Field)?;
        if block.payload.hash() != header.payload_hash {
            return Err(PayloadRejection::HashMismatch.into());
        }
        if !verify_pow(&self.schedule, header) {
            return Err(AppendError::PowInvalid);
        }
        let public_key = match &block.payload {
            Payload::OrgRegistration(r) => {
                if r.org_id() != header.issuer {
                    return Err(PayloadRejection::IssuerMismatch.into());
                }
                r.public_key
            }
            _ if self.is_empty() => return Err(PayloadRejection::GenesisNotRegistration.into()),
            _ => match self.state.orgs.get(&header.issuer) {
                Some(entry) => entry.identity.public_key,
                None => return Err(AppendError::UnknownIssuer(header.issuer)),
            },
        };
        if !verify_header_signature(header, &block.signature, &public_key) {
            return Err(AppendError::SignatureInvalid);
        }
        self.check_payload(&block.payload, &header.issuer)
    }

    /// Permission and semantic checks for a payload written by `issuer` at
    /// the next height, without any sealing checks. Used before mining.
    pub fn check_payload(&self, payload: &Payload, issuer: &OrgId) -> Result<(), AppendError> {
        payload.validate().map_err(PayloadRejection::Field)?;
        let height = self.next_height();
        if let Payload::OrgRegistration(r) = payload {
            if r.org_id() != *issuer {
                return Err(PayloadRejection::IssuerMismatch.into());
            }
            if self.state.orgs.contains_key(issuer) {
                return Err(PayloadRejection::AlreadyRegistered.into());
            }
            if self.state.names.contains_key(&r.display_name) {
                return Err(PayloadRejection::NameTaken(r.display_name.clone()).into());
            }
            return Ok(());
        }
        if self.is_empty() {
            return Err(PayloadRejection::GenesisNotRegistration.into());
        }
        match write_permission(self, issuer, height) {
            Permission::Allowed => {}
            Permission::Denied(DenyReason::Unregistered) => return Err(AppendError::UnknownIssuer(*issuer)),
            Permission::Denied(DenyReason::Banned) => return Err(AppendError::WritePermissionDenied(*issuer)),
        }
        match payload {
            Payload::OrgRegistration(_) => unreachable!("handled above"),
            Payload::Achievement(a) => {
                if a.issuer != *issuer {
                    return Err(PayloadRejection::IssuerMismatch.into());
                }
            }
            Payload::Correction(c) => validate_correction(self, c, issuer)?,
            Payload::Contract(c) => {
                let ast = contract::parse(&c.source)?;
                if contract::print(&ast) != c.source {
                    return Err(PayloadRejection::NonCanonicalContract.into());
                }
                contract::static_check(&ast, self, issuer)?;
            }
            Payload::Fulfillment(f) => engine::check_fulfillment(self, f, issuer)?,
        }
        Ok(())
    }

    fn push_trusted(&mut self, block: Block) -> u64 {
        let hash = block.hash();
        let height = block.header.height;
        let prev_work = self.total_work();
        let replica = Digest::of_parts(&[self.replica_digest().as_bytes(), &block.encode()]);
        self.state.apply(hash, &block);
        self.work.push(prev_work + block_work(block.header.difficulty));
        self.replica.push(replica);
        self.index.insert(hash, height);
        self.hashes.push(hash);
        self.blocks.push(block);
        height
    }

    /// A copy holding only the first `len` blocks, derived state rebuilt.
    /// The kept prefix was validated when it was appended.
    pub fn truncated(&self, len: usize) -> ChainStore {
        let mut out = ChainStore::new(self.schedule);
        for block in self.blocks.iter().take(len) {
            out.push_trusted(block.clone());
        }
        out
    }

    /// Rebuilds derived state from the block list alone.
    pub fn replayed_state(&self) -> DerivedState {
        DerivedState::replay(&self.blocks)
    }

    /// Encoded bytes of each block, in height order.
    pub fn encoded_blocks(&self) -> Vec<Vec<u8>> {
        self.blocks.iter().map(Block::encode).collect()
    }

    /// Writes the chain file: each block length-prefixed (4-byte big-endian).
    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        for bytes in self.encoded_blocks() {
            w.write_all(&(bytes.len() as u32).to_be_bytes())?;
            w.write_all(&bytes)?;
        }
        w.flush()
    }

    /// Reads and fully validates a chain file.
    pub fn read_from<R: Read>(r: R, schedule: DifficultySchedule) -> Result<ChainStore, ChainFileError> {
        let records = read_records(r)?;
        let mut store = ChainStore::new(schedule);
        for (height, bytes) in records.iter().enumerate() {
            let height = height as u64;
            let block = Block::decode(bytes).map_err(|e| ChainFileError::Invalid(InvalidBlock {
                height,
                reason: InvalidReason::Decode(e),
            }))?;
            store.append(block).map_err(|e| ChainFileError::Invalid(InvalidBlock {
                height,
                reason: InvalidReason::Rejected(e),
            }))?;
        }
        Ok(store)
    }
}

impl ChainTip for ChainStore {
    fn total_work(&self) -> u128 {
        ChainStore::total_work(self)
    }
    fn head_hash(&self) -> Digest {
        ChainStore::head_hash(self)
    }
}

/// Appends `block` to `store`; see [`ChainStore::append`].
pub fn append_block(store: &mut ChainStore, block: Block) -> Result<u64, AppendError> {
    store.append(block)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum InvalidReason {
    #[error("undecodable: {0}")]
    Decode(DecodeError),
    #[error("{0}")]
    Rejected(AppendError),
}

impl InvalidReason {
    pub fn name(&self) -> &'static str {
        match self {
            InvalidReason::Decode(_) => "DecodeError",
            InvalidReason::Rejected(e) => e.name(),
        }
    }
}

/// First height at which a replayed chain fails validation.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid block at height {height}: {reason}")]
pub struct InvalidBlock {
    pub height: u64,
    pub reason: InvalidReason,
}

/// Replays `blocks` from genesis through every append check.
pub fn validate_chain(blocks: &[Block], schedule: &DifficultySchedule) -> Result<(), InvalidBlock> {
    let mut store = ChainStore::new(*schedule);
    for block in blocks {
        let height = store.next_height();
        store.append(block.clone()).map_err(|e| InvalidBlock {
            height,
            reason: InvalidReason::Rejected(e),
        })?;
    }
    Ok(())
}

/// Like [`validate_chain`], starting from raw encoded blocks as stored in a
/// replica. Undecodable records fail at their own height.
pub fn validate_encoded(records: &[Vec<u8>], schedule: &DifficultySchedule) -> Result<(), InvalidBlock> {
    let mut store = ChainStore::new(*schedule);
    for (height, bytes) in records.iter().enumerate() {
        let height = height as u64;
        let block = Block::decode(bytes).map_err(|e| InvalidBlock {
            height,
            reason: InvalidReason::Decode(e),
        })?;
        store.append(block).map_err(|e| InvalidBlock {
            height,
            reason: InvalidReason::Rejected(e),
        })?;
    }
    Ok(())
}

/// Rolling replica digest over raw encoded blocks; equals
/// [`ChainStore::replica_digest`] for an untampered replica.
pub fn replica_digest_of(records: &[Vec<u8>]) -> Digest {
    records
        .iter()
        .fold(Digest::ZERO, |acc, bytes| Digest::of_parts(&[acc.as_bytes(), bytes]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ReplicaCheck {
    Match,
    Mismatch,
}

/// Compares two replica head digests.
pub fn verify_replica(local_head: &Digest, remote_head: &Digest) -> ReplicaCheck {
    if local_head == remote_head {
        ReplicaCheck::Match
    } else {
        ReplicaCheck::Mismatch
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ChainFileError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("truncated record at byte {0}")]
    Truncated(usize),
    #[error("{0}")]
    Invalid(InvalidBlock),
}

impl ChainFileError {
    pub fn name(&self) -> &'static str {
        match self {
            ChainFileError::Io(_) => "Io",
            ChainFileError::Truncated(_) => "ChainFileTruncated",
            ChainFileError::Invalid(b) => b.reason.name(),
        }
    }
}

/// Splits a chain file into its length-prefixed records.
pub fn read_records<R: Read>(mut r: R) -> Result<Vec<Vec<u8>>, ChainFileError> {
    let mut data = Vec::new();
    r.read_to_end(&mut data)?;
    let mut out = Vec::new();
    let mut pos = 0usize;
    while pos < data.len() {
        if data.len() - pos < 4 {
            return Err(ChainFileError::Truncated(pos));
        }
        let len = u32::from_be_bytes(data[pos..pos + 4].try_into().expect("4 bytes")) as usize;
        let start = pos + 4;
        if data.len() - start < len {
            return Err(ChainFileError::Truncated(pos));
        }
        out.push(data[start..start + len].to_vec());
        pos = start + len;
    }
    Ok(out)
}
