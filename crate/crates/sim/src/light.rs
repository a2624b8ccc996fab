use studchain_core::block::HEADER_LEN;
use studchain_core::consensus::verify_pow;
use studchain_core::{BlockHeader, DifficultySchedule, Digest};

/// A peer that keeps headers only and trusts one full peer for data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LightClientState {
    headers: Vec<BlockHeader>,
    hashes: Vec<Digest>,
    pub trusted_peer: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum LightSyncError {
    #[error("header chain invalid at height {0}")]
    HeaderChainInvalid(u64),
}

/// Answer to a payload lookup, judged against the client's own header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PayloadCheck {
    Accepted,
    Rejected,
    Unknown,
}

impl LightClientState {
    /// A client pinned to `genesis`, the only header it trusts a priori.
    pub fn new(genesis: BlockHeader, trusted_peer: usize) -> Self {
        LightClientState {
            hashes: vec![genesis.hash()],
            headers: vec![genesis],
            trusted_peer,
        }
    }

    pub fn headers(&self) -> &[BlockHeader] {
        &self.headers
    }

    pub fn head_hash(&self) -> Digest {
        *self.hashes.last().expect("genesis pinned")
    }

    pub fn head_height(&self) -> u64 {
        self.headers.len() as u64 - 1
    }

    pub fn hash_at(&self, height: u64) -> Option<Digest> {
        self.hashes.get(height as usize).copied()
    }

    /// Checks block bytes served by a full peer against the header held
    /// for `height`: the header must match and the payload must hash to
    /// its `payload_hash`.
    pub fn check_block_bytes(&self, height: u64, record: &[u8]) -> PayloadCheck {
        let Some(header) = self.headers.get(height as usize) else {
            return PayloadCheck::Unknown;
        };
        let Some((served, payload)) = split_record(record) else {
            return PayloadCheck::Rejected;
        };
        if served[..] == header.encode()[..] && Digest::of(payload) == header.payload_hash {
            PayloadCheck::Accepted
        } else {
            PayloadCheck::Rejected
        }
    }
}

/// Header bytes and payload bytes of an encoded block, if the length
/// prefix is consistent.
pub fn split_record(record: &[u8]) -> Option<(&[u8], &[u8])> {
    let header = record.get(..HEADER_LEN)?;
    let len = u32::from_be_bytes(record.get(HEADER_LEN..HEADER_LEN + 4)?.try_into().ok()?) as usize;
    let payload = record.get(HEADER_LEN + 4..(HEADER_LEN + 4).checked_add(len)?)?;
    Some((header, payload))
}

/// Replaces the client's header chain with the one `served` (raw header
/// bytes, genesis first), verifying height, linkage and proof of work of
/// every header past the common prefix. The pinned genesis must match.
pub fn light_client_sync(
    client: &LightClientState,
    served: &[Vec<u8>],
    schedule: &DifficultySchedule,
) -> Result<LightClientState, LightSyncError> {
    let mut next = LightClientState {
        headers: Vec::with_capacity(served.len()),
        hashes: Vec::with_capacity(served.len()),
        trusted_peer: client.trusted_peer,
    };
    if served.is_empty() {
        return Err(LightSyncError::HeaderChainInvalid(0));
    }
    for (i, bytes) in served.iter().enumerate() {
        let height = i as u64;
        let bad = LightSyncError::HeaderChainInvalid(height);
        let header = BlockHeader::decode(bytes).map_err(|_| bad)?;
        let hash = header.hash();
        if i == 0 {
            if client.hashes[0] != hash {
                return Err(bad);
            }
        } else {
            let linked = header.height == height && header.prev_hash == next.hashes[i - 1];
            // Headers the client already holds were checked before.
            let known = client.hashes.get(i) == Some(&hash);
            if !linked || !(known || verify_pow(schedule, &header)) {
                return Err(bad);
            }
        }
        next.headers.push(header);
        next.hashes.push(hash);
    }
    Ok(next)
}
