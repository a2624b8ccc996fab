//! Block headers, sealed blocks and their wire encoding.

use serde::Serialize;

use crate::crypto::{verify_signature, Digest, OrgId, OrgKey, PUBLIC_KEY_LEN, SIGNATURE_LEN};
use crate::encoding::{DecodeError, Decoder, Encoder};
use crate::payload::Payload;

/// Encoded size of a [`BlockHeader`].
pub const HEADER_LEN: usize = 8 + 32 + 32 + 32 + 8 + 4 + 8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BlockHeader {
    pub height: u64,
    pub prev_hash: Digest,
    pub payload_hash: Digest,
    pub issuer: OrgId,
    /// Logical tick supplied by the caller, never wall-clock time.
    pub timestamp: u64,
    /// Required leading zero bits of the block hash.
    pub difficulty: u32,
    pub nonce: u64,
}

impl BlockHeader {
    pub fn encode(&self) -> [u8; HEADER_LEN] {
        let mut e = Encoder::new();
        e.u64(self.height)
            .digest(&self.prev_hash)
            .digest(&self.payload_hash)
            .raw(self.issuer.as_bytes())
            .u64(self.timestamp)
            .u32(self.difficulty)
            .u64(self.nonce);
        e.finish().try_into().expect("header length is fixed")
    }

    fn decode_from(d: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(BlockHeader {
            height: d.u64()?,
            prev_hash: d.digest()?,
            payload_hash: d.digest()?,
            issuer: OrgId(d.digest()?),
            timestamp: d.u64()?,
            difficulty: d.u32()?,
            nonce: d.u64()?,
        })
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut d = Decoder::new(bytes);
        let header = Self::decode_from(&mut d)?;
        d.finish()?;
        Ok(header)
    }

    pub fn hash(&self) -> Digest {
        block_hash(self)
    }
}

/// Digest of the canonical header bytes.
pub fn block_hash(header: &BlockHeader) -> Digest {
    Digest::of(&header.encode())
}

/// Signs the canonical header bytes.
pub fn sign_block(header: &BlockHeader, key: &OrgKey) -> [u8; SIGNATURE_LEN] {
    key.sign(&header.encode())
}

pub fn verify_header_signature(
    header: &BlockHeader,
    signature: &[u8; SIGNATURE_LEN],
    public_key: &[u8; PUBLIC_KEY_LEN],
) -> bool {
    verify_signature(public_key, &header.encode(), signature)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Block {
    pub header: BlockHeader,
    pub payload: Payload,
    #[serde(serialize_with = "hex_signature")]
    pub signature: [u8; SIGNATURE_LEN],
}

fn hex_signature<S: serde::Serializer>(sig: &[u8; SIGNATURE_LEN], s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&hex::encode(sig))
}

impl Block {
    pub fn hash(&self) -> Digest {
        self.header.hash()
    }

    /// Header bytes, length-prefixed payload bytes, then the signature.
    pub fn encode(&self) -> Vec<u8> {
        let mut e = Encoder::new();
        e.raw(&self.header.encode())
            .bytes(&self.payload.encode_unchecked())
            .raw(&self.signature);
        e.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut d = Decoder::new(bytes);
        let header = BlockHeader::decode_from(&mut d)?;
        let payload = Payload::decode(d.bytes()?)?;
        let signature = d.array()?;
        d.finish()?;
        Ok(Block {
            header,
            payload,
            signature,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::payload::OrgRegistration;

    fn header() -> BlockHeader {
        BlockHeader {
            height: 3,
            prev_hash: Digest::of(b"prev"),
            payload_hash: Digest::of(b"payload"),
            issuer: OrgKey::from_seed([9; 32]).org_id(),
            timestamp: 17,
            difficulty: 8,
            nonce: 42,
        }
    }

    #[test]
    fn header_round_trip_and_length() {
        let h = header();
        let bytes = h.encode();
        assert_eq!(bytes.len(), HEADER_LEN);
        assert_eq!(BlockHeader::decode(&bytes).unwrap(), h);
    }

    #[test]
    fn hash_sensitive_to_one_bit() {
        let a = header();
        let mut b = header();
        b.prev_hash.0[31] ^= 1;
        assert_eq!(block_hash(&a), block_hash(&header()));
        assert_ne!(block_hash(&a), block_hash(&b));
    }

    #[test]
    fn signatures_bind_the_header() {
        let key = OrgKey::from_seed([9; 32]);
        let other = OrgKey::from_seed([8; 32]);
        let h = header();
        let sig = sign_block(&h, &key);
        assert_eq!(sig, sign_block(&h, &key));
        assert!(verify_header_signature(&h, &sig, &key.public_key()));
        assert!(!verify_header_signature(&h, &sig, &other.public_key()));
        let mut flipped = h.clone();
        flipped.timestamp ^= 1;
        assert!(!verify_header_signature(&flipped, &sig, &key.public_key()));
    }

    #[test]
    fn block_round_trip() {
        let key = OrgKey::from_seed([9; 32]);
        let payload = Payload::OrgRegistration(OrgRegistration {
            display_name: "root".into(),
            public_key: key.public_key(),
        });
        let mut h = header();
        h.payload_hash = payload.hash();
        let block = Block {
            signature: sign_block(&h, &key),
            header: h,
            payload,
        };
        let bytes = block.encode();
        assert_eq!(Block::decode(&bytes).unwrap(), block);
        let mut trailing = bytes.clone();
        trailing.push(0);
        assert!(Block::decode(&trailing).is_err());
    }
}
