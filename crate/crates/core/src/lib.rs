//! Append-only ledger of academic achievements.
//!
//! Organizations register a signing key, then write anonymized achievement
//! records, corrections, and contracts into a hash-linked chain secured by
//! proof of work. Contracts are evaluated deterministically on every peer;
//! the fulfillments they produce are written back as ordinary blocks.

pub mod block;
pub mod consensus;
pub mod contract;
pub mod crypto;
pub mod encoding;
pub mod engine;
pub mod ids;
pub mod payload;
pub mod records;
pub mod store;

pub use block::{sign_block, Block, BlockHeader};
pub use consensus::{fork_choice, DifficultySchedule};
pub use crypto::{Digest, OrgId, OrgKey};
pub use engine::{on_block_appended, FulfillmentRecord, ProgressReport};
pub use ids::{Decimal, StudentId};
pub use payload::Payload;
pub use records::{AchievementRecord, CorrectionRecord, EffectiveTranscript};
pub use store::{AppendError, ChainStore};
