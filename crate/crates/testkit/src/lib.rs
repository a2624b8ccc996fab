//! Test support shared by the workspace's integration and acceptance
//! tests: a fixture chain builder, random chain generation, brute-force
//! oracles and proptest strategies.

pub mod fixtures;
pub mod gen;
pub mod oracle;
pub mod random;
pub mod trees;
pub mod world;

pub use world::{achievement, easy_schedule, org_key, student, transcript_of, World};
