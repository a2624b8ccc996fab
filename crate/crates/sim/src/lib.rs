//! Deterministic multi-peer simulation of a studchain network.
//!
//! Peers are isolated state machines driven by logical ticks. Full peers
//! mine, gossip their replicas and validate what they receive; light
//! clients keep headers only. A run is a pure function of the scenario,
//! its seed and the difficulty schedule.

pub mod light;
pub mod network;
pub mod report;
pub mod scenario;

pub use light::{light_client_sync, LightClientState, LightSyncError, PayloadCheck};
pub use network::{genesis, org_key, run, FullPeer, PeerNode, Simulation, ROOT_ORG};
pub use report::SimReport;
pub use scenario::{parse_scenario, Action, Event, Query, ScenarioError, SimScenario, Submission};

/// Scenario files shipped with the crate.
pub mod examples {
    pub const PARTITION_HEAL: &str = include_str!("../scenarios/partition_heal.scn");
    pub const STUDY_ABROAD: &str = include_str!("../scenarios/study_abroad.scn");
    pub const SANCTION: &str = include_str!("../scenarios/sanction.scn");
    pub const TAMPER: &str = include_str!("../scenarios/tamper.scn");
}
