//! Command-line node and read-only HTTP explorer for the achievement ledger.

pub mod cli;
pub mod explorer;
pub mod files;
pub mod server;
