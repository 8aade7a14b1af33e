//! Command line, model loading, and the teleop/telemetry service around
//! `lanepilot-core`.

pub mod cli;
pub mod models;
pub mod server;
pub mod session;
pub mod wire;
