//! Experiment harness: configuration, seeded runs, reports and exports.

pub mod commands;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod report;
pub mod roundtrip;

pub use config::ExperimentConfig;
pub use error::{HarnessError, Result};
