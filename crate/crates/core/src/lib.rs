//! Clear-aligner planning: tooth-state estimation, plan scoring and
//! treatment simulation.

pub mod agents;
pub mod benchmark;
pub mod config;
pub mod dental;
pub mod error;
pub mod geometry;
pub mod orchestrator;
pub mod presets;
pub mod scoring;
pub mod staging;

pub use error::{Error, Result};
