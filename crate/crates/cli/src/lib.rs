//! Experiment orchestration behind the `dmatrack` binary: dataset
//! generation, two-stage training, evaluation against the fingerprinting
//! baseline, and path-count sweeps.

pub mod commands;
pub mod config;
pub mod report;
