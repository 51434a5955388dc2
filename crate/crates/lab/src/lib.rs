//! Experiment orchestration for multi-timescale PPO: configs, seeded sweeps,
//! CSV diagnostics and SVG figures.

pub mod cli;
pub mod config;
pub mod csvlog;
pub mod error;
pub mod figures;
pub mod runner;

pub use config::TrainConfig;
pub use error::{LabError, Result};
