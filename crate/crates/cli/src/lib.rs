//! Experiment orchestration for the `chaoslab` library: configs, presets,
//! checkpointed runs and plot-data export.

pub mod config;
pub mod criteria;
pub mod error;
pub mod plotdata;
pub mod runner;
