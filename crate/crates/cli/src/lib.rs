//! Experiment runner for the `risfair` simulator: TOML configs, sweeps,
//! validation suites and CSV output.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod output;
pub mod simulate;
pub mod validate;

pub use config::{ConfigError, ExperimentConfig, Overrides};
