//! Experiment harness around `hopper-core`: scenario files, sweeps over
//! seeded replications, confidence intervals and CSV output.

pub mod config;
pub mod experiment;
pub mod output;
pub mod stats;
