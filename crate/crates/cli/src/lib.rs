//! Experiment harness library behind the `spherecrit` binary: configuration,
//! the five batch experiments, and deterministic CSV reporting.

pub mod config;
pub mod csvout;
pub mod experiments;
