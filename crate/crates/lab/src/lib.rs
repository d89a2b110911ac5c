//! Batch experiments on the disorder continuity of the integrated density
//! of states, with CSV/JSON reporting.

pub mod config;
pub mod experiments;
pub mod report;

pub use config::ExperimentConfig;
pub use experiments::{Check, EnsembleCache, Experiment};
