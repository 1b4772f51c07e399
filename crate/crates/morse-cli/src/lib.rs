//! Experiment harness around the dual-sampling engine: strict TOML
//! configuration, checkpoint persistence, and the train/sample/bench
//! pipelines with reproducible CSV outputs.

pub mod checkpoint;
pub mod config;
pub mod csvio;
pub mod error;
pub mod pipelines;

pub use checkpoint::{Checkpoint, ModelKind};
pub use config::ExperimentConfig;
pub use error::{CliError, Result};
