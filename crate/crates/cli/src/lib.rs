//! Pipeline driver for the `hyperforest` binary: configuration, model
//! files, the synthetic data generator and one function per command.

pub mod commands;
pub mod config;
pub mod error;
pub mod model_file;
pub mod synth;

pub use config::PipelineConfig;
pub use error::CliError;
