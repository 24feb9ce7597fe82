//! Experiment harness: generate data, place sensors, train, detect and report.

pub mod config;
pub mod error;
pub mod pipeline;
pub mod report;

pub use config::{Experiment, ExperimentConfig};
pub use error::{CliError, Failure};
pub use pipeline::Context;
pub use report::ExperimentReport;
