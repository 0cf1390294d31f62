//! Experiment driver for `mlab-core`: seeded field families, boundedness
//! and estimate scans, JSON-lines/CSV reports and the `mlab` command line.

pub mod cli;
pub mod config;
pub mod error;
pub mod experiments;
pub mod family;
pub mod report;

pub use cli::run_cli;
pub use config::ExperimentConfig;
pub use error::{HarnessError, Result};
pub use report::ReportRecord;
