//! Batch front end for `balmatch`: configuration files, the end-to-end
//! study pipeline and report emission. The `balmatch` binary is a thin
//! argument parser over this crate.

pub mod analysis;
pub mod commands;
pub mod config;
pub mod error;
pub mod grid;
pub mod io;
pub mod pipeline;
pub mod report;

pub use config::RunConfig;
pub use error::{CliError, ErrorClass, Stage};
pub use pipeline::{run_pipeline, StudyReport};
pub use report::write_report;
