//! Command-line front end for the moving-object-aware trajectory pipeline:
//! scene simulation, dynamic-point extraction, detection filtering, and
//! masked-vs-unmasked trajectory evaluation, all driven through strict,
//! deterministic file formats.

pub mod config;
pub mod error;
pub mod io;
pub mod report;
pub mod stages;

pub use config::{ParamOverrides, PipelineConfig};
pub use error::CliError;
pub use report::{BatchSummary, RunReport};
