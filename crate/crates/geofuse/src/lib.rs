//! File formats, experiment configuration and the command pipeline around
//! `geofuse-core`.

pub mod config;
pub mod error;
pub mod formats;
pub mod pipeline;
pub mod report;

pub use error::{CliError, FormatError, Result};
