//! File formats, the training driver and the command implementations
//! behind the `cyclevc` binary.
//!
//! Every `cmd_*` function validates all of its inputs before doing any
//! expensive work and reports failures as a [`Failure`] carrying the exit
//! status: 1 for invalid input, 2 for a failure during the work itself.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod mcp;
pub mod stats;
pub mod synth_cmd;
pub mod train;

pub use error::{Error, Failure, FormatError, Result};

/// Environment variable selecting the log level.
pub const LOG_ENV: &str = "CYCLEVC_LOG";

/// `quiet`, `info` or `debug`; unset means `info`.
pub fn log_level(value: Option<&str>) -> Result<log::LevelFilter> {
    match value.map(str::trim) {
        None | Some("") | Some("info") => Ok(log::LevelFilter::Info),
        Some("quiet") => Ok(log::LevelFilter::Off),
        Some("debug") => Ok(log::LevelFilter::Debug),
        Some(other) => Err(Error::Config(format!(
            "{LOG_ENV} must be quiet, info or debug, got '{other}'"
        ))),
    }
}
