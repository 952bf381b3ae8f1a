//! File formats, configuration and command implementations behind the
//! `dpmiv` binary.

pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod output;

pub use error::{CliError, CliResult};
