//! Library side of the `photonstat` binary: config parsing, the four
//! subcommands and the CSV/JSON/SVG writers.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;
pub mod svg;

pub use error::CliError;
