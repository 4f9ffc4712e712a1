use std::path::PathBuf;

use photonstat_core::{CorrelationError, FitError, LifetimeError, SimError, StreamError};
use thiserror::Error;

/// Every failure the front end reports. The display text names the module
/// the error came from.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: invalid `{key}`: {reason}")]
    ConfigInvalid { key: String, reason: String },
    #[error("io: {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("photon_stream: {0}")]
    Stream(#[from] StreamError),
    #[error("emitter_sim: {0}")]
    Sim(#[from] SimError),
    #[error("correlation: {0}")]
    Correlation(#[from] CorrelationError),
    #[error("lifetime_flid: {0}")]
    Lifetime(#[from] LifetimeError),
    #[error("fitting: {0}")]
    Fit(#[from] FitError),
    #[error("selftest: {failed} of {total} checks failed")]
    SelftestFailed { failed: usize, total: usize },
}

impl CliError {
    pub fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        CliError::ConfigInvalid {
            key: key.into(),
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}
