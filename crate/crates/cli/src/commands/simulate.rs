use std::path::Path;

use photonstat_core::sim::stream_metadata;
use photonstat_core::{expected_rate, simulate_stream, PhotonStream, SimError};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct SimulateSummary {
    pub seed: u64,
    pub duration_s: f64,
    pub records: u64,
    pub channel_counts: Vec<u64>,
    pub mean_rate_hz: f64,
    /// Closed-form expectation; absent for power-law blinking.
    pub expected_rate_hz: Option<f64>,
}

/// Simulates the configured emitter. The stream header carries the resolved
/// config next to the standard metadata keys.
pub fn simulate(cfg: &RunConfig) -> Result<(PhotonStream, SimulateSummary), CliError> {
    let mut stream = simulate_stream(&cfg.emitter, &cfg.detector, &cfg.sim)?;
    let mut meta = stream_metadata(&cfg.emitter, &cfg.detector, &cfg.sim);
    meta["config"] = serde_json::to_value(cfg).expect("config serializes");
    stream.header.metadata = meta.to_string();

    let expected = match expected_rate(&cfg.emitter, &cfg.detector, &cfg.sim) {
        Ok(r) => Some(r),
        Err(SimError::UnsupportedBlinkingModel(_)) => None,
        Err(e) => return Err(e.into()),
    };
    let summary = SimulateSummary {
        seed: cfg.sim.seed,
        duration_s: cfg.sim.duration_s,
        records: stream.len() as u64,
        channel_counts: stream.channel_counts(),
        mean_rate_hz: stream.len() as f64 / cfg.sim.duration_s,
        expected_rate_hz: expected,
    };
    Ok((stream, summary))
}

pub fn cmd_simulate(cfg: &RunConfig, out_path: &Path) -> Result<SimulateSummary, CliError> {
    let (stream, summary) = simulate(cfg)?;
    let bytes = stream.encode()?;
    if let Err(e) = std::fs::write(out_path, bytes) {
        let _ = std::fs::remove_file(out_path);
        return Err(CliError::io(out_path, e));
    }
    Ok(summary)
}
