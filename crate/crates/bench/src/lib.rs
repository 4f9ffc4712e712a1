//! Shared fixtures for the criterion benchmarks.

use photonstat_core::{
    decay_histogram, simulate_stream, BlinkingModel, DecayHistogram, DetectorParams, EmitterParams, PhotonStream,
    SimConfig,
};

/// Default emitter with telegraph blinking, 100 Hz dark counts per channel.
pub fn blinking_stream(duration_s: f64, seed: u64) -> PhotonStream {
    let emitter = EmitterParams {
        blinking_model: BlinkingModel::Telegraph {
            k_on_per_s: 7_000.0,
            k_off_per_s: 3_000.0,
        },
        ..EmitterParams::default()
    };
    let detector = DetectorParams {
        dark_rate_hz: 100.0,
        ..DetectorParams::default()
    };
    let cfg = SimConfig {
        duration_s,
        seed,
        ..SimConfig::default()
    };
    simulate_stream(&emitter, &detector, &cfg).expect("valid parameters")
}

/// 64 ps decay histogram of a blinking stream.
pub fn decay_fixture(duration_s: f64) -> DecayHistogram {
    decay_histogram(&blinking_stream(duration_s, 1), 64).expect("non-empty stream")
}
