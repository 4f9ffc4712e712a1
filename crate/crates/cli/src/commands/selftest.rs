//! Quick oracle-equivalence and analytic-limit checks, runnable from the
//! installed binary.

use photonstat_core::oracle::{g2_all_pairs_counts, g2_sliding_counts, separation_pairs_brute_force};
use photonstat_core::stream::channel_times_ps;
use photonstat_core::{
    decode_stream, expected_rate, fit_multiexp, fit_saturation, g2_envelope, g2_pulsed, simulate_stream,
    DecayHistogram, DetectorParams, EmitterParams, EnvelopeOptions, G2Options, PhotonRecord, PhotonStream,
    SaturationPoint, SimConfig, StreamHeader,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::Serialize;

use crate::error::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct SelftestReport {
    pub passed: usize,
    pub total: usize,
    pub checks: Vec<Check>,
}

fn check(name: &str, result: Result<(bool, String), CliError>) -> Check {
    let (passed, detail) = result.unwrap_or_else(|e| (false, e.to_string()));
    Check {
        name: name.into(),
        passed,
        detail,
    }
}

/// Random two-channel stream with clustered pulses, so that equal-pulse and
/// adjacent-pulse pairs are common.
fn random_stream(seed: u64, n: usize) -> PhotonStream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let header = StreamHeader::default();
    let slots = header.microtime_slots() as u32;
    let mut nsync = 0u64;
    let mut records: Vec<PhotonRecord> = (0..n)
        .map(|_| {
            nsync += rng.random_range(0..4);
            PhotonRecord::new(rng.random_range(0..2), nsync, rng.random_range(0..slots))
        })
        .collect();
    records.sort();
    PhotonStream::new(header, records).expect("sorted records")
}

fn sliding_matches_all_pairs() -> Result<(bool, String), CliError> {
    let opts = G2Options::default();
    for seed in 0..20 {
        let s = random_stream(seed, 2_000);
        if g2_sliding_counts(&s, &opts) != g2_all_pairs_counts(&s, &opts) {
            return Ok((false, format!("counts differ for seed {seed}")));
        }
    }
    Ok((true, "20 random streams, lag histograms and peak areas identical".into()))
}

fn codec_round_trip() -> Result<(bool, String), CliError> {
    let s = random_stream(99, 50_000);
    let back = decode_stream(&s.encode()?)?;
    let same = back.records == s.records && back.header.sync_period_ps == s.header.sync_period_ps;
    Ok((same, format!("{} records", s.len())))
}

fn envelope_matches_pair_oracle() -> Result<(bool, String), CliError> {
    let s = random_stream(7, 20_000);
    let period_s = s.sync_period_ps() as f64 * 1e-12;
    let taus: Vec<f64> = [3.0, 10.0, 40.0, 150.0].iter().map(|k| k * period_s).collect();
    let env = g2_envelope(
        &s,
        &EnvelopeOptions {
            taus_s: taus,
            relative_halfwidth: 0.05,
        },
    )?;
    let pulses = |ch| s.records.iter().filter(|r| r.channel == ch).map(|r| r.nsync).collect::<Vec<_>>();
    let (a, b) = (pulses(0), pulses(1));
    for p in &env.points {
        let want = separation_pairs_brute_force(&a, &b, p.delta_lo, p.delta_hi);
        if p.coincidences != want {
            return Ok((false, format!("{} pairs at tau {} s, oracle {want}", p.coincidences, p.tau_s)));
        }
    }
    Ok((true, format!("{} delays", env.points.len())))
}

fn no_biexciton_no_center_peak() -> Result<(bool, String), CliError> {
    let emitter = EmitterParams {
        qy_biexciton: 0.0,
        mean_excitons_per_pulse: 1.0,
        ..EmitterParams::default()
    };
    let cfg = SimConfig {
        duration_s: 0.5,
        seed: 1,
        ..SimConfig::default()
    };
    let s = simulate_stream(&emitter, &DetectorParams::default(), &cfg)?;
    let g2 = g2_pulsed(&s, &G2Options::default())?;
    Ok((g2.center_peak_area == 0, format!("center area {}, side mean {:.1}", g2.center_peak_area, g2.side_peak_mean)))
}

fn rate_matches_closed_form() -> Result<(bool, String), CliError> {
    let emitter = EmitterParams::default();
    let detector = DetectorParams::default();
    let cfg = SimConfig {
        duration_s: 0.5,
        seed: 2,
        ..SimConfig::default()
    };
    let s = simulate_stream(&emitter, &detector, &cfg)?;
    let want = expected_rate(&emitter, &detector, &cfg)?;
    let n = s.len() as f64;
    let z = (n - want * cfg.duration_s) / (want * cfg.duration_s).sqrt();
    Ok((z.abs() < 5.0, format!("{n} photons, expected {:.0}, z = {z:.2}", want * cfg.duration_s)))
}

fn decay_fit_recovers_lifetime() -> Result<(bool, String), CliError> {
    let tau_ns = 15.3;
    let period = 400_000u64;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let exp = Exp::new(1.0 / (tau_ns * 1e3)).expect("positive rate");
    let delays = (0..200_000).map(|_| (5_000.0 + exp.sample(&mut rng)) as u64 % period);
    let hist = DecayHistogram::from_delays_ps(delays, 64, period)?;
    let fit = fit_multiexp(&hist, 1, 0)?;
    let c = &fit.components[0];
    let z = (c.lifetime_ns - tau_ns) / c.lifetime_sigma_ns;
    Ok((z.abs() < 5.0, format!("tau {:.3} ± {:.3} ns, planted {tau_ns}", c.lifetime_ns, c.lifetime_sigma_ns)))
}

fn saturation_fit_exact_on_model() -> Result<(bool, String), CliError> {
    let (a, b, p_sat) = (4.0e4, 2.0e3, 9.0);
    let points: Vec<SaturationPoint> = [1.0, 2.0, 4.0, 9.0, 18.0, 36.0, 72.0]
        .iter()
        .map(|&f| SaturationPoint {
            fluence: f,
            intensity: a * (1.0 - (-f / p_sat).exp()) + b * f,
            sigma: 100.0,
        })
        .collect();
    let fit = fit_saturation(&points)?;
    let rel = (fit.p_sat - p_sat).abs() / p_sat;
    Ok((rel < 1e-6, format!("P_sat {} (relative error {rel:.1e})", fit.p_sat)))
}

fn channel_split() -> Result<(bool, String), CliError> {
    let s = random_stream(11, 10_000);
    let total = channel_times_ps(&s, 0).len() + channel_times_ps(&s, 1).len();
    Ok((total == s.len(), format!("{total} of {} records", s.len())))
}

pub fn selftest() -> SelftestReport {
    let checks = vec![
        check("g2_sliding_equals_all_pairs", sliding_matches_all_pairs()),
        check("envelope_equals_pair_oracle", envelope_matches_pair_oracle()),
        check("codec_round_trip", codec_round_trip()),
        check("channel_split_is_partition", channel_split()),
        check("no_biexciton_empty_center_peak", no_biexciton_no_center_peak()),
        check("rate_matches_closed_form", rate_matches_closed_form()),
        check("decay_fit_recovers_lifetime", decay_fit_recovers_lifetime()),
        check("saturation_fit_exact_on_model", saturation_fit_exact_on_model()),
    ];
    SelftestReport {
        passed: checks.iter().filter(|c| c.passed).count(),
        total: checks.len(),
        checks,
    }
}
