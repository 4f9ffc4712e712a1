//! Fluence sweep: one simulated acquisition per fluence, then a saturation
//! fit to the background-subtracted count rates.

use std::path::{Path, PathBuf};

use photonstat_core::{bin_intensity, fit_saturation, PhotonStream, SaturationFit, SaturationPoint, SimConfig};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Format, RunConfig};
use crate::error::CliError;
use crate::report::{num, Bundle, Measured};
use crate::svg::{Axis, Plot, Series};

/// Width of the bins whose scatter sets each rate's uncertainty.
const RATE_BIN_S: f64 = 0.005;

#[derive(Debug, Clone, Serialize)]
pub struct SaturationRow {
    pub fluence_uj_cm2: f64,
    pub mean_excitons_per_pulse: f64,
    pub seed: u64,
    pub records: u64,
    pub dark_rate_hz: f64,
    /// Detected rate minus the dark rate.
    pub intensity_hz: Measured,
}

#[derive(Debug, Clone, Serialize)]
pub struct SaturationReport {
    pub planted_p_sat_uj_cm2: f64,
    pub duration_s: f64,
    pub base_seed: u64,
    pub points: Vec<SaturationRow>,
    pub a: Measured,
    pub b: Measured,
    pub p_sat: Measured,
    /// Relative deviation of the fitted from the planted saturation fluence.
    pub p_sat_relative_error: f64,
    pub covariance: Vec<Vec<f64>>,
    pub chi_square: f64,
    pub reduced_chi_square: f64,
    pub converged: bool,
    pub iterations: usize,
}

pub struct Saturation {
    pub bundle: Bundle,
    pub report: SaturationReport,
    pub fit: SaturationFit,
}

/// Signal rate of one acquisition with its standard error.
///
/// The error is the standard error of the mean over short bins, which
/// includes blinking noise, floored at the shot-noise value.
pub fn signal_rate(stream: &PhotonStream, duration_s: f64, dark_rate_hz: f64) -> Result<Measured, CliError> {
    let n = stream.len() as f64;
    let rate = n / duration_s - dark_rate_hz;
    let poisson = n.max(1.0).sqrt() / duration_s;
    let sigma = if stream.is_empty() {
        poisson
    } else {
        let trace = bin_intensity(stream, RATE_BIN_S)?;
        let k = trace.counts.len();
        if k < 10 {
            poisson
        } else {
            let mean = trace.mean();
            let var = trace.counts.iter().map(|&c| (c as f64 - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
            ((var / k as f64).sqrt() / RATE_BIN_S).max(poisson)
        }
    };
    Ok(Measured::new(rate, sigma))
}

pub fn saturate(cfg: &RunConfig, fluences_override: Option<&[f64]>, seed_override: Option<u64>) -> Result<Saturation, CliError> {
    let sat = cfg
        .saturation
        .as_ref()
        .ok_or_else(|| CliError::config("saturation", "missing; saturate needs p_sat_uj_cm2 and fluences_uj_cm2"))?;
    let fluences = fluences_override.unwrap_or(&sat.fluences_uj_cm2);
    if fluences.is_empty() {
        return Err(CliError::config("saturation.fluences_uj_cm2", "empty"));
    }
    if let Some(i) = fluences.iter().position(|f| !(f.is_finite() && *f > 0.0)) {
        return Err(CliError::config(format!("saturation.fluences_uj_cm2[{i}]"), "must be positive and finite"));
    }
    let duration_s = sat.duration_s.unwrap_or(cfg.sim.duration_s);
    let base_seed = seed_override.unwrap_or(cfg.sim.seed);

    let rows: Vec<SaturationRow> = fluences
        .par_iter()
        .enumerate()
        .map(|(i, &fluence)| {
            let mut emitter = cfg.emitter.clone();
            emitter.mean_excitons_per_pulse = fluence / sat.p_sat_uj_cm2;
            let sim = SimConfig {
                duration_s,
                seed: base_seed.wrapping_add(i as u64),
                ..cfg.sim.clone()
            };
            let stream = photonstat_core::simulate_stream(&emitter, &cfg.detector, &sim)?;
            let dark_rate_hz = cfg.detector.dark_rate_hz * f64::from(stream.header.channel_count);
            Ok(SaturationRow {
                fluence_uj_cm2: fluence,
                mean_excitons_per_pulse: emitter.mean_excitons_per_pulse,
                seed: sim.seed,
                records: stream.len() as u64,
                dark_rate_hz,
                intensity_hz: signal_rate(&stream, duration_s, dark_rate_hz)?,
            })
        })
        .collect::<Result<_, CliError>>()?;

    let points: Vec<SaturationPoint> = rows
        .iter()
        .map(|r| SaturationPoint {
            fluence: r.fluence_uj_cm2,
            intensity: r.intensity_hz.value,
            sigma: r.intensity_hz.sigma,
        })
        .collect();
    let fit = fit_saturation(&points)?;
    let report = SaturationReport {
        planted_p_sat_uj_cm2: sat.p_sat_uj_cm2,
        duration_s,
        base_seed,
        a: Measured::new(fit.a, fit.a_sigma),
        b: Measured::new(fit.b, fit.b_sigma),
        p_sat: Measured::new(fit.p_sat, fit.p_sat_sigma),
        p_sat_relative_error: (fit.p_sat - sat.p_sat_uj_cm2) / sat.p_sat_uj_cm2,
        covariance: fit.covariance.clone(),
        chi_square: fit.chi_square,
        reduced_chi_square: fit.reduced_chi_square,
        converged: fit.converged,
        iterations: fit.iterations,
        points: rows,
    };

    let mut bundle = Bundle::new();
    if cfg.output.wants(Format::Csv) {
        bundle.add_csv(
            "saturation.csv",
            &["fluence_uj_cm2", "mean_excitons_per_pulse", "seed", "records", "intensity_hz", "sigma_hz", "model_hz"],
            report.points.iter().map(|r| {
                vec![
                    num(r.fluence_uj_cm2),
                    num(r.mean_excitons_per_pulse),
                    r.seed.to_string(),
                    r.records.to_string(),
                    num(r.intensity_hz.value),
                    num(r.intensity_hz.sigma),
                    num(fit.intensity_at(r.fluence_uj_cm2)),
                ]
            }),
        );
    }
    if cfg.output.wants(Format::Json) {
        bundle.add_json("saturation_fit.json", &report);
    }
    if cfg.output.wants(Format::Svg) {
        let data = report.points.iter().map(|r| (r.fluence_uj_cm2, r.intensity_hz.value)).collect();
        let errs = report.points.iter().map(|r| r.intensity_hz.sigma).collect();
        let lo = fluences.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = fluences.iter().copied().fold(0.0, f64::max);
        let curve = (0..=100)
            .map(|i| {
                let f = lo * (hi / lo).powf(f64::from(i) / 100.0);
                (f, fit.intensity_at(f))
            })
            .collect();
        bundle.add(
            "saturation.svg",
            Plot::new("Saturation", Axis::log("fluence (µJ/cm²)"), Axis::linear("rate (Hz)"))
                .with(Series::points("measured", data).with_errors(errs))
                .with(Series::line("fit", curve))
                .render()
                .into_bytes(),
        );
    }
    Ok(Saturation { bundle, report, fit })
}

pub fn cmd_saturate(
    cfg: &RunConfig,
    fluences: Option<&[f64]>,
    seed: Option<u64>,
    out_dir: &Path,
) -> Result<(Saturation, Vec<PathBuf>), CliError> {
    let s = saturate(cfg, fluences, seed)?;
    let written = s.bundle.write_to(out_dir)?;
    Ok((s, written))
}
