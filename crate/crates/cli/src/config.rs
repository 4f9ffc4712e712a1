//! The JSON run configuration shared by every subcommand.

use std::path::{Path, PathBuf};

use photonstat_core::correlation::log_tau_grid;
use photonstat_core::{DetectorParams, EmitterParams, EnvelopeOptions, FlidOptions, G2Options, SimConfig, SimError};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub emitter: EmitterParams,
    #[serde(default)]
    pub detector: DetectorParams,
    pub sim: SimConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub saturation: Option<SaturationConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    /// Intensity-trace, lifetime-trace and FLID bin width.
    pub trace_bin_s: f64,
    pub decay: DecayConfig,
    pub g2: G2Config,
    pub envelope: EnvelopeConfig,
    pub flid: FlidAxes,
}

impl AnalysisConfig {
    pub fn flid_options(&self) -> FlidOptions {
        let f = &self.flid;
        FlidOptions {
            bin_width_s: self.trace_bin_s,
            lifetime_bins: f.lifetime_bins,
            intensity_bins: f.intensity_bins,
            lifetime_max_ns: f.lifetime_max_ns,
            intensity_max: f.intensity_max,
        }
    }
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            trace_bin_s: 0.005,
            decay: DecayConfig::default(),
            g2: G2Config::default(),
            envelope: EnvelopeConfig::default(),
            flid: FlidAxes::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecayConfig {
    pub bin_width_ps: u64,
    pub n_components: usize,
    pub fit_start_offset_ps: u64,
}

impl Default for DecayConfig {
    fn default() -> Self {
        Self {
            bin_width_ps: 64,
            n_components: 3,
            fit_start_offset_ps: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct G2Config {
    pub lag_bin_width_ps: u64,
    /// Peak integration half-width. `None` uses five times the dominant
    /// fitted lifetime.
    pub intra_window_ps: Option<u64>,
    pub n_side_peaks: u32,
    pub side_peak_range: (u32, u32),
    /// Uncorrelated background, both channels. `None` takes the dark rate
    /// from the stream metadata, then the flat floor of the decay fit.
    pub background_rate_hz: Option<f64>,
}

impl Default for G2Config {
    fn default() -> Self {
        let d = G2Options::default();
        Self {
            lag_bin_width_ps: d.lag_bin_width_ps,
            intra_window_ps: None,
            n_side_peaks: d.n_side_peaks,
            side_peak_range: d.side_peak_range,
            background_rate_hz: None,
        }
    }
}

impl G2Config {
    pub fn options(&self, intra_window_ps: u64, background_rate_hz: Option<f64>) -> G2Options {
        G2Options {
            lag_bin_width_ps: self.lag_bin_width_ps,
            intra_window_ps,
            n_side_peaks: self.n_side_peaks,
            side_peak_range: self.side_peak_range,
            background_rate_hz,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvelopeConfig {
    pub tau_min_s: f64,
    pub tau_max_s: f64,
    pub points_per_decade: usize,
    pub relative_halfwidth: f64,
}

impl Default for EnvelopeConfig {
    fn default() -> Self {
        Self {
            tau_min_s: 1e-6,
            tau_max_s: 1.0,
            points_per_decade: 8,
            relative_halfwidth: 0.05,
        }
    }
}

impl EnvelopeConfig {
    pub fn options(&self) -> EnvelopeOptions {
        EnvelopeOptions {
            taus_s: log_tau_grid(self.tau_min_s, self.tau_max_s, self.points_per_decade),
            relative_halfwidth: self.relative_halfwidth,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlidAxes {
    pub lifetime_bins: usize,
    pub intensity_bins: usize,
    pub lifetime_max_ns: Option<f64>,
    pub intensity_max: Option<f64>,
}

impl Default for FlidAxes {
    fn default() -> Self {
        let d = FlidOptions::default();
        Self {
            lifetime_bins: d.lifetime_bins,
            intensity_bins: d.intensity_bins,
            lifetime_max_ns: d.lifetime_max_ns,
            intensity_max: d.intensity_max,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Svg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Used when `--out` is not given.
    pub directory: Option<PathBuf>,
    pub formats: Vec<Format>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: None,
            formats: vec![Format::Csv, Format::Json, Format::Svg],
        }
    }
}

impl OutputConfig {
    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

/// Fluence sweep for `saturate`. The emitter's `mean_excitons_per_pulse`
/// is replaced by `fluence / p_sat` at each point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SaturationConfig {
    /// Planted saturation fluence, µJ/cm².
    pub p_sat_uj_cm2: f64,
    pub fluences_uj_cm2: Vec<f64>,
    /// Acquisition time per fluence; defaults to `sim.duration_s`.
    #[serde(default)]
    pub duration_s: Option<f64>,
}

impl RunConfig {
    /// Parses and validates a config document.
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let key = e.path().to_string();
            CliError::config(if key == "." { "<root>".to_owned() } else { key }, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text)
    }

    /// Checks every parameter before any work starts.
    pub fn validate(&self) -> Result<(), CliError> {
        self.emitter.validate().map_err(sim_key)?;
        self.detector.validate().map_err(sim_key)?;
        self.sim.validate().map_err(sim_key)?;
        let a = &self.analysis;
        positive("analysis.trace_bin_s", a.trace_bin_s)?;
        if a.decay.bin_width_ps == 0 {
            return Err(CliError::config("analysis.decay.bin_width_ps", "must be > 0"));
        }
        if !(1..=photonstat_core::lifetime::MAX_COMPONENTS).contains(&a.decay.n_components) {
            return Err(CliError::config(
                "analysis.decay.n_components",
                format!("must be in 1..={}", photonstat_core::lifetime::MAX_COMPONENTS),
            ));
        }
        if a.g2.lag_bin_width_ps == 0 {
            return Err(CliError::config("analysis.g2.lag_bin_width_ps", "must be > 0"));
        }
        let (lo, hi) = a.g2.side_peak_range;
        if lo == 0 || lo > hi || hi > a.g2.n_side_peaks {
            return Err(CliError::config(
                "analysis.g2.side_peak_range",
                format!("need 1 <= lo <= hi <= n_side_peaks ({})", a.g2.n_side_peaks),
            ));
        }
        if let Some(w) = a.g2.intra_window_ps {
            if w == 0 || w > self.sim.sync_period_ps / 2 {
                return Err(CliError::config("analysis.g2.intra_window_ps", "must lie in 1..=sync_period_ps/2"));
            }
        }
        if let Some(bg) = a.g2.background_rate_hz {
            nonneg("analysis.g2.background_rate_hz", bg)?;
        }
        let e = &a.envelope;
        positive("analysis.envelope.tau_min_s", e.tau_min_s)?;
        if e.tau_max_s.partial_cmp(&e.tau_min_s) != Some(std::cmp::Ordering::Greater) {
            return Err(CliError::config("analysis.envelope.tau_max_s", "must exceed tau_min_s"));
        }
        if e.points_per_decade == 0 {
            return Err(CliError::config("analysis.envelope.points_per_decade", "must be > 0"));
        }
        if !(e.relative_halfwidth > 0.0 && e.relative_halfwidth < 1.0) {
            return Err(CliError::config("analysis.envelope.relative_halfwidth", "must lie in (0, 1)"));
        }
        if a.flid.lifetime_bins < 2 {
            return Err(CliError::config("analysis.flid.lifetime_bins", "must be >= 2"));
        }
        if a.flid.intensity_bins < 2 {
            return Err(CliError::config("analysis.flid.intensity_bins", "must be >= 2"));
        }
        if let Some(m) = a.flid.lifetime_max_ns {
            positive("analysis.flid.lifetime_max_ns", m)?;
        }
        if let Some(m) = a.flid.intensity_max {
            positive("analysis.flid.intensity_max", m)?;
        }
        if let Some(s) = &self.saturation {
            positive("saturation.p_sat_uj_cm2", s.p_sat_uj_cm2)?;
            for (i, &f) in s.fluences_uj_cm2.iter().enumerate() {
                nonneg(&format!("saturation.fluences_uj_cm2[{i}]"), f)?;
            }
            if let Some(d) = s.duration_s {
                positive("saturation.duration_s", d)?;
            }
        }
        Ok(())
    }

    pub fn flid_options(&self) -> FlidOptions {
        self.analysis.flid_options()
    }
}

fn sim_key(e: SimError) -> CliError {
    match e {
        SimError::InvalidParams { field, reason } => {
            let key = if field.starts_with("blinking_model") {
                format!("emitter.{field}")
            } else {
                field
            };
            CliError::ConfigInvalid { key, reason }
        }
        other => other.into(),
    }
}

fn positive(key: &str, v: f64) -> Result<(), CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(CliError::config(key, format!("{v} must be finite and > 0")))
    }
}

fn nonneg(key: &str, v: f64) -> Result<(), CliError> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(CliError::config(key, format!("{v} must be finite and >= 0")))
    }
}
