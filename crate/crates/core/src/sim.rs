//! Monte Carlo photon-stream generator for a pulsed, blinking emitter.
//!
//! Each laser pulse creates `n ~ Poisson(<N>)` excitons. In the neutral
//! (bright) state a multi-exciton first relaxes through the biexciton step
//! (one photon with probability `qy_biexciton`, delay `Exp(tau_biexciton)`),
//! then the exciton step (probability `qy_exciton`, further delay
//! `Exp(tau_exciton)`). States above the biexciton relax instantly and
//! non-radiatively. In the charged (grey) state any excitation recombines in a
//! single trion step. The state process runs in absolute time.
//!
//! Detected photons are split onto two channels, smeared by Gaussian jitter,
//! quantized, and passed through a non-paralyzable dead-time filter per
//! channel. Dark counts are homogeneous Poisson per channel.
//!
//! Pulses are not visited one by one. Within a stretch of constant state every
//! pulse is independent, so the generator jumps straight to the next pulse
//! that yields a detection (geometric skip) and then draws which detection
//! pattern occurred, conditioned on there being one.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Normal};
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::stream::{
    PhotonRecord, PhotonStream, StreamError, StreamHeader, DEFAULT_RESOLUTION_PS,
    DEFAULT_SYNC_PERIOD_PS, MICROTIME_BITS,
};

/// Channels of the HBT detection arm.
pub const HBT_CHANNELS: u8 = 2;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParams { field: String, reason: String },
    #[error("blinking model `{0}` has no closed-form stationary rate")]
    UnsupportedBlinkingModel(&'static str),
    #[error(transparent)]
    Stream(#[from] StreamError),
}

fn invalid(field: &str, reason: impl Into<String>) -> SimError {
    SimError::InvalidParams {
        field: field.to_owned(),
        reason: reason.into(),
    }
}

fn check_prob(field: &str, v: f64) -> Result<(), SimError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(invalid(field, format!("{v} is outside [0, 1]")))
    }
}

fn check_positive(field: &str, v: f64) -> Result<(), SimError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(field, format!("{v} must be finite and > 0")))
    }
}

fn check_nonneg(field: &str, v: f64) -> Result<(), SimError> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(invalid(field, format!("{v} must be finite and >= 0")))
    }
}

/// Switching between the neutral (bright) and charged (grey) state.
///
/// `k_on_per_s` is the grey-to-bright rate and `k_off_per_s` the
/// bright-to-grey rate, so the bright occupancy is `k_on / (k_on + k_off)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum BlinkingModel {
    #[default]
    None,
    Telegraph { k_on_per_s: f64, k_off_per_s: f64 },
    /// Dwell times drawn from truncated power laws on `[t_min_s, t_max_s]`.
    PowerLaw {
        alpha_on: f64,
        alpha_off: f64,
        t_min_s: f64,
        t_max_s: f64,
    },
}

impl BlinkingModel {
    pub fn name(&self) -> &'static str {
        match self {
            BlinkingModel::None => "none",
            BlinkingModel::Telegraph { .. } => "telegraph",
            BlinkingModel::PowerLaw { .. } => "power_law",
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        match *self {
            BlinkingModel::None => Ok(()),
            BlinkingModel::Telegraph {
                k_on_per_s,
                k_off_per_s,
            } => {
                check_positive("blinking_model.k_on_per_s", k_on_per_s)?;
                check_positive("blinking_model.k_off_per_s", k_off_per_s)
            }
            BlinkingModel::PowerLaw {
                alpha_on,
                alpha_off,
                t_min_s,
                t_max_s,
            } => {
                for (f, a) in [("blinking_model.alpha_on", alpha_on), ("blinking_model.alpha_off", alpha_off)] {
                    if !(a > 1.0 && a < 3.0) {
                        return Err(invalid(f, format!("{a} is outside (1, 3)")));
                    }
                }
                check_positive("blinking_model.t_min_s", t_min_s)?;
                check_positive("blinking_model.t_max_s", t_max_s)?;
                if t_min_s >= t_max_s {
                    return Err(invalid("blinking_model.t_min_s", "must be < t_max_s"));
                }
                Ok(())
            }
        }
    }

    /// Stationary probability of the bright state, where one exists.
    pub fn bright_occupancy(&self) -> Result<f64, SimError> {
        match *self {
            BlinkingModel::None => Ok(1.0),
            BlinkingModel::Telegraph {
                k_on_per_s,
                k_off_per_s,
            } => Ok(k_on_per_s / (k_on_per_s + k_off_per_s)),
            BlinkingModel::PowerLaw { .. } => Err(SimError::UnsupportedBlinkingModel("power_law")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmitterParams {
    /// Mean absorbed excitons per pulse, equal to P / P_sat.
    pub mean_excitons_per_pulse: f64,
    pub tau_exciton_ns: f64,
    pub qy_exciton: f64,
    pub tau_trion_ns: f64,
    pub qy_trion: f64,
    pub qy_biexciton: f64,
    /// Defaults to `tau_exciton_ns / 4`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_biexciton_ns: Option<f64>,
    #[serde(default)]
    pub blinking_model: BlinkingModel,
}

impl Default for EmitterParams {
    fn default() -> Self {
        Self {
            mean_excitons_per_pulse: 0.25,
            tau_exciton_ns: 15.3,
            qy_exciton: 0.35,
            tau_trion_ns: 2.8,
            qy_trion: 0.093,
            qy_biexciton: 0.0137,
            tau_biexciton_ns: None,
            blinking_model: BlinkingModel::None,
        }
    }
}

impl EmitterParams {
    pub fn tau_biexciton_ns(&self) -> f64 {
        self.tau_biexciton_ns.unwrap_or(self.tau_exciton_ns / 4.0)
    }

    /// Short trion lifetime, the regime where blinking is Auger-driven.
    pub fn is_auger_regime(&self) -> bool {
        self.tau_trion_ns < self.tau_exciton_ns
    }

    pub fn validate(&self) -> Result<(), SimError> {
        check_nonneg("emitter.mean_excitons_per_pulse", self.mean_excitons_per_pulse)?;
        check_positive("emitter.tau_exciton_ns", self.tau_exciton_ns)?;
        check_positive("emitter.tau_trion_ns", self.tau_trion_ns)?;
        if let Some(t) = self.tau_biexciton_ns {
            check_positive("emitter.tau_biexciton_ns", t)?;
        }
        check_prob("emitter.qy_exciton", self.qy_exciton)?;
        check_prob("emitter.qy_trion", self.qy_trion)?;
        check_prob("emitter.qy_biexciton", self.qy_biexciton)?;
        self.blinking_model.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorParams {
    pub efficiency_total: f64,
    /// Probability that a detected photon lands on channel 0.
    #[serde(default = "default_split")]
    pub split_ratio: f64,
    #[serde(default)]
    pub jitter_sigma_ps: f64,
    #[serde(default)]
    pub dead_time_ns: f64,
    /// Per channel.
    #[serde(default)]
    pub dark_rate_hz: f64,
}

fn default_split() -> f64 {
    0.5
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self {
            efficiency_total: 0.11,
            split_ratio: 0.5,
            jitter_sigma_ps: 0.0,
            dead_time_ns: 0.0,
            dark_rate_hz: 0.0,
        }
    }
}

impl DetectorParams {
    pub fn validate(&self) -> Result<(), SimError> {
        check_prob("detector.efficiency_total", self.efficiency_total)?;
        check_prob("detector.split_ratio", self.split_ratio)?;
        check_nonneg("detector.jitter_sigma_ps", self.jitter_sigma_ps)?;
        check_nonneg("detector.dead_time_ns", self.dead_time_ns)?;
        check_nonneg("detector.dark_rate_hz", self.dark_rate_hz)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub duration_s: f64,
    #[serde(default = "default_sync_period")]
    pub sync_period_ps: u64,
    #[serde(default = "default_resolution")]
    pub resolution_ps: u32,
    #[serde(default)]
    pub seed: u64,
}

fn default_sync_period() -> u64 {
    DEFAULT_SYNC_PERIOD_PS
}

fn default_resolution() -> u32 {
    DEFAULT_RESOLUTION_PS
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            duration_s: 1.0,
            sync_period_ps: DEFAULT_SYNC_PERIOD_PS,
            resolution_ps: DEFAULT_RESOLUTION_PS,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        check_positive("sim.duration_s", self.duration_s)?;
        if self.sync_period_ps == 0 {
            return Err(invalid("sim.sync_period_ps", "must be > 0"));
        }
        if self.resolution_ps == 0 {
            return Err(invalid("sim.resolution_ps", "must be > 0"));
        }
        if self.sync_period_ps < u64::from(self.resolution_ps) {
            return Err(invalid("sim.sync_period_ps", "must be >= resolution_ps"));
        }
        if self.sync_period_ps.div_ceil(u64::from(self.resolution_ps)) > 1 << MICROTIME_BITS {
            return Err(invalid(
                "sim.resolution_ps",
                format!("period spans more than 2^{MICROTIME_BITS} microtime units"),
            ));
        }
        Ok(())
    }

    pub fn rep_rate_hz(&self) -> f64 {
        1e12 / self.sync_period_ps as f64
    }

    pub fn header(&self) -> StreamHeader {
        StreamHeader::new(self.sync_period_ps, self.resolution_ps, HBT_CHANNELS)
    }
}

/// Poisson occupation probabilities for one pulse: `(P(0), P(1), P(>=2))`.
pub fn exciton_occupation(mean_excitons: f64) -> (f64, f64, f64) {
    let p0 = (-mean_excitons).exp();
    let p1 = mean_excitons * p0;
    // -expm1 keeps P(>=1) accurate at small <N>
    let p_any = -(-mean_excitons).exp_m1();
    (p0, p1, (p_any - p1).max(0.0))
}

/// Detected emitter rates (both channels, dark counts excluded) per state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateRates {
    pub bright_hz: f64,
    pub grey_hz: f64,
    pub p_bright: f64,
    /// Sum over channels.
    pub dark_hz: f64,
}

impl StateRates {
    pub fn mean_hz(&self) -> f64 {
        self.p_bright * self.bright_hz + (1.0 - self.p_bright) * self.grey_hz + self.dark_hz
    }

    /// Bunching amplitude `p_on p_off (I_on - I_off)^2 / <I>^2` of the
    /// telegraph intensity autocorrelation, dark counts included.
    pub fn bunching_amplitude(&self) -> f64 {
        let on = self.bright_hz + self.dark_hz;
        let off = self.grey_hz + self.dark_hz;
        let mean = self.mean_hz();
        self.p_bright * (1.0 - self.p_bright) * (on - off).powi(2) / (mean * mean)
    }
}

/// Closed-form per-state detected rates for the emitter model.
pub fn state_rates(
    emitter: &EmitterParams,
    detector: &DetectorParams,
    cfg: &SimConfig,
) -> Result<StateRates, SimError> {
    let p_bright = emitter.blinking_model.bright_occupancy()?;
    let rep = cfg.rep_rate_hz();
    let eta = detector.efficiency_total;
    let (p0, p1, p2) = exciton_occupation(emitter.mean_excitons_per_pulse);
    let p_any = 1.0 - p0;
    Ok(StateRates {
        bright_hz: rep
            * eta
            * (p1 * emitter.qy_exciton + p2 * (emitter.qy_exciton + emitter.qy_biexciton)),
        grey_hz: rep * eta * p_any * emitter.qy_trion,
        p_bright,
        dark_hz: f64::from(HBT_CHANNELS) * detector.dark_rate_hz,
    })
}

/// Expected detected count rate (counts/s over both channels), dead time
/// ignored.
pub fn expected_rate(
    emitter: &EmitterParams,
    detector: &DetectorParams,
    cfg: &SimConfig,
) -> Result<f64, SimError> {
    emitter.validate()?;
    detector.validate()?;
    cfg.validate()?;
    Ok(state_rates(emitter, detector, cfg)?.mean_hz())
}

/// Telegraph-model intensity autocorrelation `1 + A e^{-k tau}`.
pub fn telegraph_envelope(
    emitter: &EmitterParams,
    detector: &DetectorParams,
    cfg: &SimConfig,
    tau_s: f64,
) -> Result<f64, SimError> {
    let k = match emitter.blinking_model {
        BlinkingModel::None => 0.0,
        BlinkingModel::Telegraph {
            k_on_per_s,
            k_off_per_s,
        } => k_on_per_s + k_off_per_s,
        BlinkingModel::PowerLaw { .. } => return Err(SimError::UnsupportedBlinkingModel("power_law")),
    };
    let rates = state_rates(emitter, detector, cfg)?;
    Ok(1.0 + rates.bunching_amplitude() * (-k * tau_s).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EmitterState {
    Bright,
    Grey,
}

/// Photon emission pattern of one pulse, restricted to detected photons.
#[derive(Debug, Clone, Copy)]
enum Emission {
    /// Lone exciton (n = 1), photon at `Exp(tau_x)`.
    Exciton,
    /// Cascade where only the biexciton photon is detected.
    BiexcitonOnly,
    /// Cascade where only the exciton photon is detected.
    ExcitonAfterBiexciton,
    /// Cascade with both photons detected.
    Cascade,
    Trion,
}

/// Per-state probability of a pulse yielding any detection, plus the
/// conditional distribution over emission patterns.
struct PulseTable {
    p_detect: f64,
    cumulative: Vec<(f64, Emission)>,
}

impl PulseTable {
    fn new(state: EmitterState, emitter: &EmitterParams, eta: f64) -> Self {
        let (p0, p1, p2) = exciton_occupation(emitter.mean_excitons_per_pulse);
        let entries: Vec<(f64, Emission)> = match state {
            EmitterState::Bright => {
                let x = emitter.qy_exciton * eta;
                let b = emitter.qy_biexciton * eta;
                vec![
                    (p1 * x, Emission::Exciton),
                    (p2 * b * (1.0 - x), Emission::BiexcitonOnly),
                    (p2 * (1.0 - b) * x, Emission::ExcitonAfterBiexciton),
                    (p2 * b * x, Emission::Cascade),
                ]
            }
            EmitterState::Grey => vec![((1.0 - p0) * emitter.qy_trion * eta, Emission::Trion)],
        };
        let p_detect: f64 = entries.iter().map(|e| e.0).sum();
        let mut acc = 0.0;
        let cumulative = entries
            .into_iter()
            .filter(|e| e.0 > 0.0)
            .map(|(p, e)| {
                acc += p;
                (acc, e)
            })
            .collect();
        Self {
            p_detect,
            cumulative,
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> Emission {
        let u = rng.random::<f64>() * self.p_detect;
        self.cumulative
            .iter()
            .find(|(c, _)| u < *c)
            .or(self.cumulative.last())
            .map(|&(_, e)| e)
            .expect("draw called on a table with p_detect > 0")
    }

    /// Pulses skipped before the next detecting pulse.
    fn skip(&self, rng: &mut ChaCha8Rng) -> u64 {
        if self.p_detect >= 1.0 {
            return 0;
        }
        let u: f64 = rng.random();
        let k = (1.0 - u).ln() / (-self.p_detect).ln_1p();
        if k.is_finite() && k < u64::MAX as f64 {
            k.floor() as u64
        } else {
            u64::MAX
        }
    }
}

/// Truncated power law `p(t) ~ t^-alpha` on `[lo, hi]` by inversion.
fn truncated_pareto(rng: &mut ChaCha8Rng, alpha: f64, lo: f64, hi: f64) -> f64 {
    let u: f64 = rng.random();
    let e = 1.0 - alpha;
    let a = lo.powf(e);
    let b = hi.powf(e);
    (a - u * (a - b)).powf(1.0 / e).clamp(lo, hi)
}

fn exp_sample(rng: &mut ChaCha8Rng, mean: f64) -> f64 {
    let e: f64 = Exp1.sample(rng);
    e * mean
}

struct Blinking<'a> {
    model: &'a BlinkingModel,
}

impl Blinking<'_> {
    fn initial_state(&self, rng: &mut ChaCha8Rng) -> EmitterState {
        let p_bright = match *self.model {
            BlinkingModel::None => 1.0,
            BlinkingModel::Telegraph {
                k_on_per_s,
                k_off_per_s,
            } => k_on_per_s / (k_on_per_s + k_off_per_s),
            BlinkingModel::PowerLaw {
                alpha_on,
                alpha_off,
                t_min_s,
                t_max_s,
            } => {
                let m_on = truncated_pareto_mean(alpha_on, t_min_s, t_max_s);
                let m_off = truncated_pareto_mean(alpha_off, t_min_s, t_max_s);
                m_on / (m_on + m_off)
            }
        };
        if rng.random::<f64>() < p_bright {
            EmitterState::Bright
        } else {
            EmitterState::Grey
        }
    }

    fn dwell_s(&self, state: EmitterState, rng: &mut ChaCha8Rng) -> f64 {
        match (*self.model, state) {
            (BlinkingModel::None, _) => f64::INFINITY,
            (BlinkingModel::Telegraph { k_off_per_s, .. }, EmitterState::Bright) => {
                exp_sample(rng, 1.0 / k_off_per_s)
            }
            (BlinkingModel::Telegraph { k_on_per_s, .. }, EmitterState::Grey) => {
                exp_sample(rng, 1.0 / k_on_per_s)
            }
            (
                BlinkingModel::PowerLaw {
                    alpha_on,
                    t_min_s,
                    t_max_s,
                    ..
                },
                EmitterState::Bright,
            ) => truncated_pareto(rng, alpha_on, t_min_s, t_max_s),
            (
                BlinkingModel::PowerLaw {
                    alpha_off,
                    t_min_s,
                    t_max_s,
                    ..
                },
                EmitterState::Grey,
            ) => truncated_pareto(rng, alpha_off, t_min_s, t_max_s),
        }
    }
}

fn truncated_pareto_mean(alpha: f64, lo: f64, hi: f64) -> f64 {
    let norm = (lo.powf(1.0 - alpha) - hi.powf(1.0 - alpha)) / (alpha - 1.0);
    let first = if (alpha - 2.0).abs() < 1e-12 {
        (hi / lo).ln()
    } else {
        (lo.powf(2.0 - alpha) - hi.powf(2.0 - alpha)) / (alpha - 2.0)
    };
    first / norm
}

/// Metadata object embedded in simulated stream headers.
pub fn stream_metadata(emitter: &EmitterParams, detector: &DetectorParams, cfg: &SimConfig) -> serde_json::Value {
    json!({
        "emitter_params": emitter,
        "detector_params": detector,
        "seed": cfg.seed,
        "duration_s": cfg.duration_s,
    })
}

/// Generates a sorted photon stream. Identical inputs give identical output.
pub fn simulate_stream(
    emitter: &EmitterParams,
    detector: &DetectorParams,
    cfg: &SimConfig,
) -> Result<PhotonStream, SimError> {
    emitter.validate()?;
    detector.validate()?;
    cfg.validate()?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let period = cfg.sync_period_ps;
    let duration_ps = (cfg.duration_s * 1e12).round() as u64;
    let n_pulses = duration_ps / period;
    let eta = detector.efficiency_total;
    let bright = PulseTable::new(EmitterState::Bright, emitter, eta);
    let grey = PulseTable::new(EmitterState::Grey, emitter, eta);
    let jitter = (detector.jitter_sigma_ps > 0.0)
        .then(|| Normal::new(0.0, detector.jitter_sigma_ps).expect("sigma validated"));

    let tau_x = emitter.tau_exciton_ns * 1e3;
    let tau_bx = emitter.tau_biexciton_ns() * 1e3;
    let tau_t = emitter.tau_trion_ns * 1e3;

    let expected = expected_rate_hint(emitter, detector, cfg);
    let mut events: Vec<(u64, u8)> = Vec::with_capacity(expected);

    let push = |rng: &mut ChaCha8Rng, pulse: u64, delay_ps: f64, events: &mut Vec<(u64, u8)>| {
        let channel = u8::from(rng.random::<f64>() >= detector.split_ratio);
        let smear = match &jitter {
            Some(n) => n.sample(rng),
            None => 0.0,
        };
        let t = (pulse * period) as f64 + delay_ps + smear;
        let t = if t > 0.0 { t.floor() as u64 } else { 0 };
        if t < duration_ps {
            events.push((t, channel));
        }
    };

    let blinking = Blinking {
        model: &emitter.blinking_model,
    };
    let mut state = blinking.initial_state(&mut rng);
    let mut seg_start_ps = 0.0f64;
    let mut pulse = 0u64;
    while pulse < n_pulses {
        let dwell = blinking.dwell_s(state, &mut rng);
        let seg_end_ps = seg_start_ps + dwell * 1e12;
        let seg_end_pulse = if seg_end_ps.is_finite() {
            ((seg_end_ps / period as f64).ceil() as u64).min(n_pulses)
        } else {
            n_pulses
        };
        let table = match state {
            EmitterState::Bright => &bright,
            EmitterState::Grey => &grey,
        };
        if table.p_detect > 0.0 {
            loop {
                pulse = pulse.saturating_add(table.skip(&mut rng));
                if pulse >= seg_end_pulse {
                    break;
                }
                match table.draw(&mut rng) {
                    Emission::Exciton => {
                        let d = exp_sample(&mut rng, tau_x);
                        push(&mut rng, pulse, d, &mut events);
                    }
                    Emission::BiexcitonOnly => {
                        let d = exp_sample(&mut rng, tau_bx);
                        push(&mut rng, pulse, d, &mut events);
                    }
                    Emission::ExcitonAfterBiexciton => {
                        let d = exp_sample(&mut rng, tau_bx) + exp_sample(&mut rng, tau_x);
                        push(&mut rng, pulse, d, &mut events);
                    }
                    Emission::Cascade => {
                        let db = exp_sample(&mut rng, tau_bx);
                        let dx = db + exp_sample(&mut rng, tau_x);
                        push(&mut rng, pulse, db, &mut events);
                        push(&mut rng, pulse, dx, &mut events);
                    }
                    Emission::Trion => {
                        let d = exp_sample(&mut rng, tau_t);
                        push(&mut rng, pulse, d, &mut events);
                    }
                }
                pulse += 1;
            }
        }
        pulse = seg_end_pulse;
        seg_start_ps = seg_end_ps;
        state = match state {
            EmitterState::Bright => EmitterState::Grey,
            EmitterState::Grey => EmitterState::Bright,
        };
    }

    if detector.dark_rate_hz > 0.0 {
        let mean_gap_ps = 1e12 / detector.dark_rate_hz;
        for channel in 0..HBT_CHANNELS {
            let mut t = 0.0;
            loop {
                t += exp_sample(&mut rng, mean_gap_ps);
                if t >= duration_ps as f64 {
                    break;
                }
                events.push((t.floor() as u64, channel));
            }
        }
    }

    let res = u64::from(cfg.resolution_ps);
    let mut records: Vec<PhotonRecord> = events
        .into_iter()
        .map(|(t, channel)| PhotonRecord::new(channel, t / period, ((t % period) / res) as u32))
        .collect();
    records.sort_unstable_by_key(|r| (r.nsync, r.microtime, r.channel));
    let records = apply_dead_time(records, period, res, detector.dead_time_ns);

    let header = cfg.header().with_metadata(&stream_metadata(emitter, detector, cfg));
    Ok(PhotonStream::new(header, records)?)
}

fn expected_rate_hint(emitter: &EmitterParams, detector: &DetectorParams, cfg: &SimConfig) -> usize {
    let bright = state_rates(
        &EmitterParams {
            blinking_model: BlinkingModel::None,
            ..emitter.clone()
        },
        detector,
        cfg,
    )
    .map(|r| r.mean_hz())
    .unwrap_or(0.0);
    ((bright * cfg.duration_s * 1.05) as usize).min(1 << 28)
}

/// Non-paralyzable dead time on quantized absolute times, per channel.
fn apply_dead_time(records: Vec<PhotonRecord>, period: u64, res: u64, dead_time_ns: f64) -> Vec<PhotonRecord> {
    if dead_time_ns <= 0.0 {
        return records;
    }
    let dead_ps = (dead_time_ns * 1e3).ceil() as u64;
    let mut last: [Option<u64>; HBT_CHANNELS as usize] = [None; HBT_CHANNELS as usize];
    records
        .into_iter()
        .filter(|r| {
            let t = r.nsync * period + u64::from(r.microtime) * res;
            let slot = &mut last[usize::from(r.channel)];
            match *slot {
                Some(prev) if t - prev < dead_ps => false,
                _ => {
                    *slot = Some(t);
                    true
                }
            }
        })
        .collect()
}
