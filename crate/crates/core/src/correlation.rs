//! Intensity traces, pulsed g2 histograms and the long-delay g2 envelope.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::modes::find_bimodal;
use crate::stream::{channel_times_ps, PhotonStream};

/// Intensity trace bin width used for blinking analysis.
pub const DEFAULT_TRACE_BIN_S: f64 = 0.005;

#[derive(Debug, Error)]
pub enum CorrelationError {
    #[error("stream contains no photons")]
    EmptyStream,
    #[error("g2 needs two detector channels, stream has {0}")]
    SingleChannelStream(u8),
    #[error("intra-peak window {window_ps} ps exceeds half the sync period {period_ps} ps")]
    WindowTooWide { window_ps: u64, period_ps: u64 },
    #[error("no coincidences in the normalization side peaks")]
    NoSideCoincidences,
    #[error("signal and background rates sum to zero")]
    ZeroTotalRate,
    #[error("signal rate is zero, background subtraction undefined")]
    ZeroSignal,
    #[error("trace of {duration_s} s is shorter than 10 x the largest delay {max_tau_s} s")]
    TraceTooShort { duration_s: f64, max_tau_s: f64 },
    #[error("occurrence histogram is not bimodal")]
    NotBimodal,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensityTrace {
    pub bin_width_s: f64,
    pub start_time_s: f64,
    /// Photons per bin, both channels summed.
    pub counts: Vec<u64>,
}

impl IntensityTrace {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        if self.counts.is_empty() {
            0.0
        } else {
            self.total() as f64 / self.counts.len() as f64
        }
    }
}

/// Bins photons by absolute arrival time.
///
/// Bins cover `[0, n * bin_width)` with `n = floor(span / bin_width)`; a
/// trailing partial bin is dropped. A stream shorter than one bin still gets
/// a single bin.
pub fn bin_intensity(stream: &PhotonStream, bin_width_s: f64) -> Result<IntensityTrace, CorrelationError> {
    if !(bin_width_s.is_finite() && bin_width_s > 0.0) {
        return Err(CorrelationError::InvalidArgument(format!(
            "bin width {bin_width_s} s must be > 0"
        )));
    }
    if stream.is_empty() {
        return Err(CorrelationError::EmptyStream);
    }
    let bin_ps = bin_width_s * 1e12;
    let n_bins = ((stream.span_ps() as f64 / bin_ps).floor() as usize).max(1);
    let mut counts = vec![0u64; n_bins];
    for r in &stream.records {
        let idx = (stream.absolute_time_ps(r) as f64 / bin_ps) as usize;
        if let Some(c) = counts.get_mut(idx) {
            *c += 1;
        }
    }
    Ok(IntensityTrace {
        bin_width_s,
        start_time_s: 0.0,
        counts,
    })
}

/// Number of trace bins holding each count value, indexed by count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OccurrenceHistogram {
    pub occurrences: Vec<u64>,
}

impl OccurrenceHistogram {
    pub fn get(&self, count: u64) -> u64 {
        self.occurrences.get(count as usize).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.occurrences.iter().sum()
    }

    pub fn iter_nonzero(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.occurrences
            .iter()
            .enumerate()
            .filter(|(_, &o)| o > 0)
            .map(|(c, &o)| (c as u64, o))
    }
}

pub fn intensity_histogram(trace: &IntensityTrace) -> OccurrenceHistogram {
    let max = trace.counts.iter().copied().max().unwrap_or(0) as usize;
    let mut occurrences = vec![0u64; max + 1];
    for &c in &trace.counts {
        occurrences[c as usize] += 1;
    }
    OccurrenceHistogram { occurrences }
}

/// Per-bin bright/grey classification of a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateLabels {
    /// Bins with more counts than this are bright.
    pub threshold: u64,
    pub bright: Vec<bool>,
    pub on_fraction: f64,
    /// True when the threshold came from the quantile fallback.
    pub fallback: bool,
}

fn label(trace: &IntensityTrace, threshold: u64, fallback: bool) -> StateLabels {
    let bright: Vec<bool> = trace.counts.iter().map(|&c| c > threshold).collect();
    let on = bright.iter().filter(|&&b| b).count();
    StateLabels {
        threshold,
        on_fraction: on as f64 / bright.len().max(1) as f64,
        bright,
        fallback,
    }
}

/// Splits a trace at the occurrence minimum between its two modes.
pub fn threshold_states(trace: &IntensityTrace) -> Result<StateLabels, CorrelationError> {
    if trace.counts.is_empty() {
        return Err(CorrelationError::EmptyStream);
    }
    let hist = intensity_histogram(trace);
    let values: Vec<f64> = hist.occurrences.iter().map(|&o| o as f64).collect();
    let sigma = 1.0 + 0.25 * trace.mean().sqrt();
    let modes = find_bimodal(&values, sigma).ok_or(CorrelationError::NotBimodal)?;
    Ok(label(trace, modes.valley as u64, false))
}

/// Threshold at the given count quantile, for traces that are not bimodal.
pub fn quantile_threshold(trace: &IntensityTrace, quantile: f64) -> StateLabels {
    let mut sorted = trace.counts.clone();
    sorted.sort_unstable();
    let idx = ((sorted.len().saturating_sub(1)) as f64 * quantile.clamp(0.0, 1.0)).round() as usize;
    let threshold = sorted.get(idx).copied().unwrap_or(0);
    label(trace, threshold, true)
}

/// [`threshold_states`], falling back to the median when not bimodal.
pub fn threshold_states_or_median(trace: &IntensityTrace) -> StateLabels {
    threshold_states(trace).unwrap_or_else(|_| quantile_threshold(trace, 0.5))
}

/// `(g2_raw - (1 - rho^2)) / rho^2` with `rho = S / (S + B)`, clamped at 0.
pub fn subtract_background(g2_raw: f64, signal_rate: f64, background_rate: f64) -> Result<f64, CorrelationError> {
    if signal_rate < 0.0 || background_rate < 0.0 {
        return Err(CorrelationError::InvalidArgument("rates must be >= 0".into()));
    }
    let total = signal_rate + background_rate;
    if total <= 0.0 {
        return Err(CorrelationError::ZeroTotalRate);
    }
    if signal_rate == 0.0 {
        return Err(CorrelationError::ZeroSignal);
    }
    let rho2 = (signal_rate / total).powi(2);
    Ok(((g2_raw - (1.0 - rho2)) / rho2).max(0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct G2Options {
    pub lag_bin_width_ps: u64,
    /// Half-width of the window integrated around each peak.
    pub intra_window_ps: u64,
    /// Peaks are histogrammed out to `+-(n_side_peaks + 1/2)` periods.
    pub n_side_peaks: u32,
    /// `|k|` range of side peaks used to normalize g2(0).
    pub side_peak_range: (u32, u32),
    /// Uncorrelated background rate (counts/s, both channels); `None`
    /// reports the raw value as corrected.
    pub background_rate_hz: Option<f64>,
}

impl Default for G2Options {
    fn default() -> Self {
        Self {
            lag_bin_width_ps: 1024,
            intra_window_ps: 76_500,
            n_side_peaks: 20,
            side_peak_range: (10, 20),
            background_rate_hz: None,
        }
    }
}

impl G2Options {
    /// Integration half-width of 5 lifetimes, capped at half a period.
    pub fn window_for_lifetime(tau_ns: f64, sync_period_ps: u64) -> u64 {
        ((5.0 * tau_ns * 1e3).round() as u64).min(sync_period_ps / 2)
    }
}

/// Coincidence histogram between channel 0 and channel 1 under pulsed
/// excitation. Lags are `t1 - t0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct G2Histogram {
    pub sync_period_ps: u64,
    pub lag_bin_width_ps: u64,
    pub intra_window_ps: u64,
    pub n_side_peaks: u32,
    /// Bin `i` is centred at `(i - half_bins) * lag_bin_width_ps`.
    pub counts: Vec<u64>,
    pub half_bins: usize,
    /// Integrated peak areas for `k = -n_side_peaks..=n_side_peaks`.
    pub peak_areas: Vec<u64>,
    pub center_peak_area: u64,
    pub side_peak_range: (u32, u32),
    /// Mean area of the side peaks in `side_peak_range`.
    pub side_peak_mean: f64,
    pub g2_zero_raw: f64,
    pub g2_zero_raw_sigma: f64,
    /// Same ratio normalized by the `|k| = 1` peaks.
    pub g2_zero_raw_nearest: f64,
    /// Signal fraction within the peak integration window.
    pub signal_fraction_rho: f64,
    pub g2_zero_corrected: f64,
    pub g2_zero_corrected_sigma: f64,
}

impl G2Histogram {
    pub fn lag_ps(&self, bin: usize) -> i64 {
        (bin as i64 - self.half_bins as i64) * self.lag_bin_width_ps as i64
    }

    pub fn peak_area(&self, k: i32) -> u64 {
        self.peak_areas[(k + self.n_side_peaks as i32) as usize]
    }

    /// Side-peak areas in the normalization range, `k` ascending.
    pub fn side_peak_areas(&self) -> Vec<u64> {
        let (lo, hi) = self.side_peak_range;
        (-(hi as i32)..=hi as i32)
            .filter(|k| k.unsigned_abs() >= lo && k.unsigned_abs() <= hi && *k != 0)
            .map(|k| self.peak_area(k))
            .collect()
    }
}

/// Bin index of a signed lag; symmetric under `lag -> -lag`.
#[inline]
fn lag_bin(lag: i64, width: u64) -> i64 {
    let mag = (lag.unsigned_abs() + width / 2) / width;
    if lag < 0 {
        -(mag as i64)
    } else {
        mag as i64
    }
}

/// Nearest peak index and distance from its center; symmetric in sign.
#[inline]
fn nearest_peak(lag: i64, period: u64) -> (i64, u64) {
    let a = lag.unsigned_abs();
    let k = (a + period / 2) / period;
    let d = a.abs_diff(k * period);
    (if lag < 0 { -(k as i64) } else { k as i64 }, d)
}

/// Shared geometry of the lag histogram, used by both pair counters.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LagGeometry {
    pub period: u64,
    pub width: u64,
    pub window: u64,
    pub n_side: u32,
    pub max_lag: u64,
    pub half_bins: usize,
}

impl LagGeometry {
    pub(crate) fn new(period: u64, opts: &G2Options) -> Self {
        let max_lag = (2 * u64::from(opts.n_side_peaks) + 1) * period / 2;
        let half_bins = ((max_lag + opts.lag_bin_width_ps / 2) / opts.lag_bin_width_ps) as usize;
        Self {
            period,
            width: opts.lag_bin_width_ps,
            window: opts.intra_window_ps,
            n_side: opts.n_side_peaks,
            max_lag,
            half_bins,
        }
    }

    #[inline]
    pub(crate) fn record(&self, lag: i64, counts: &mut [u64], areas: &mut [u64]) {
        let bin = lag_bin(lag, self.width) + self.half_bins as i64;
        counts[bin as usize] += 1;
        let (k, d) = nearest_peak(lag, self.period);
        if d <= self.window && k.unsigned_abs() <= u64::from(self.n_side) {
            areas[(k + i64::from(self.n_side)) as usize] += 1;
        }
    }
}

fn validate_g2(stream: &PhotonStream, opts: &G2Options) -> Result<(), CorrelationError> {
    let period = stream.sync_period_ps();
    if stream.header.channel_count < 2 {
        return Err(CorrelationError::SingleChannelStream(stream.header.channel_count));
    }
    if opts.intra_window_ps > period / 2 {
        return Err(CorrelationError::WindowTooWide {
            window_ps: opts.intra_window_ps,
            period_ps: period,
        });
    }
    if opts.lag_bin_width_ps == 0 {
        return Err(CorrelationError::InvalidArgument("lag_bin_width_ps must be > 0".into()));
    }
    let (lo, hi) = opts.side_peak_range;
    if lo == 0 || lo > hi || hi > opts.n_side_peaks {
        return Err(CorrelationError::InvalidArgument(format!(
            "side_peak_range {lo}..={hi} must satisfy 1 <= lo <= hi <= n_side_peaks"
        )));
    }
    Ok(())
}

/// Sliding-window pair counter: for each channel-0 photon only channel-1
/// photons within `max_lag` are visited.
pub(crate) fn count_pairs_sliding(a: &[u64], b: &[u64], geo: &LagGeometry) -> (Vec<u64>, Vec<u64>) {
    let mut counts = vec![0u64; 2 * geo.half_bins + 1];
    let mut areas = vec![0u64; 2 * geo.n_side as usize + 1];
    let mut start = 0usize;
    for &t0 in a {
        let lower = t0.saturating_sub(geo.max_lag);
        while start < b.len() && b[start] < lower {
            start += 1;
        }
        for &t1 in &b[start..] {
            if t1 > t0 + geo.max_lag {
                break;
            }
            geo.record(t1 as i64 - t0 as i64, &mut counts, &mut areas);
        }
    }
    (counts, areas)
}

/// Pulsed-excitation g2 between channels 0 and 1.
pub fn g2_pulsed(stream: &PhotonStream, opts: &G2Options) -> Result<G2Histogram, CorrelationError> {
    validate_g2(stream, opts)?;
    let a = channel_times_ps(stream, 0);
    let b = channel_times_ps(stream, 1);
    let geo = LagGeometry::new(stream.sync_period_ps(), opts);
    let (counts, areas) = count_pairs_sliding(&a, &b, &geo);
    let total_rate = stream.len() as f64 / stream.span_s().max(f64::MIN_POSITIVE);
    finish_g2(stream.sync_period_ps(), opts, geo, counts, areas, total_rate)
}

pub(crate) fn finish_g2(
    period: u64,
    opts: &G2Options,
    geo: LagGeometry,
    counts: Vec<u64>,
    peak_areas: Vec<u64>,
    total_rate_hz: f64,
) -> Result<G2Histogram, CorrelationError> {
    let n_side = opts.n_side_peaks as i32;
    let area = |k: i32| peak_areas[(k + n_side) as usize];
    let (lo, hi) = opts.side_peak_range;
    let side: Vec<u64> = (lo as i32..=hi as i32).flat_map(|k| [area(-k), area(k)]).collect();
    let side_sum: u64 = side.iter().sum();
    if side_sum == 0 {
        return Err(CorrelationError::NoSideCoincidences);
    }
    let side_mean = side_sum as f64 / side.len() as f64;
    let center = area(0);
    let g2_raw = center as f64 / side_mean;
    // Poisson errors on the center area and on the pooled side mean
    let g2_raw_sigma = g2_raw
        * ((1.0 / (center.max(1) as f64)) + 1.0 / side_sum as f64).sqrt();
    let nearest = (area(-1) + area(1)) as f64 / 2.0;
    let g2_nearest = if nearest > 0.0 { center as f64 / nearest } else { f64::NAN };

    let (rho, g2_corr, g2_corr_sigma) = match opts.background_rate_hz {
        Some(bg) if bg > 0.0 => {
            let signal = (total_rate_hz - bg).max(0.0);
            // only background inside the integration window pairs with a peak
            let in_window = bg * (2 * opts.intra_window_ps + 1) as f64 / period as f64;
            let corr = subtract_background(g2_raw, signal, in_window)?;
            let rho = signal / (signal + in_window);
            (rho, corr, g2_raw_sigma / (rho * rho))
        }
        _ => (1.0, g2_raw, g2_raw_sigma),
    };

    Ok(G2Histogram {
        sync_period_ps: period,
        lag_bin_width_ps: opts.lag_bin_width_ps,
        intra_window_ps: opts.intra_window_ps,
        n_side_peaks: opts.n_side_peaks,
        counts,
        half_bins: geo.half_bins,
        peak_areas,
        center_peak_area: center,
        side_peak_range: opts.side_peak_range,
        side_peak_mean: side_mean,
        g2_zero_raw: g2_raw,
        g2_zero_raw_sigma: g2_raw_sigma,
        g2_zero_raw_nearest: g2_nearest,
        signal_fraction_rho: rho,
        g2_zero_corrected: g2_corr,
        g2_zero_corrected_sigma: g2_corr_sigma,
    })
}

/// Log-spaced delay grid, `per_decade` points per decade, both ends included.
pub fn log_tau_grid(min_s: f64, max_s: f64, per_decade: usize) -> Vec<f64> {
    let decades = (max_s / min_s).log10();
    let n = (decades * per_decade as f64).round().max(1.0) as usize;
    (0..=n)
        .map(|i| min_s * 10f64.powf(decades * i as f64 / n as f64))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvelopeOptions {
    pub taus_s: Vec<f64>,
    /// Each delay integrates pulse separations within `tau * (1 +- h)`.
    pub relative_halfwidth: f64,
}

impl Default for EnvelopeOptions {
    fn default() -> Self {
        Self {
            taus_s: log_tau_grid(1e-6, 1.0, 8),
            relative_halfwidth: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopePoint {
    pub tau_s: f64,
    /// Inclusive range of pulse-index differences integrated.
    pub delta_lo: u64,
    pub delta_hi: u64,
    /// Exposure-weighted mean delay of the integrated separations.
    pub effective_tau_s: f64,
    pub coincidences: u64,
    /// Uncorrelated expectation for `coincidences`.
    pub expected: f64,
    pub value: f64,
    pub one_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct G2Envelope {
    pub sync_period_ps: u64,
    pub span_pulses: u64,
    pub points: Vec<EnvelopePoint>,
}

impl G2Envelope {
    pub fn taus_s(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.tau_s).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.value).collect()
    }
}

/// Pairs `(x in a, y in b)` with `y - x` in `[lo, hi]`; both inputs sorted.
#[cfg(test)]
fn count_separations(a: &[u64], b: &[u64], lo: u64, hi: u64) -> u64 {
    let mut first = 0usize;
    let mut end = 0usize;
    let mut total = 0u64;
    for &x in a {
        while first < b.len() && b[first] < x + lo {
            first += 1;
        }
        if end < first {
            end = first;
        }
        while end < b.len() && b[end] <= x + hi {
            end += 1;
        }
        total += (end - first) as u64;
    }
    total
}

/// Two-sided pair statistics with `a` as anchors: for each `x` in `a`,
/// `n = #{y in b : |y - x| in [lo, hi]}`. Returns `(sum n, sum n (n - 1))`.
/// Requires `lo >= 1` so the two sides do not overlap.
pub(crate) fn anchored_pairs(a: &[u64], b: &[u64], lo: u64, hi: u64) -> (u64, u64) {
    let (mut f_first, mut f_end, mut r_first, mut r_end) = (0usize, 0usize, 0usize, 0usize);
    let (mut total, mut shared) = (0u64, 0u64);
    for &x in a {
        while f_first < b.len() && b[f_first] < x + lo {
            f_first += 1;
        }
        f_end = f_end.max(f_first);
        while f_end < b.len() && b[f_end] <= x + hi {
            f_end += 1;
        }
        while r_first < b.len() && b[r_first] + hi < x {
            r_first += 1;
        }
        r_end = r_end.max(r_first);
        while r_end < b.len() && b[r_end] + lo <= x {
            r_end += 1;
        }
        let n = (f_end - f_first + r_end - r_first) as u64;
        total += n;
        shared += n * n.saturating_sub(1);
    }
    (total, shared)
}

/// Pulse-separation range integrated for one delay.
pub fn envelope_bin(tau_s: f64, sync_period_ps: u64, relative_halfwidth: f64) -> (u64, u64) {
    let center = tau_s * 1e12 / sync_period_ps as f64;
    let lo = (center * (1.0 - relative_halfwidth)).round().max(1.0) as u64;
    let hi = ((center * (1.0 + relative_halfwidth)).round() as u64).max(lo);
    (lo, hi)
}

/// Coincidence-peak envelope of g2 at long delays.
///
/// For each delay the channel-0/channel-1 pairs whose pulse indices differ by
/// an amount within the delay's bin are counted in both time orders and
/// divided by the count expected for two uncorrelated streams with the same
/// totals, so stationary Poisson light gives 1.
pub fn g2_envelope(stream: &PhotonStream, opts: &EnvelopeOptions) -> Result<G2Envelope, CorrelationError> {
    if stream.header.channel_count < 2 {
        return Err(CorrelationError::SingleChannelStream(stream.header.channel_count));
    }
    if stream.is_empty() {
        return Err(CorrelationError::EmptyStream);
    }
    let period = stream.sync_period_ps();
    let period_s = period as f64 * 1e-12;
    if opts.taus_s.is_empty() {
        return Err(CorrelationError::InvalidArgument("empty delay grid".into()));
    }
    // written so that NaN is rejected too
    if let Some(bad) = opts.taus_s.iter().find(|&&t| t.partial_cmp(&period_s).is_none_or(|o| o.is_lt())) {
        return Err(CorrelationError::InvalidArgument(format!(
            "delay {bad} s is shorter than one sync period"
        )));
    }
    let max_tau = opts.taus_s.iter().copied().fold(0.0, f64::max);
    let span_pulses = stream.span_pulses();
    let duration_s = span_pulses as f64 * period_s;
    if duration_s < 10.0 * max_tau {
        return Err(CorrelationError::TraceTooShort {
            duration_s,
            max_tau_s: max_tau,
        });
    }

    let pulses = |ch: u8| -> Vec<u64> {
        stream
            .records
            .iter()
            .filter(|r| r.channel == ch)
            .map(|r| r.nsync)
            .collect()
    };
    let a = pulses(0);
    let b = pulses(1);
    let np = span_pulses as f64;
    let pair_density = 2.0 * a.len() as f64 * b.len() as f64 / (np * np);

    let points = opts
        .taus_s
        .par_iter()
        .map(|&tau_s| {
            let (lo, hi) = envelope_bin(tau_s, period, opts.relative_halfwidth);
            let hi = hi.min(span_pulses.saturating_sub(1)).max(lo);
            let (coincidences, shared_a) = anchored_pairs(&a, &b, lo, hi);
            let (_, shared_b) = anchored_pairs(&b, &a, lo, hi);
            let mut exposure = 0.0;
            let mut weighted = 0.0;
            for d in lo..=hi {
                let w = (np - d as f64).max(0.0);
                exposure += w;
                weighted += w * d as f64;
            }
            let expected = pair_density * exposure;
            let value = if expected > 0.0 { coincidences as f64 / expected } else { 0.0 };
            // pairs sharing a photon are not independent counts
            let variance = coincidences.max(1) as f64 + (shared_a + shared_b) as f64;
            let one_sigma = if expected > 0.0 {
                variance.sqrt() / expected
            } else {
                0.0
            };
            EnvelopePoint {
                tau_s,
                delta_lo: lo,
                delta_hi: hi,
                effective_tau_s: if exposure > 0.0 { weighted / exposure * period_s } else { tau_s },
                coincidences,
                expected,
                value,
                one_sigma,
            }
        })
        .collect();
    Ok(G2Envelope {
        sync_period_ps: period,
        span_pulses,
        points,
    })
}
