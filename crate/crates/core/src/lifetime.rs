//! Microtime decay histograms, multi-exponential tail fits, per-bin lifetime
//! estimates and fluorescence lifetime-intensity distributions (FLID).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fitting::{fit_nonlinear, FitError, FitOptions, FitProblem, FitResult, Model, Objective, Parameter};
use crate::modes::{find_bimodal, Bimodal};
use crate::stream::PhotonStream;

pub const MIN_PHOTONS_PER_BIN: usize = 5;
pub const MIN_FIT_PHOTONS: u64 = 1000;
pub const MAX_COMPONENTS: usize = 4;
const RESTARTS: usize = 5;
const RESTART_JITTER: f64 = 0.3;
const MERGE_RATIO: f64 = 1.05;
/// Amplitude in standard errors a component needs to be kept.
const SIGNIFICANCE: f64 = 2.0;
/// The truncated-exponential estimate is capped at this multiple of the
/// observation window.
const LIFETIME_CLAMP_WINDOWS: f64 = 10.0;

#[derive(Debug, Error)]
pub enum LifetimeError {
    #[error("stream contains no photons")]
    EmptyStream,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("{found} photons in bin, at least {MIN_PHOTONS_PER_BIN} needed")]
    TooFewPhotons { found: usize },
    #[error("most photons arrive before t0; the prompt position is misestimated")]
    NonPositiveDelays,
    #[error("{photons} photons in the fit range support no exponential component (need >= {MIN_FIT_PHOTONS} and a resolvable decay)")]
    InsufficientCounts { photons: u64 },
    #[error("decay fit did not converge")]
    FitDiverged,
    #[error("{found} usable bins, at least 100 needed")]
    InsufficientBins { found: usize },
    #[error(transparent)]
    Fit(#[from] FitError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayHistogram {
    pub bin_width_ps: u64,
    pub sync_period_ps: u64,
    /// Bin `i` covers microtimes `[i, i + 1) * bin_width_ps`; the last bin
    /// may be partial.
    pub counts: Vec<u64>,
    pub total_counts: u64,
    /// Left edge of the most populated bin.
    pub t0_ps: u64,
}

impl DecayHistogram {
    /// Histogram of delays already expressed in ps within `[0, period)`.
    pub fn from_delays_ps(delays: impl IntoIterator<Item = u64>, bin_width_ps: u64, sync_period_ps: u64) -> Result<Self, LifetimeError> {
        if bin_width_ps == 0 || bin_width_ps > sync_period_ps {
            return Err(LifetimeError::InvalidArgument(format!(
                "bin width {bin_width_ps} ps must lie in 1..={sync_period_ps}"
            )));
        }
        let n = sync_period_ps.div_ceil(bin_width_ps) as usize;
        let mut counts = vec![0u64; n];
        let mut total = 0;
        for d in delays {
            if d < sync_period_ps {
                counts[(d / bin_width_ps) as usize] += 1;
                total += 1;
            }
        }
        if total == 0 {
            return Err(LifetimeError::EmptyStream);
        }
        let mode = counts
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
            .map_or(0, |(i, _)| i);
        Ok(Self {
            bin_width_ps,
            sync_period_ps,
            counts,
            total_counts: total,
            t0_ps: mode as u64 * bin_width_ps,
        })
    }

    pub fn bin_left_ps(&self, i: usize) -> u64 {
        i as u64 * self.bin_width_ps
    }

    /// Number of bins that lie entirely inside the period.
    pub fn full_bins(&self) -> usize {
        (self.sync_period_ps / self.bin_width_ps) as usize
    }
}

/// Microtime histogram of both channels pooled.
pub fn decay_histogram(stream: &PhotonStream, bin_width_ps: u64) -> Result<DecayHistogram, LifetimeError> {
    let res = u64::from(stream.header.resolution_ps);
    if bin_width_ps < res {
        return Err(LifetimeError::InvalidArgument(format!(
            "bin width {bin_width_ps} ps is finer than the {res} ps resolution"
        )));
    }
    if stream.is_empty() {
        return Err(LifetimeError::EmptyStream);
    }
    DecayHistogram::from_delays_ps(
        stream.records.iter().map(|r| u64::from(r.microtime) * res),
        bin_width_ps,
        stream.sync_period_ps(),
    )
}

/// Binned sum of exponentials plus a flat floor.
///
/// Parameters are `[A_1..A_n, tau_1..tau_n, c]` where `A_i` is the number of
/// photons component `i` places after the fit start, `tau_i` is in ns and `c`
/// is background counts per ns. The abscissa is the bin's left edge in ns
/// after the fit start.
#[derive(Debug, Clone, Copy)]
pub struct MultiExpModel {
    pub n_components: usize,
    pub bin_width_ns: f64,
}

impl Model for MultiExpModel {
    fn n_params(&self) -> usize {
        2 * self.n_components + 1
    }

    fn eval(&self, x: f64, p: &[f64]) -> f64 {
        let n = self.n_components;
        let mut f = p[2 * n] * self.bin_width_ns;
        for i in 0..n {
            let tau = p[n + i];
            f += p[i] * (-x / tau).exp() * -(-self.bin_width_ns / tau).exp_m1();
        }
        f
    }

    fn gradient(&self, x: f64, p: &[f64], grad: &mut [f64]) -> bool {
        let n = self.n_components;
        let w = self.bin_width_ns;
        for i in 0..n {
            let (a, tau) = (p[i], p[n + i]);
            let ea = (-x / tau).exp();
            let eb = (-(x + w) / tau).exp();
            grad[i] = ea * -(-w / tau).exp_m1();
            grad[n + i] = a * (x * ea - (x + w) * eb) / (tau * tau);
        }
        grad[2 * n] = w;
        true
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpComponent {
    pub lifetime_ns: f64,
    pub lifetime_sigma_ns: f64,
    /// Share of the exponential photons emitted after t0.
    pub amplitude_fraction: f64,
    pub amplitude_fraction_sigma: f64,
    /// Photons the component places after the fit start.
    pub counts_in_range: f64,
    pub counts_in_range_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiExpFit {
    /// Sorted by lifetime, ascending.
    pub components: Vec<ExpComponent>,
    /// Flat background, counts per histogram bin.
    pub background_level: f64,
    pub background_sigma: f64,
    pub t0_ps: u64,
    pub fit_start_ps: u64,
    pub fit_end_ps: u64,
    pub photons_in_range: u64,
    pub deviance: f64,
    /// Deviance per degree of freedom.
    pub fit_quality: f64,
    /// Parameter order `[A_1..A_n, tau_1..tau_n, c]` as in [`MultiExpModel`].
    pub parameter_names: Vec<String>,
    pub covariance: Vec<Vec<f64>>,
    pub covariance_reliable: bool,
    pub converged: bool,
    pub iterations: usize,
    pub requested_components: usize,
}

struct TailData {
    x: Vec<f64>,
    y: Vec<f64>,
    bin_width_ns: f64,
    /// Fit start relative to t0, ns.
    offset_ns: f64,
    start_ps: u64,
    end_ps: u64,
    photons: u64,
}

fn tail_data(hist: &DecayHistogram, fit_start_offset_ps: u64) -> Result<TailData, LifetimeError> {
    let w = hist.bin_width_ps;
    let first = (hist.t0_ps + fit_start_offset_ps).div_ceil(w) as usize;
    let last = hist.full_bins();
    if first >= last {
        return Err(LifetimeError::InvalidArgument(format!(
            "fit start offset {fit_start_offset_ps} ps leaves no bins before the period end"
        )));
    }
    let start_ps = hist.bin_left_ps(first);
    let x = (first..last)
        .map(|i| (hist.bin_left_ps(i) - start_ps) as f64 * 1e-3)
        .collect();
    let y: Vec<f64> = hist.counts[first..last].iter().map(|&c| c as f64).collect();
    Ok(TailData {
        photons: hist.counts[first..last].iter().sum(),
        x,
        y,
        bin_width_ns: w as f64 * 1e-3,
        offset_ns: (start_ps - hist.t0_ps) as f64 * 1e-3,
        start_ps,
        end_ps: hist.bin_left_ps(last),
    })
}

fn fit_components(data: &TailData, n: usize, amplitudes: &[f64], taus: &[f64], background: f64) -> Result<FitResult, FitError> {
    let model = MultiExpModel {
        n_components: n,
        bin_width_ns: data.bin_width_ns,
    };
    let (tau_lo, tau_hi) = tau_bounds(data);
    let mut params = Vec::with_capacity(2 * n + 1);
    for (i, &a) in amplitudes.iter().enumerate() {
        params.push(Parameter::non_negative(format!("A{}", i + 1), a.max(0.0)));
    }
    for (i, &t) in taus.iter().enumerate() {
        params.push(Parameter::bounded(format!("tau{}_ns", i + 1), t.clamp(tau_lo, tau_hi), tau_lo, tau_hi));
    }
    params.push(Parameter::non_negative("background_per_ns", background.max(0.0)));
    fit_nonlinear(
        &FitProblem {
            model: &model,
            params,
            x: &data.x,
            y: &data.y,
            weights: None,
            objective: Objective::PoissonMle,
        },
        &FitOptions::default(),
    )
}

/// Lifetime search box: a quarter bin up to ten fit windows.
fn tau_bounds(data: &TailData) -> (f64, f64) {
    (
        data.bin_width_ns / 4.0,
        10.0 * (data.x.last().copied().unwrap_or(0.0) + data.bin_width_ns),
    )
}

/// Components `(A, tau)` that survive pruning. Dropped: amplitudes below
/// twice their standard error, decays shorter than one bin
/// (indistinguishable from a one-bin excess) and lifetimes pinned at the
/// upper bound (indistinguishable from the flat floor). Lifetimes within 5%
/// of each other are merged.
fn prune(result: &FitResult, n: usize, data: &TailData) -> Vec<(f64, f64)> {
    let (_, tau_hi) = tau_bounds(data);
    let total: f64 = result.params[..n].iter().sum();
    let mut comps: Vec<(f64, f64)> = (0..n)
        .filter(|&i| {
            let (a, t) = (result.params[i], result.params[n + i]);
            a > 1e-9 * total.max(1.0)
                && a >= SIGNIFICANCE * result.std_errors[i]
                && t >= data.bin_width_ns
                && t < tau_hi * (1.0 - 1e-9)
        })
        .map(|i| (result.params[i], result.params[n + i]))
        .collect();
    comps.sort_by(|a, b| a.1.total_cmp(&b.1));
    let mut merged: Vec<(f64, f64)> = Vec::new();
    for (a, t) in comps {
        match merged.last_mut() {
            Some((pa, pt)) if t <= *pt * MERGE_RATIO => {
                *pt = (*pa * *pt + a * t) / (*pa + a);
                *pa += a;
            }
            _ => merged.push((a, t)),
        }
    }
    merged
}

/// Poisson maximum-likelihood fit of `n_components` exponentials plus a flat
/// background to the histogram tail starting `fit_start_offset_ps` after t0.
///
/// Five starts are run (one with log-spaced lifetimes, four jittered) and the
/// lowest deviance wins. Components that collapse to zero amplitude or
/// coincide within 5% are removed and the fit repeated.
pub fn fit_multiexp(hist: &DecayHistogram, n_components: usize, fit_start_offset_ps: u64) -> Result<MultiExpFit, LifetimeError> {
    if !(1..=MAX_COMPONENTS).contains(&n_components) {
        return Err(LifetimeError::InvalidArgument(format!(
            "n_components = {n_components} must lie in 1..={MAX_COMPONENTS}"
        )));
    }
    let data = tail_data(hist, fit_start_offset_ps)?;
    if data.photons < MIN_FIT_PHOTONS {
        return Err(LifetimeError::InsufficientCounts { photons: data.photons });
    }

    let nb = data.y.len();
    let tail_bins = (nb / 10).max(1);
    let floor = data.y[nb - tail_bins..].iter().sum::<f64>() / tail_bins as f64;
    let c0 = floor / data.bin_width_ns;
    let signal = (data.photons as f64 - floor * nb as f64).max(0.5 * data.photons as f64);
    let lo = hist.bin_width_ps as f64 * 1e-3;
    let hi = hist.sync_period_ps as f64 * 1e-3 / 2.0;
    let base_taus: Vec<f64> = (0..n_components)
        .map(|i| lo * (hi / lo).powf((i + 1) as f64 / (n_components + 1) as f64))
        .collect();
    let amps = vec![signal / n_components as f64; n_components];

    let starts: Vec<Result<FitResult, FitError>> = (0..RESTARTS)
        .into_par_iter()
        .map(|restart| {
            let taus: Vec<f64> = if restart == 0 {
                base_taus.clone()
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(restart as u64);
                base_taus
                    .iter()
                    .map(|&t| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        t * (RESTART_JITTER * z).exp()
                    })
                    .collect()
            };
            fit_components(&data, n_components, &amps, &taus, c0)
        })
        .collect();
    let mut best: Option<FitResult> = None;
    let mut first_err = None;
    for r in starts {
        match r {
            Ok(r) if r.converged => {
                if best.as_ref().is_none_or(|b| r.objective < b.objective) {
                    best = Some(r);
                }
            }
            Ok(_) => {}
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    let Some(mut result) = best else {
        return Err(match first_err {
            Some(FitError::SingularCurvature { .. }) | None => LifetimeError::FitDiverged,
            Some(e) => e.into(),
        });
    };

    let mut n = n_components;
    loop {
        let kept = prune(&result, n, &data);
        if kept.is_empty() {
            return Err(LifetimeError::InsufficientCounts { photons: data.photons });
        }
        if kept.len() == n {
            break;
        }
        n = kept.len();
        let background = result.params[result.params.len() - 1];
        let (a, t): (Vec<f64>, Vec<f64>) = kept.into_iter().unzip();
        result = fit_components(&data, n, &a, &t, background).map_err(|_| LifetimeError::FitDiverged)?;
        if !result.converged {
            return Err(LifetimeError::FitDiverged);
        }
    }
    Ok(assemble(hist, &data, &result, n, n_components))
}

fn assemble(hist: &DecayHistogram, data: &TailData, r: &FitResult, n: usize, requested: usize) -> MultiExpFit {
    let p = &r.params;
    let cov = &r.covariance;
    // counts extrapolated back to t0
    let back: Vec<f64> = (0..n).map(|i| p[i] * (data.offset_ns / p[n + i]).exp()).collect();
    let total: f64 = back.iter().sum();
    let mut components: Vec<ExpComponent> = (0..n)
        .map(|i| {
            // delta method over (A_j, tau_j)
            let mut grad = vec![0.0; p.len()];
            for j in 0..n {
                let dfrac_dback = if i == j {
                    (total - back[i]) / (total * total)
                } else {
                    -back[i] / (total * total)
                };
                grad[j] = dfrac_dback * back[j] / p[j].max(f64::MIN_POSITIVE);
                grad[n + j] = dfrac_dback * back[j] * (-data.offset_ns / (p[n + j] * p[n + j]));
            }
            let mut var = 0.0;
            for a in 0..p.len() {
                for b in 0..p.len() {
                    var += grad[a] * cov[a][b] * grad[b];
                }
            }
            ExpComponent {
                lifetime_ns: p[n + i],
                lifetime_sigma_ns: r.std_errors[n + i],
                amplitude_fraction: back[i] / total,
                amplitude_fraction_sigma: var.max(0.0).sqrt(),
                counts_in_range: p[i],
                counts_in_range_sigma: r.std_errors[i],
            }
        })
        .collect();
    components.sort_by(|a, b| a.lifetime_ns.total_cmp(&b.lifetime_ns));
    MultiExpFit {
        components,
        background_level: p[2 * n] * data.bin_width_ns,
        background_sigma: r.std_errors[2 * n] * data.bin_width_ns,
        t0_ps: hist.t0_ps,
        fit_start_ps: data.start_ps,
        fit_end_ps: data.end_ps,
        photons_in_range: data.photons,
        deviance: r.objective,
        fit_quality: r.reduced_statistic,
        parameter_names: r.names.clone(),
        covariance: r.covariance.clone(),
        covariance_reliable: r.covariance_reliable,
        converged: r.converged,
        iterations: r.iterations,
        requested_components: requested,
    }
}

/// Mean delay of an exponential with lifetime `tau` truncated at `window`.
pub fn truncated_mean(tau: f64, window: f64) -> f64 {
    if tau <= 0.0 {
        return 0.0;
    }
    tau - window / (window / tau).exp_m1()
}

/// Inverts [`truncated_mean`] by bisection: the maximum-likelihood lifetime
/// of an exponential observed only on `[0, window)` given the sample mean.
pub fn truncated_exponential_mle(mean_delay: f64, window: f64) -> f64 {
    if mean_delay <= 0.0 {
        return 0.0;
    }
    let cap = LIFETIME_CLAMP_WINDOWS * window;
    if mean_delay >= truncated_mean(cap, window) {
        return cap;
    }
    let (mut lo, mut hi) = (0.0, cap);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if truncated_mean(mid, window) < mean_delay {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Lifetime (ns) of one time bin from its photons' microtimes.
///
/// Photons earlier than t0 carry no decay information and are ignored.
pub fn bin_lifetime_estimate(microtimes_ps: &[u64], t0_ps: u64, sync_period_ps: u64) -> Result<f64, LifetimeError> {
    if t0_ps >= sync_period_ps {
        return Err(LifetimeError::InvalidArgument(format!(
            "t0 {t0_ps} ps lies outside the {sync_period_ps} ps period"
        )));
    }
    if microtimes_ps.len() < MIN_PHOTONS_PER_BIN {
        return Err(LifetimeError::TooFewPhotons { found: microtimes_ps.len() });
    }
    let (sum, used) = microtimes_ps
        .iter()
        .filter(|&&m| m >= t0_ps)
        .fold((0u64, 0usize), |(s, n), &m| (s + (m - t0_ps), n + 1));
    if 2 * used <= microtimes_ps.len() {
        return Err(LifetimeError::NonPositiveDelays);
    }
    let mean = sum as f64 / used as f64;
    let window = (sync_period_ps - t0_ps) as f64;
    Ok(truncated_exponential_mle(mean, window) * 1e-3)
}

/// Per-time-bin photon counts and lifetime estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifetimeTrace {
    pub bin_width_s: f64,
    pub t0_ps: u64,
    pub counts: Vec<u64>,
    /// `None` where the bin has too few photons for an estimate.
    pub lifetimes_ns: Vec<Option<f64>>,
}

fn prompt_position(stream: &PhotonStream) -> Result<u64, LifetimeError> {
    let res = u64::from(stream.header.resolution_ps);
    decay_histogram(stream, res.max(64).div_ceil(res) * res).map(|h| h.t0_ps)
}

pub fn lifetime_trace(stream: &PhotonStream, bin_width_s: f64) -> Result<LifetimeTrace, LifetimeError> {
    if !(bin_width_s.is_finite() && bin_width_s > 0.0) {
        return Err(LifetimeError::InvalidArgument(format!("bin width {bin_width_s} s must be > 0")));
    }
    if stream.is_empty() {
        return Err(LifetimeError::EmptyStream);
    }
    let t0 = prompt_position(stream)?;
    let res = u64::from(stream.header.resolution_ps);
    let period = stream.sync_period_ps();
    let bin_ps = bin_width_s * 1e12;
    let n_bins = ((stream.span_ps() as f64 / bin_ps).floor() as usize).max(1);
    let mut per_bin: Vec<Vec<u64>> = vec![Vec::new(); n_bins];
    for r in &stream.records {
        let idx = (stream.absolute_time_ps(r) as f64 / bin_ps) as usize;
        if let Some(v) = per_bin.get_mut(idx) {
            v.push(u64::from(r.microtime) * res);
        }
    }
    let lifetimes_ns = per_bin
        .par_iter()
        .map(|m| bin_lifetime_estimate(m, t0, period).ok())
        .collect();
    Ok(LifetimeTrace {
        bin_width_s,
        t0_ps: t0,
        counts: per_bin.iter().map(|v| v.len() as u64).collect(),
        lifetimes_ns,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlidOptions {
    pub bin_width_s: f64,
    pub lifetime_bins: usize,
    pub intensity_bins: usize,
    /// Upper edge of the lifetime axis; three times the whole-stream
    /// estimate when `None`.
    pub lifetime_max_ns: Option<f64>,
    /// Upper edge of the intensity axis; one past the largest bin count when
    /// `None`.
    pub intensity_max: Option<f64>,
}

impl Default for FlidOptions {
    fn default() -> Self {
        Self {
            bin_width_s: 0.005,
            lifetime_bins: 50,
            intensity_bins: 50,
            lifetime_max_ns: None,
            intensity_max: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlidGrid {
    pub bin_width_s: f64,
    pub lifetime_axis_ns: Vec<f64>,
    pub intensity_axis: Vec<f64>,
    /// `occurrence[lifetime_bin][intensity_bin]`.
    pub occurrence: Vec<Vec<u64>>,
    /// Time bins with too few photons for a lifetime, by intensity bin.
    pub unresolved: Vec<u64>,
    pub time_bins: usize,
}

impl FlidGrid {
    pub fn total(&self) -> u64 {
        self.occurrence.iter().flatten().sum::<u64>() + self.unresolved.iter().sum::<u64>()
    }

    /// Occurrences summed over intensity, per lifetime bin.
    pub fn lifetime_marginal(&self) -> Vec<u64> {
        self.occurrence.iter().map(|row| row.iter().sum()).collect()
    }

    /// Occurrences summed over lifetime (unresolved row included), per intensity bin.
    pub fn intensity_marginal(&self) -> Vec<u64> {
        let mut m = self.unresolved.clone();
        for row in &self.occurrence {
            for (acc, &v) in m.iter_mut().zip(row) {
                *acc += v;
            }
        }
        m
    }

    pub fn lifetime_centers_ns(&self) -> Vec<f64> {
        self.lifetime_axis_ns.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }
}

fn axis(max: f64, bins: usize) -> Vec<f64> {
    (0..=bins).map(|i| max * i as f64 / bins as f64).collect()
}

fn axis_index(value: f64, max: f64, bins: usize) -> usize {
    // multiply first: integer counts on a unit-width axis then map exactly
    ((value * bins as f64 / max).floor().max(0.0) as usize).min(bins - 1)
}

/// Builds the 2-D lifetime/intensity occurrence map. Values beyond the axis
/// ends land in the outermost bins.
pub fn build_flid(stream: &PhotonStream, opts: &FlidOptions) -> Result<FlidGrid, LifetimeError> {
    if opts.lifetime_bins < 2 || opts.intensity_bins < 2 {
        return Err(LifetimeError::InvalidArgument("FLID axes need >= 2 bins each".into()));
    }
    let trace = lifetime_trace(stream, opts.bin_width_s)?;
    let lifetime_max = match opts.lifetime_max_ns {
        Some(v) if v > 0.0 => v,
        Some(v) => return Err(LifetimeError::InvalidArgument(format!("lifetime_max_ns {v} must be > 0"))),
        None => {
            let res = u64::from(stream.header.resolution_ps);
            let all: Vec<u64> = stream.records.iter().map(|r| u64::from(r.microtime) * res).collect();
            let global = bin_lifetime_estimate(&all, trace.t0_ps, stream.sync_period_ps()).unwrap_or(0.0);
            if global > 0.0 {
                3.0 * global
            } else {
                stream.sync_period_ps() as f64 * 1e-3
            }
        }
    };
    let intensity_max = match opts.intensity_max {
        Some(v) if v > 0.0 => v,
        Some(v) => return Err(LifetimeError::InvalidArgument(format!("intensity_max {v} must be > 0"))),
        None => trace.counts.iter().copied().max().unwrap_or(0) as f64 + 1.0,
    };
    let mut occurrence = vec![vec![0u64; opts.intensity_bins]; opts.lifetime_bins];
    let mut unresolved = vec![0u64; opts.intensity_bins];
    for (&c, tau) in trace.counts.iter().zip(&trace.lifetimes_ns) {
        let ib = axis_index(c as f64, intensity_max, opts.intensity_bins);
        match tau {
            Some(t) => occurrence[axis_index(*t, lifetime_max, opts.lifetime_bins)][ib] += 1,
            None => unresolved[ib] += 1,
        }
    }
    Ok(FlidGrid {
        bin_width_s: opts.bin_width_s,
        lifetime_axis_ns: axis(lifetime_max, opts.lifetime_bins),
        intensity_axis: axis(intensity_max, opts.intensity_bins),
        occurrence,
        unresolved,
        time_bins: trace.counts.len(),
    })
}

/// Two lifetime populations in the FLID, if present.
pub fn flid_lifetime_modes(grid: &FlidGrid) -> Option<Bimodal> {
    let marginal: Vec<f64> = grid.lifetime_marginal().iter().map(|&v| v as f64).collect();
    find_bimodal(&marginal, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensityLifetimeCorrelation {
    pub pearson_r: f64,
    /// Large-sample standard error `(1 - r^2) / sqrt(n - 1)`.
    pub sigma: f64,
    pub bins_used: usize,
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

/// Pearson correlation between per-bin intensity and lifetime.
pub fn intensity_lifetime_correlation(stream: &PhotonStream, bin_width_s: f64) -> Result<IntensityLifetimeCorrelation, LifetimeError> {
    let trace = lifetime_trace(stream, bin_width_s)?;
    let (x, y): (Vec<f64>, Vec<f64>) = trace
        .counts
        .iter()
        .zip(&trace.lifetimes_ns)
        .filter_map(|(&c, t)| t.map(|t| (c as f64, t)))
        .unzip();
    if x.len() < 100 {
        return Err(LifetimeError::InsufficientBins { found: x.len() });
    }
    let r = pearson(&x, &y);
    Ok(IntensityLifetimeCorrelation {
        pearson_r: r,
        sigma: (1.0 - r * r) / ((x.len() - 1) as f64).sqrt(),
        bins_used: x.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn truncation_formula_at_two_lifetimes() {
        // m = tau - 2 tau e^-2 / (1 - e^-2)
        let e2 = (-2.0f64).exp();
        let m = 1.0 - 2.0 * e2 / (1.0 - e2);
        assert!((truncated_mean(1.0, 2.0) - m).abs() < 1e-15);
        assert!((m - 0.686_965_2).abs() < 1e-6);
        assert!((truncated_exponential_mle(m, 2.0) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn photons_at_t0_give_zero() {
        let t = bin_lifetime_estimate(&[1000; 5], 1000, 400_000).unwrap();
        assert_eq!(t, 0.0);
    }

    #[test]
    fn too_few_and_early_photons() {
        assert!(matches!(
            bin_lifetime_estimate(&[5000; 4], 0, 400_000),
            Err(LifetimeError::TooFewPhotons { found: 4 })
        ));
        assert!(matches!(
            bin_lifetime_estimate(&[10, 20, 30, 5000, 6000], 1000, 400_000),
            Err(LifetimeError::NonPositiveDelays)
        ));
    }

    #[test]
    fn uniform_delays_clamp_high() {
        let delays: Vec<u64> = (0..1000).map(|i| i * 400).collect();
        let t = bin_lifetime_estimate(&delays, 0, 400_000).unwrap();
        assert!(t > 400.0);
    }

    #[test]
    fn histogram_mode_and_partial_bin() {
        let h = DecayHistogram::from_delays_ps([0, 130, 140, 150, 399], 100, 400).unwrap();
        assert_eq!(h.counts, vec![1, 3, 0, 1]);
        assert_eq!(h.t0_ps, 100);
        assert_eq!(h.total_counts, 5);
        let h = DecayHistogram::from_delays_ps([0, 350], 100, 350).unwrap();
        assert_eq!(h.counts.len(), 4);
        assert_eq!(h.full_bins(), 3);
    }

    #[test]
    fn model_gradient_matches_differences() {
        let m = MultiExpModel {
            n_components: 2,
            bin_width_ns: 0.128,
        };
        let p = [500.0, 300.0, 2.8, 15.3, 0.4];
        let mut g = [0.0; 5];
        for x in [0.0, 1.0, 17.5, 90.0] {
            m.gradient(x, &p, &mut g);
            for j in 0..5 {
                let h = 1e-6 * p[j];
                let mut up = p;
                let mut dn = p;
                up[j] += h;
                dn[j] -= h;
                let fd = (m.eval(x, &up) - m.eval(x, &dn)) / (2.0 * h);
                assert!((fd - g[j]).abs() <= 1e-6 * fd.abs().max(1e-6), "x={x} j={j} {fd} {}", g[j]);
            }
        }
    }

    fn fit_result(params: Vec<f64>, std_errors: Vec<f64>) -> FitResult {
        FitResult {
            names: vec![],
            params,
            std_errors,
            covariance: vec![],
            covariance_reliable: true,
            condition_number: 1.0,
            at_bound: vec![],
            objective: 0.0,
            objective_kind: Objective::PoissonMle,
            reduced_statistic: 0.0,
            iterations: 0,
            converged: true,
            termination: crate::fitting::Termination::Gradient,
        }
    }

    /// 100 bins of 0.064 ns: the lifetime box is [0.016, 64] ns.
    fn tail() -> TailData {
        TailData {
            x: (0..100).map(|i| i as f64 * 0.064).collect(),
            y: vec![0.0; 100],
            bin_width_ns: 0.064,
            offset_ns: 0.0,
            start_ps: 0,
            end_ps: 6_400,
            photons: 0,
        }
    }

    #[test]
    fn pruning_merges_close_lifetimes() {
        let r = fit_result(vec![100.0, 0.0, 50.0, 10.0, 3.0, 10.3, 0.0], vec![1.0; 7]);
        let kept = prune(&r, 3, &tail());
        assert_eq!(kept.len(), 1);
        assert!((kept[0].0 - 150.0).abs() < 1e-12);
        assert!((kept[0].1 - (100.0 * 10.0 + 50.0 * 10.3) / 150.0).abs() < 1e-12);
    }

    #[test]
    fn pruning_drops_unresolvable_components() {
        let (_, tau_hi) = tau_bounds(&tail());
        // insignificant amplitude, sub-bin decay, lifetime pinned at the upper bound, one keeper
        let r = fit_result(
            vec![3.0, 500.0, 500.0, 400.0, 5.0, 0.03, tau_hi, 2.0, 0.0],
            vec![2.0, 10.0, 10.0, 10.0, 0.1, 0.01, 1.0, 0.1, 0.0],
        );
        assert_eq!(prune(&r, 4, &tail()), vec![(400.0, 2.0)]);
    }

    #[test]
    fn few_photons_rejected() {
        let h = DecayHistogram::from_delays_ps((0..500).map(|i| i * 10), 16, 400_000).unwrap();
        assert!(matches!(fit_multiexp(&h, 1, 0), Err(LifetimeError::InsufficientCounts { .. })));
    }

    proptest! {
        #[test]
        fn estimate_scales_with_delays(
            delays in prop::collection::vec(0u64..200_000, 5..60),
            c in 1u64..8,
        ) {
            let period = 400_000;
            match bin_lifetime_estimate(&delays, 0, period) {
                Ok(t) => {
                    let scaled: Vec<u64> = delays.iter().map(|d| d * c).collect();
                    let ts = bin_lifetime_estimate(&scaled, 0, period * c).unwrap();
                    prop_assert!((ts - c as f64 * t).abs() <= 1e-8 * ts.max(1e-9));
                }
                Err(_) => prop_assert!(bin_lifetime_estimate(&delays.iter().map(|d| d * c).collect::<Vec<_>>(), 0, period * c).is_err()),
            }
        }
    }
}
