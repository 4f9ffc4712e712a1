//! The full analysis bundle for one stream: intensity trace, decay fit, g2,
//! blinking envelope, FLID and the intensity-lifetime correlation.

use std::path::{Path, PathBuf};

use photonstat_core::correlation::threshold_states_or_median;
use photonstat_core::fitting::Model;
use photonstat_core::lifetime::{flid_lifetime_modes, lifetime_trace, MultiExpModel};
use photonstat_core::{
    bin_intensity, build_flid, decay_histogram, fit_multiexp, g2_envelope, g2_pulsed, intensity_histogram,
    intensity_lifetime_correlation, CorrelationError, DecayHistogram, FlidGrid, G2Envelope, G2Histogram,
    G2Options, LifetimeError, MultiExpFit, PhotonStream,
};
use serde::Serialize;

use crate::config::{AnalysisConfig, Format, OutputConfig};
use crate::error::CliError;
use crate::report::{num, opt_num, Bundle, Measured};
use crate::svg::{heatmap, Axis, Plot, Series};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    InsufficientCounts,
    FitDiverged,
    InsufficientBins,
    TraceTooShort,
    /// Background accounts for every photon, so no corrected g2 exists.
    NoSignal,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComponentReport {
    pub lifetime_ns: Measured,
    pub amplitude_fraction: Measured,
    pub counts_in_range: Measured,
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayFitReport {
    pub status: Status,
    pub message: Option<String>,
    pub bin_width_ps: u64,
    pub t0_ps: u64,
    pub total_counts: u64,
    pub requested_components: usize,
    pub components: Vec<ComponentReport>,
    /// Flat floor, counts per histogram bin.
    pub background_per_bin: Measured,
    pub fit_start_ps: Option<u64>,
    pub fit_end_ps: Option<u64>,
    pub photons_in_range: Option<u64>,
    pub deviance: Option<f64>,
    pub fit_quality: Option<f64>,
    pub converged: Option<bool>,
    pub iterations: Option<usize>,
    pub parameter_names: Vec<String>,
    pub covariance: Vec<Vec<f64>>,
    pub covariance_reliable: Option<bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PeakArea {
    pub k: i32,
    pub area: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct G2Summary {
    pub sync_period_ps: u64,
    pub lag_bin_width_ps: u64,
    pub intra_window_ps: u64,
    /// `config`, `lifetime` (five times the dominant fitted lifetime) or `default`.
    pub intra_window_source: String,
    pub n_side_peaks: u32,
    pub side_peak_range: (u32, u32),
    pub center_peak_area: u64,
    pub side_peak_mean: f64,
    pub peak_areas: Vec<PeakArea>,
    pub g2_zero_raw: Measured,
    /// Normalized by the nearest side peaks; inflated by blinking bunching.
    pub g2_zero_raw_nearest: Option<f64>,
    pub background_rate_hz: Option<f64>,
    /// `config`, `metadata`, `decay_floor` or `none`.
    pub background_source: String,
    pub signal_fraction_rho: f64,
    pub g2_zero_corrected: Measured,
}

#[derive(Debug, Clone, Serialize)]
pub struct CorrelationReport {
    pub status: Status,
    pub message: Option<String>,
    pub bin_width_s: f64,
    pub pearson_r: Option<Measured>,
    pub bins_used: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceSummary {
    pub bin_width_s: f64,
    pub bins: usize,
    pub mean_counts: f64,
    pub state_threshold: u64,
    pub on_fraction: f64,
    /// True when the histogram was not bimodal and the median split was used.
    pub threshold_fallback: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct FlidSummary {
    pub time_bins: usize,
    pub unresolved_bins: u64,
    /// Lifetime centres of the two populations, when the lifetime marginal
    /// is bimodal.
    pub lifetime_modes_ns: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StageStatus {
    pub stage: String,
    pub status: Status,
    pub message: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisSummary {
    pub records: u64,
    pub channel_counts: Vec<u64>,
    pub span_s: f64,
    pub sync_period_ps: u64,
    pub resolution_ps: u32,
    pub trace: TraceSummary,
    pub stages: Vec<StageStatus>,
    pub files: Vec<String>,
}

/// Everything `analyze` computes, kept for callers that want the numbers
/// without reparsing the files.
pub struct Analysis {
    pub bundle: Bundle,
    pub summary: AnalysisSummary,
    pub decay: DecayHistogram,
    pub decay_fit: DecayFitReport,
    pub g2: G2Histogram,
    pub g2_summary: G2Summary,
    pub envelope: Option<G2Envelope>,
    pub flid: FlidGrid,
    pub correlation: CorrelationReport,
}

fn stage_status(e: &LifetimeError) -> Option<Status> {
    match e {
        LifetimeError::InsufficientCounts { .. } => Some(Status::InsufficientCounts),
        LifetimeError::FitDiverged => Some(Status::FitDiverged),
        LifetimeError::InsufficientBins { .. } => Some(Status::InsufficientBins),
        _ => None,
    }
}

fn decay_report(hist: &DecayHistogram, cfg: &AnalysisConfig, fit: &Result<MultiExpFit, LifetimeError>) -> DecayFitReport {
    let base = DecayFitReport {
        status: Status::Ok,
        message: None,
        bin_width_ps: hist.bin_width_ps,
        t0_ps: hist.t0_ps,
        total_counts: hist.total_counts,
        requested_components: cfg.decay.n_components,
        components: Vec::new(),
        background_per_bin: Measured::new(0.0, 0.0),
        fit_start_ps: None,
        fit_end_ps: None,
        photons_in_range: None,
        deviance: None,
        fit_quality: None,
        converged: None,
        iterations: None,
        parameter_names: Vec::new(),
        covariance: Vec::new(),
        covariance_reliable: None,
    };
    match fit {
        Ok(f) => DecayFitReport {
            components: f
                .components
                .iter()
                .map(|c| ComponentReport {
                    lifetime_ns: Measured::new(c.lifetime_ns, c.lifetime_sigma_ns),
                    amplitude_fraction: Measured::new(c.amplitude_fraction, c.amplitude_fraction_sigma),
                    counts_in_range: Measured::new(c.counts_in_range, c.counts_in_range_sigma),
                })
                .collect(),
            background_per_bin: Measured::new(f.background_level, f.background_sigma),
            fit_start_ps: Some(f.fit_start_ps),
            fit_end_ps: Some(f.fit_end_ps),
            photons_in_range: Some(f.photons_in_range),
            deviance: Some(f.deviance),
            fit_quality: Some(f.fit_quality),
            converged: Some(f.converged),
            iterations: Some(f.iterations),
            parameter_names: f.parameter_names.clone(),
            covariance: f.covariance.clone(),
            covariance_reliable: Some(f.covariance_reliable),
            ..base
        },
        Err(e) => {
            // without a resolvable decay the whole histogram is the flat floor
            let bins = hist.full_bins().max(1);
            let counts: u64 = hist.counts[..bins.min(hist.counts.len())].iter().sum();
            let mean = counts as f64 / bins as f64;
            DecayFitReport {
                status: stage_status(e).unwrap_or(Status::FitDiverged),
                message: Some(format!("lifetime_flid: {e}")),
                background_per_bin: Measured::new(mean, (mean / bins as f64).sqrt()),
                ..base
            }
        }
    }
}

/// Model value per decay bin inside the fit range.
fn decay_model(hist: &DecayHistogram, fit: &MultiExpFit) -> Vec<Option<f64>> {
    let n = fit.components.len();
    let w_ns = hist.bin_width_ps as f64 * 1e-3;
    let model = MultiExpModel {
        n_components: n,
        bin_width_ns: w_ns,
    };
    let mut p: Vec<f64> = fit.components.iter().map(|c| c.counts_in_range).collect();
    p.extend(fit.components.iter().map(|c| c.lifetime_ns));
    p.push(fit.background_level / w_ns);
    (0..hist.counts.len())
        .map(|i| {
            let left = hist.bin_left_ps(i);
            (left >= fit.fit_start_ps && left + hist.bin_width_ps <= fit.fit_end_ps)
                .then(|| model.eval((left - fit.fit_start_ps) as f64 * 1e-3, &p))
        })
        .collect()
}

fn metadata_dark_rate(stream: &PhotonStream) -> Option<f64> {
    let meta = stream.header.metadata_json()?;
    let dark = meta.get("detector_params")?.get("dark_rate_hz")?.as_f64()?;
    Some(dark * f64::from(stream.header.channel_count))
}

/// Runs every analysis stage. Data-limited stages (too few photons for a
/// decay fit, too short for the envelope, too few bins for a correlation)
/// are reported in their outputs; any other error aborts.
pub fn analyze(stream: &PhotonStream, cfg: &AnalysisConfig, out: &OutputConfig) -> Result<Analysis, CliError> {
    if stream.is_empty() {
        return Err(CorrelationError::EmptyStream.into());
    }
    let mut stages = Vec::new();
    let mut bundle = Bundle::new();
    let csv = out.wants(Format::Csv);
    let json = out.wants(Format::Json);
    let svg = out.wants(Format::Svg);

    // intensity and lifetime traces
    let trace = bin_intensity(stream, cfg.trace_bin_s)?;
    let occurrences = intensity_histogram(&trace);
    let states = threshold_states_or_median(&trace);
    let lt = lifetime_trace(stream, cfg.trace_bin_s)?;
    if csv {
        bundle.add_csv(
            "trace.csv",
            &["time_s", "counts", "lifetime_ns", "state"],
            trace.counts.iter().enumerate().map(|(i, &c)| {
                vec![
                    num(trace.start_time_s + i as f64 * trace.bin_width_s),
                    c.to_string(),
                    opt_num(lt.lifetimes_ns.get(i).copied().flatten()),
                    if states.bright[i] { "bright" } else { "grey" }.to_owned(),
                ]
            }),
        );
        let max = trace.counts.iter().copied().max().unwrap_or(0);
        bundle.add_csv(
            "intensity_hist.csv",
            &["counts_per_bin", "occurrences"],
            (0..=max).map(|c| vec![c.to_string(), occurrences.get(c).to_string()]),
        );
    }
    if svg {
        let t: Vec<(f64, f64)> = trace
            .counts
            .iter()
            .enumerate()
            .map(|(i, &c)| (trace.start_time_s + i as f64 * trace.bin_width_s, c as f64))
            .collect();
        bundle.add(
            "trace.svg",
            Plot::new("Intensity trace", Axis::linear("time (s)"), Axis::linear("counts per bin"))
                .with(Series::line("counts", t))
                .render()
                .into_bytes(),
        );
        let lts: Vec<(f64, f64)> = lt
            .lifetimes_ns
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|v| (trace.start_time_s + i as f64 * trace.bin_width_s, v)))
            .collect();
        bundle.add(
            "lifetime_trace.svg",
            Plot::new("Lifetime trace", Axis::linear("time (s)"), Axis::linear("lifetime (ns)"))
                .with(Series::line("lifetime", lts))
                .render()
                .into_bytes(),
        );
        let h: Vec<(f64, f64)> = occurrences.iter_nonzero().map(|(c, n)| (c as f64, n as f64)).collect();
        bundle.add(
            "intensity_hist.svg",
            Plot::new("Intensity occurrences", Axis::linear("counts per bin"), Axis::linear("occurrences"))
                .with(Series::points("occurrences", h))
                .render()
                .into_bytes(),
        );
    }

    // decay histogram and multi-exponential tail fit
    let bin_ps = cfg.decay.bin_width_ps.max(u64::from(stream.header.resolution_ps));
    let decay = decay_histogram(stream, bin_ps)?;
    let fit = match fit_multiexp(&decay, cfg.decay.n_components, cfg.decay.fit_start_offset_ps) {
        Err(e) if stage_status(&e).is_none() => return Err(e.into()),
        other => other,
    };
    let decay_fit = decay_report(&decay, cfg, &fit);
    stages.push(StageStatus {
        stage: "decay_fit".into(),
        status: decay_fit.status,
        message: decay_fit.message.clone(),
    });
    let model = fit.as_ref().ok().map(|f| decay_model(&decay, f));
    if csv {
        bundle.add_csv(
            "decay.csv",
            &["bin_left_ps", "counts", "model"],
            decay.counts.iter().enumerate().map(|(i, &c)| {
                vec![
                    decay.bin_left_ps(i).to_string(),
                    c.to_string(),
                    opt_num(model.as_ref().and_then(|m| m[i])),
                ]
            }),
        );
    }
    if json {
        bundle.add_json("decay_fit.json", &decay_fit);
    }
    if svg {
        let data: Vec<(f64, f64)> = decay
            .counts
            .iter()
            .enumerate()
            .map(|(i, &c)| (decay.bin_left_ps(i) as f64 * 1e-3, c as f64))
            .collect();
        let mut plot = Plot::new("Decay", Axis::linear("delay (ns)"), Axis::log("counts")).with(Series::points("counts", data));
        if let Some(m) = &model {
            let pts = m
                .iter()
                .enumerate()
                .filter_map(|(i, v)| v.map(|v| (decay.bin_left_ps(i) as f64 * 1e-3, v)))
                .collect();
            plot = plot.with(Series::line("fit", pts));
        }
        bundle.add("decay.svg", plot.render().into_bytes());
    }

    // short-delay g2
    let period = stream.sync_period_ps();
    let dominant = fit.as_ref().ok().and_then(|f| {
        f.components
            .iter()
            .max_by(|a, b| a.amplitude_fraction.total_cmp(&b.amplitude_fraction))
            .map(|c| c.lifetime_ns)
    });
    let (window, window_source) = match (cfg.g2.intra_window_ps, dominant) {
        (Some(w), _) => (w, "config"),
        (None, Some(tau)) => (G2Options::window_for_lifetime(tau, period).max(1), "lifetime"),
        (None, None) => (G2Options::default().intra_window_ps.min(period / 2), "default"),
    };
    let floor_rate = fit.as_ref().ok().map(|f| {
        let bins_per_period = period as f64 / decay.bin_width_ps as f64;
        f.background_level * bins_per_period / stream.span_s()
    });
    let (background, background_source) = match (cfg.g2.background_rate_hz, metadata_dark_rate(stream), floor_rate) {
        (Some(bg), _, _) => (Some(bg), "config"),
        (None, Some(bg), _) => (Some(bg), "metadata"),
        (None, None, Some(bg)) => (Some(bg), "decay_floor"),
        _ => (None, "none"),
    };
    let (g2, corrected) = match g2_pulsed(stream, &cfg.g2.options(window, background)) {
        Ok(g2) => (g2, true),
        Err(CorrelationError::ZeroSignal) => (g2_pulsed(stream, &cfg.g2.options(window, None))?, false),
        Err(e) => return Err(e.into()),
    };
    if background.is_some() {
        stages.push(StageStatus {
            stage: "g2_background_subtraction".into(),
            status: if corrected { Status::Ok } else { Status::NoSignal },
            message: (!corrected).then(|| format!("correlation: {}", CorrelationError::ZeroSignal)),
        });
    }
    let n_side = g2.n_side_peaks as i32;
    let g2_summary = G2Summary {
        sync_period_ps: g2.sync_period_ps,
        lag_bin_width_ps: g2.lag_bin_width_ps,
        intra_window_ps: g2.intra_window_ps,
        intra_window_source: window_source.into(),
        n_side_peaks: g2.n_side_peaks,
        side_peak_range: g2.side_peak_range,
        center_peak_area: g2.center_peak_area,
        side_peak_mean: g2.side_peak_mean,
        peak_areas: (-n_side..=n_side).map(|k| PeakArea { k, area: g2.peak_area(k) }).collect(),
        g2_zero_raw: Measured::new(g2.g2_zero_raw, g2.g2_zero_raw_sigma),
        g2_zero_raw_nearest: g2.g2_zero_raw_nearest.is_finite().then_some(g2.g2_zero_raw_nearest),
        background_rate_hz: background,
        background_source: background_source.into(),
        signal_fraction_rho: if corrected { g2.signal_fraction_rho } else { 0.0 },
        g2_zero_corrected: if corrected {
            Measured::new(g2.g2_zero_corrected, g2.g2_zero_corrected_sigma)
        } else {
            Measured::new(f64::NAN, f64::NAN)
        },
    };
    if csv {
        bundle.add_csv(
            "g2.csv",
            &["lag_ps", "counts"],
            g2.counts.iter().enumerate().map(|(i, &c)| vec![g2.lag_ps(i).to_string(), c.to_string()]),
        );
    }
    if json {
        bundle.add_json("g2_summary.json", &g2_summary);
    }
    if svg {
        let pts = g2.counts.iter().enumerate().map(|(i, &c)| (g2.lag_ps(i) as f64 * 1e-3, c as f64)).collect();
        bundle.add(
            "g2.svg",
            Plot::new("Coincidences", Axis::linear("delay (ns)"), Axis::linear("pairs per bin"))
                .with(Series::line("g2", pts))
                .render()
                .into_bytes(),
        );
    }

    // independent long-delay and FLID stages
    let ((envelope, flid), correlation) = rayon::join(
        || rayon::join(|| g2_envelope(stream, &cfg.envelope.options()), || build_flid(stream, &cfg.flid_options())),
        || intensity_lifetime_correlation(stream, cfg.trace_bin_s),
    );

    let envelope = match envelope {
        Ok(env) => {
            stages.push(StageStatus {
                stage: "envelope".into(),
                status: Status::Ok,
                message: None,
            });
            Some(env)
        }
        Err(e @ CorrelationError::TraceTooShort { .. }) => {
            stages.push(StageStatus {
                stage: "envelope".into(),
                status: Status::TraceTooShort,
                message: Some(CliError::from(e).to_string()),
            });
            None
        }
        Err(e) => return Err(e.into()),
    };
    if let Some(env) = &envelope {
        if csv {
            bundle.add_csv(
                "envelope.csv",
                &["tau_s", "delta_lo", "delta_hi", "effective_tau_s", "coincidences", "expected", "g2", "one_sigma"],
                env.points.iter().map(|p| {
                    vec![
                        num(p.tau_s),
                        p.delta_lo.to_string(),
                        p.delta_hi.to_string(),
                        num(p.effective_tau_s),
                        p.coincidences.to_string(),
                        num(p.expected),
                        num(p.value),
                        num(p.one_sigma),
                    ]
                }),
            );
        }
        if svg {
            let pts = env.points.iter().map(|p| (p.tau_s, p.value)).collect();
            let errs = env.points.iter().map(|p| p.one_sigma).collect();
            bundle.add(
                "envelope.svg",
                Plot::new("Coincidence-peak envelope", Axis::log("delay (s)"), Axis::linear("g2"))
                    .with(Series::points("envelope", pts).with_errors(errs))
                    .render()
                    .into_bytes(),
            );
        }
    }

    let flid = flid?;
    let modes = flid_lifetime_modes(&flid).map(|m| {
        let c = flid.lifetime_centers_ns();
        (c[m.low_mode], c[m.high_mode])
    });
    if csv {
        let ia = &flid.intensity_axis;
        let mut header = vec!["lifetime_lo_ns".to_owned(), "lifetime_hi_ns".to_owned()];
        header.extend(ia.windows(2).map(|w| format!("counts_{}_{}", num(w[0]), num(w[1]))));
        let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
        let la = &flid.lifetime_axis_ns;
        let mut rows: Vec<Vec<String>> = flid
            .occurrence
            .iter()
            .enumerate()
            .map(|(r, row)| {
                let mut v = vec![num(la[r]), num(la[r + 1])];
                v.extend(row.iter().map(u64::to_string));
                v
            })
            .collect();
        let mut last = vec!["unresolved".to_owned(), String::new()];
        last.extend(flid.unresolved.iter().map(u64::to_string));
        rows.push(last);
        bundle.add_csv("flid.csv", &header_refs, rows);
    }
    if svg {
        bundle.add(
            "flid.svg",
            heatmap(
                "FLID",
                "counts per bin",
                "lifetime (ns)",
                &flid.intensity_axis,
                &flid.lifetime_axis_ns,
                &flid.occurrence,
            )
            .into_bytes(),
        );
    }

    let correlation = match correlation {
        Ok(r) => CorrelationReport {
            status: Status::Ok,
            message: None,
            bin_width_s: cfg.trace_bin_s,
            pearson_r: Some(Measured::new(r.pearson_r, r.sigma)),
            bins_used: Some(r.bins_used),
        },
        Err(e) => match stage_status(&e) {
            Some(status) => CorrelationReport {
                status,
                message: Some(CliError::from(e).to_string()),
                bin_width_s: cfg.trace_bin_s,
                pearson_r: None,
                bins_used: None,
            },
            None => return Err(e.into()),
        },
    };
    stages.push(StageStatus {
        stage: "intensity_lifetime_correlation".into(),
        status: correlation.status,
        message: correlation.message.clone(),
    });
    if json {
        bundle.add_json("correlation.json", &correlation);
    }

    let mut files: Vec<String> = bundle.names().map(str::to_owned).collect();
    if json {
        files.push("analysis.json".into());
    }
    let summary = AnalysisSummary {
        records: stream.len() as u64,
        channel_counts: stream.channel_counts(),
        span_s: stream.span_s(),
        sync_period_ps: period,
        resolution_ps: stream.header.resolution_ps,
        trace: TraceSummary {
            bin_width_s: trace.bin_width_s,
            bins: trace.counts.len(),
            mean_counts: trace.mean(),
            state_threshold: states.threshold,
            on_fraction: states.on_fraction,
            threshold_fallback: states.fallback,
        },
        stages,
        files,
    };
    if json {
        bundle.add_json(
            "analysis.json",
            &serde_json::json!({
                "summary": &summary,
                "flid": FlidSummary {
                    time_bins: flid.time_bins,
                    unresolved_bins: flid.unresolved.iter().sum(),
                    lifetime_modes_ns: modes,
                },
            }),
        );
    }
    Ok(Analysis {
        bundle,
        summary,
        decay,
        decay_fit,
        g2,
        g2_summary,
        envelope,
        flid,
        correlation,
    })
}

/// Reads a stream, analyzes it and writes the bundle into `out_dir`.
pub fn cmd_analyze(stream_path: &Path, cfg: &AnalysisConfig, out: &OutputConfig, out_dir: &Path) -> Result<(Analysis, Vec<PathBuf>), CliError> {
    let stream = PhotonStream::read_from(stream_path).map_err(|e| match e {
        photonstat_core::StreamError::Io(io) => CliError::io(stream_path, io),
        other => other.into(),
    })?;
    let analysis = analyze(&stream, cfg, out)?;
    let written = analysis.bundle.write_to(out_dir)?;
    Ok((analysis, written))
}
