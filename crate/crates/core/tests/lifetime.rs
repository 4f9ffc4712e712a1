use photonstat_core::fitting::Model;
use photonstat_core::lifetime::{flid_lifetime_modes, lifetime_trace, truncated_exponential_mle, MultiExpModel};
use photonstat_core::{
    bin_intensity, bin_lifetime_estimate, build_flid, decay_histogram, fit_multiexp, intensity_histogram,
    intensity_lifetime_correlation, simulate_stream, BlinkingModel, DecayHistogram, DetectorParams, EmitterParams,
    FlidOptions, LifetimeError, MultiExpFit, SimConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Poisson};

const PERIOD: u64 = 400_000;
const RES: u64 = 16;

/// Photon delays (ps) from a mixture of exponentials `(tau_ns, weight)` plus a
/// uniform background fraction, quantized and wrapped like hardware microtimes.
fn synthetic_delays(components: &[(f64, f64)], background: f64, n: usize, seed: u64) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let exps: Vec<Exp<f64>> = components.iter().map(|&(t, _)| Exp::new(1.0 / (t * 1e3)).unwrap()).collect();
    let total: f64 = components.iter().map(|c| c.1).sum();
    (0..n)
        .map(|_| {
            let t = if rng.random::<f64>() < background {
                rng.random_range(0.0..PERIOD as f64)
            } else {
                let mut u = rng.random::<f64>() * total;
                let mut k = 0;
                while k + 1 < components.len() && u >= components[k].1 {
                    u -= components[k].1;
                    k += 1;
                }
                exps[k].sample(&mut rng)
            };
            (t as u64 / RES * RES) % PERIOD
        })
        .collect()
}

fn hist(delays: &[u64]) -> DecayHistogram {
    DecayHistogram::from_delays_ps(delays.iter().copied(), 128, PERIOD).unwrap()
}

#[test]
fn single_exponential_recovered() {
    let h = hist(&synthetic_delays(&[(15.3, 1.0)], 0.0, 1_000_000, 1));
    assert_eq!(h.t0_ps, 0);
    let fit = fit_multiexp(&h, 1, 0).unwrap();
    assert_eq!(fit.components.len(), 1);
    assert!((fit.components[0].lifetime_ns - 15.3).abs() < 0.2, "{fit:?}");
    assert!((fit.components[0].amplitude_fraction - 1.0).abs() < 1e-12);
    assert!(fit.background_level < 3.0 * fit.background_sigma.max(1e-3), "{fit:?}");
    assert!(fit.converged);
}

#[test]
fn log_linear_tail_slope_matches_lifetime() {
    let h = hist(&synthetic_delays(&[(15.3, 1.0)], 0.0, 1_000_000, 2));
    // unweighted regression of ln(counts) over 1..4 lifetimes
    let (mut sx, mut sy, mut sxx, mut sxy, mut n) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (i, &c) in h.counts.iter().enumerate() {
        let t = (i as f64 + 0.5) * 0.128;
        if (15.3..61.2).contains(&t) && c > 0 {
            let y = (c as f64).ln();
            sx += t;
            sy += y;
            sxx += t * t;
            sxy += t * y;
            n += 1.0;
        }
    }
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    assert!((slope * 15.3 + 1.0).abs() < 0.02, "slope {slope}");
}

#[test]
fn three_components_recovered() {
    let truth = [(2.8, 0.30), (15.3, 0.65), (56.0, 0.05)];
    let h = hist(&synthetic_delays(&truth, 0.0, 1_000_000, 3));
    let fit = fit_multiexp(&h, 3, 0).unwrap();
    assert_eq!(fit.components.len(), 3, "{fit:?}");
    for (c, (tau, frac)) in fit.components.iter().zip(truth) {
        assert!((c.lifetime_ns / tau - 1.0).abs() < 0.10, "{c:?} vs {tau}");
        assert!((c.amplitude_fraction - frac).abs() < 0.05, "{c:?} vs {frac}");
    }
    let sum: f64 = fit.components.iter().map(|c| c.amplitude_fraction).sum();
    assert!((sum - 1.0).abs() < 1e-12);
}

#[test]
fn surplus_component_is_consistent_with_zero() {
    let truth = [(2.8, 0.30), (15.3, 0.70)];
    let h = hist(&synthetic_delays(&truth, 0.002, 1_000_000, 4));
    let two = fit_multiexp(&h, 2, 0).unwrap();
    let three = fit_multiexp(&h, 3, 0).unwrap();
    assert_eq!(two.components.len(), 2);
    if three.components.len() == 3 {
        let weakest = three
            .components
            .iter()
            .min_by(|a, b| a.counts_in_range.total_cmp(&b.counts_in_range))
            .unwrap();
        assert!(weakest.counts_in_range < 2.0 * weakest.counts_in_range_sigma, "{three:?}");
    }
    // likelihood-ratio gain of two extra parameters below the 1% chi-square(2) value
    assert!(two.deviance - three.deviance < 9.21, "{} vs {}", two.deviance, three.deviance);
}

#[test]
fn fit_start_offset_keeps_fractions_referenced_to_t0() {
    let truth = [(2.8, 0.3), (15.3, 0.7)];
    let h = hist(&synthetic_delays(&truth, 0.0, 1_000_000, 5));
    let fit = fit_multiexp(&h, 2, 1_024).unwrap();
    assert_eq!(fit.fit_start_ps, 1_024);
    assert!((fit.components[0].amplitude_fraction - 0.3).abs() < 0.05, "{fit:?}");
}

#[test]
fn background_only_has_no_exponential_component() {
    let delays: Vec<u64> = {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        (0..200_000).map(|_| rng.random_range(0..PERIOD / RES) * RES).collect()
    };
    let h = hist(&delays);
    match fit_multiexp(&h, 1, 0) {
        Err(LifetimeError::InsufficientCounts { .. }) => {}
        // a surviving component must be negligible next to the flat floor
        Ok(fit) => {
            let floor = fit.background_level * h.full_bins() as f64;
            let comp: f64 = fit.components.iter().map(|c| c.counts_in_range).sum();
            assert!(comp < 0.01 * floor, "{fit:?}");
        }
        Err(e) => panic!("{e}"),
    }
}

fn model_deviance(fit: &MultiExpFit, h: &DecayHistogram, params: &[f64]) -> f64 {
    let n = fit.components.len();
    let w = h.bin_width_ps as f64 * 1e-3;
    let model = MultiExpModel {
        n_components: n,
        bin_width_ns: w,
    };
    let first = (fit.fit_start_ps / h.bin_width_ps) as usize;
    let mut d = 0.0;
    for i in first..h.full_bins() {
        let x = (h.bin_left_ps(i) - fit.fit_start_ps) as f64 * 1e-3;
        let f = model.eval(x, params);
        let y = h.counts[i] as f64;
        d += 2.0 * (f - y + if y > 0.0 { y * (y / f).ln() } else { 0.0 });
    }
    d
}

#[test]
fn deviance_gradient_vanishes_at_optimum() {
    let h = hist(&synthetic_delays(&[(2.8, 0.3), (15.3, 0.7)], 0.01, 500_000, 7));
    let fit = fit_multiexp(&h, 2, 0).unwrap();
    let n = fit.components.len();
    let w = h.bin_width_ps as f64 * 1e-3;
    let mut p: Vec<f64> = fit.components.iter().map(|c| c.counts_in_range).collect();
    p.extend(fit.components.iter().map(|c| c.lifetime_ns));
    p.push(fit.background_level / w);
    let d0 = model_deviance(&fit, &h, &p);
    assert!((d0 - fit.deviance).abs() < 1e-6 * d0);
    for j in 0..2 * n + 1 {
        let step = 1e-5 * p[j].abs();
        let mut up = p.clone();
        let mut dn = p.clone();
        up[j] += step;
        dn[j] -= step;
        // derivative with respect to log p_j: change per relative step
        let g = (model_deviance(&fit, &h, &up) - model_deviance(&fit, &h, &dn)) / 2e-5;
        assert!(g.abs() < 1e-6 * d0, "parameter {j}: {g} vs deviance {d0}");
    }
}

/// Poisson draws from the binned single-exponential model itself.
fn model_histogram(amp: f64, tau_ns: f64, bg_per_bin: f64, seed: u64) -> DecayHistogram {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = 0.128;
    let model = MultiExpModel {
        n_components: 1,
        bin_width_ns: w,
    };
    let bins = (PERIOD / 128) as usize;
    // peak of the model in bin 0 keeps t0 at 0
    let counts: Vec<u64> = (0..bins)
        .map(|i| {
            let mu = model.eval(i as f64 * w, &[amp, tau_ns, bg_per_bin / w]);
            Poisson::new(mu).unwrap().sample(&mut rng) as u64
        })
        .collect();
    DecayHistogram {
        bin_width_ps: 128,
        sync_period_ps: PERIOD,
        total_counts: counts.iter().sum(),
        t0_ps: 0,
        counts,
    }
}

#[test]
fn lifetime_errors_are_calibrated() {
    let mut covered = 0;
    for seed in 0..100 {
        let h = model_histogram(20_000.0, 15.3, 0.5, seed);
        let fit = fit_multiexp(&h, 1, 0).unwrap();
        let c = &fit.components[0];
        if (c.lifetime_ns - 15.3).abs() <= 2.0 * c.lifetime_sigma_ns {
            covered += 1;
        }
    }
    assert!(covered >= 95, "{covered} of 100 within 2 sigma");
}

#[test]
fn lifetime_pulls_are_standard_normal() {
    // 1000 trials: pull mean, spread and 2 sigma coverage each held to three
    // standard errors of their ideal values
    let pulls: Vec<f64> = (0..1000)
        .map(|seed| {
            let h = model_histogram(20_000.0, 15.3, 0.5, seed);
            let c = fit_multiexp(&h, 1, 0).unwrap().components[0].clone();
            (c.lifetime_ns - 15.3) / c.lifetime_sigma_ns
        })
        .collect();
    let n = pulls.len() as f64;
    let mean = pulls.iter().sum::<f64>() / n;
    let sd = (pulls.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / n).sqrt();
    let covered = pulls.iter().filter(|p| p.abs() <= 2.0).count() as f64;
    let p = 0.9545;
    assert!(mean.abs() < 3.0 / n.sqrt(), "mean pull {mean}");
    assert!((sd - 1.0).abs() < 3.0 / (2.0 * n).sqrt(), "pull sd {sd}");
    assert!((covered - p * n).abs() < 3.0 * (n * p * (1.0 - p)).sqrt(), "coverage {covered}");
}

#[test]
fn untruncated_estimate_is_the_mean_delay() {
    let delays = synthetic_delays(&[(15.3, 1.0)], 0.0, 400, 8);
    let t = bin_lifetime_estimate(&delays, 0, 1_000_000_000).unwrap();
    let se = 15.3 / (400f64).sqrt();
    assert!((t - 15.3).abs() < 3.0 * se, "{t}");
    let mean = delays.iter().sum::<u64>() as f64 / delays.len() as f64;
    assert!((t * 1e3 / mean - 1.0).abs() < 1e-3);
}

#[test]
fn truncated_estimate_inverts_the_window_formula() {
    for (tau, window) in [(15.3, 30.6), (2.8, 400.0), (56.0, 400.0), (100.0, 50.0)] {
        let m = tau - window / f64::exp_m1(window / tau);
        let est = truncated_exponential_mle(m, window);
        assert!((est / tau - 1.0).abs() < 1e-9, "{tau} {window} {est}");
    }
}

fn sim(e: EmitterParams, d: DetectorParams, duration_s: f64, seed: u64) -> photonstat_core::PhotonStream {
    simulate_stream(
        &e,
        &d,
        &SimConfig {
            duration_s,
            seed,
            ..SimConfig::default()
        },
    )
    .unwrap()
}

fn auger(k: f64) -> EmitterParams {
    EmitterParams {
        mean_excitons_per_pulse: 0.25,
        blinking_model: BlinkingModel::Telegraph {
            k_on_per_s: 0.7 * k,
            k_off_per_s: 0.3 * k,
        },
        ..EmitterParams::default()
    }
}

#[test]
fn static_emitter_flid_is_one_concentrated_mode() {
    let e = EmitterParams {
        mean_excitons_per_pulse: 0.25,
        qy_biexciton: 0.0,
        ..EmitterParams::default()
    };
    let s = sim(e, DetectorParams::default(), 20.0, 10);
    let grid = build_flid(&s, &FlidOptions::default()).unwrap();
    assert_eq!(grid.total(), grid.time_bins as u64);
    assert!(flid_lifetime_modes(&grid).is_none());
    let marginal = grid.lifetime_marginal();
    let peak = marginal.iter().enumerate().max_by_key(|(_, &v)| v).unwrap().0;
    let centers = grid.lifetime_centers_ns();
    assert!((centers[peak] - 15.3).abs() < 3.0, "peak at {} ns", centers[peak]);
    let trace = bin_intensity(&s, 0.005).unwrap();
    let mean = trace.mean();
    let im = grid.intensity_marginal();
    let ipeak = im.iter().enumerate().max_by_key(|(_, &v)| v).unwrap().0;
    let icenter = 0.5 * (grid.intensity_axis[ipeak] + grid.intensity_axis[ipeak + 1]);
    assert!((icenter - mean).abs() < 0.15 * mean, "{icenter} vs {mean}");
}

#[test]
fn flid_marginal_reproduces_intensity_histogram() {
    let s = sim(auger(30.0), DetectorParams::default(), 10.0, 11);
    let trace = bin_intensity(&s, 0.005).unwrap();
    let occ = intensity_histogram(&trace);
    let max = trace.counts.iter().copied().max().unwrap() as usize;
    let grid = build_flid(
        &s,
        &FlidOptions {
            intensity_bins: max + 1,
            intensity_max: Some((max + 1) as f64),
            ..FlidOptions::default()
        },
    )
    .unwrap();
    assert_eq!(grid.intensity_marginal(), occ.occurrences);
}

#[test]
fn auger_blinking_gives_two_correlated_flid_modes() {
    let s = sim(auger(30.0), DetectorParams::default(), 60.0, 12);
    let grid = build_flid(&s, &FlidOptions::default()).unwrap();
    let modes = flid_lifetime_modes(&grid).expect("two lifetime populations");
    let centers = grid.lifetime_centers_ns();
    assert!(centers[modes.low_mode] < 8.0 && centers[modes.high_mode] > 10.0, "{modes:?}");
    let r = intensity_lifetime_correlation(&s, 0.005).unwrap();
    assert!(r.pearson_r > 0.5, "{r:?}");
}

#[test]
fn yield_only_blinking_is_uncorrelated() {
    let e = EmitterParams {
        tau_trion_ns: 15.3,
        ..auger(30.0)
    };
    let s = sim(e, DetectorParams::default(), 60.0, 13);
    let r = intensity_lifetime_correlation(&s, 0.005).unwrap();
    assert!(r.pearson_r.abs() < 0.1, "{r:?}");
    let grid = build_flid(&s, &FlidOptions::default()).unwrap();
    assert!(flid_lifetime_modes(&grid).is_none());
}

#[test]
fn constant_poisson_stream_is_uncorrelated() {
    let e = EmitterParams {
        mean_excitons_per_pulse: 0.25,
        ..EmitterParams::default()
    };
    let s = sim(e, DetectorParams::default(), 20.0, 14);
    let r = intensity_lifetime_correlation(&s, 0.005).unwrap();
    assert!(r.pearson_r.abs() < 0.1, "{r:?}");
}

#[test]
fn background_stream_falls_in_unresolved_row() {
    let e = EmitterParams {
        mean_excitons_per_pulse: 0.0,
        ..EmitterParams::default()
    };
    let d = DetectorParams {
        dark_rate_hz: 100.0,
        ..DetectorParams::default()
    };
    let s = sim(e, d, 20.0, 15);
    let grid = build_flid(&s, &FlidOptions::default()).unwrap();
    let unresolved: u64 = grid.unresolved.iter().sum();
    assert!(unresolved as f64 > 0.99 * grid.time_bins as f64, "{unresolved} of {}", grid.time_bins);
    assert!(matches!(
        intensity_lifetime_correlation(&s, 0.005),
        Err(LifetimeError::InsufficientBins { .. })
    ));
}

#[test]
fn decay_histogram_of_stream() {
    let s = sim(EmitterParams::default(), DetectorParams::default(), 1.0, 16);
    let h = decay_histogram(&s, 64).unwrap();
    assert_eq!(h.total_counts, s.len() as u64);
    // the mode sits on the flat top of the decay, within a few bins of the rise
    assert!(h.t0_ps < 3_000, "t0 {}", h.t0_ps);
    assert!(matches!(decay_histogram(&s, 8), Err(LifetimeError::InvalidArgument(_))));
    let trace = lifetime_trace(&s, 0.005).unwrap();
    assert_eq!(trace.counts.len(), 200);
}

#[test]
fn jitter_broadens_the_rising_edge() {
    let e = EmitterParams {
        mean_excitons_per_pulse: 0.25,
        qy_biexciton: 0.0,
        ..EmitterParams::default()
    };
    let d = DetectorParams {
        jitter_sigma_ps: 200.0,
        ..DetectorParams::default()
    };
    let s = sim(e, d, 4.0, 17);
    let res = 16.0;
    let period = 400_000.0;
    // signed delays around the prompt: wrapped negatives come back below zero
    let delays: Vec<f64> = s
        .records
        .iter()
        .map(|r| {
            let t = f64::from(r.microtime) * res + res / 2.0;
            if t > period / 2.0 {
                t - period
            } else {
                t
            }
        })
        .collect();
    // exponentially modified Gaussian CDF at zero
    let tau: f64 = 15_300.0;
    let sigma: f64 = 200.0;
    let frac_neg = delays.iter().filter(|&&t| t < 0.0).count() as f64 / delays.len() as f64;
    let phi = |x: f64| 0.5 * erfc(-x / std::f64::consts::SQRT_2);
    let expected = phi(0.0) - (sigma * sigma / (2.0 * tau * tau)).exp() * phi(-sigma / tau);
    let n = delays.len() as f64;
    let se = (expected * (1.0 - expected) / n).sqrt();
    assert!((frac_neg - expected).abs() < 4.0 * se + 1e-4, "{frac_neg} vs {expected}");
}

/// Complementary error function (Numerical Recipes rational approximation,
/// relative error < 1.2e-7).
fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let r = t * (-z * z - 1.265_512_23
        + t * (1.000_023_68
            + t * (0.374_091_96
                + t * (0.096_784_18
                    + t * (-0.186_288_06
                        + t * (0.278_868_07
                            + t * (-1.135_203_98 + t * (1.488_515_87 + t * (-0.822_152_23 + t * 0.170_872_77)))))))))
        .exp();
    if x >= 0.0 {
        r
    } else {
        2.0 - r
    }
}
