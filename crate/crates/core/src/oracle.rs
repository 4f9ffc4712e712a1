//! Brute-force reference implementations.

use crate::correlation::{count_pairs_sliding, finish_g2, CorrelationError, G2Histogram, G2Options, LagGeometry};
use crate::stream::{channel_times_ps, PhotonStream};

/// All-pairs coincidence counts: every channel-0/channel-1 pair is visited,
/// in `O(N0 * N1)`. Returns the lag histogram and the peak areas.
pub fn g2_all_pairs_counts(stream: &PhotonStream, opts: &G2Options) -> (Vec<u64>, Vec<u64>) {
    let a = channel_times_ps(stream, 0);
    let b = channel_times_ps(stream, 1);
    let geo = LagGeometry::new(stream.sync_period_ps(), opts);
    let mut counts = vec![0u64; 2 * geo.half_bins + 1];
    let mut areas = vec![0u64; 2 * geo.n_side as usize + 1];
    for &t0 in &a {
        for &t1 in &b {
            let lag = t1 as i64 - t0 as i64;
            if lag.unsigned_abs() <= geo.max_lag {
                geo.record(lag, &mut counts, &mut areas);
            }
        }
    }
    (counts, areas)
}

/// [`crate::correlation::g2_pulsed`] computed from [`g2_all_pairs_counts`].
pub fn g2_pulsed_brute_force(stream: &PhotonStream, opts: &G2Options) -> Result<G2Histogram, CorrelationError> {
    let (counts, areas) = g2_all_pairs_counts(stream, opts);
    let geo = LagGeometry::new(stream.sync_period_ps(), opts);
    let total_rate = stream.len() as f64 / stream.span_s().max(f64::MIN_POSITIVE);
    finish_g2(stream.sync_period_ps(), opts, geo, counts, areas, total_rate)
}

/// Sliding-window counts, exposed for direct comparison with the oracle.
pub fn g2_sliding_counts(stream: &PhotonStream, opts: &G2Options) -> (Vec<u64>, Vec<u64>) {
    let a = channel_times_ps(stream, 0);
    let b = channel_times_ps(stream, 1);
    count_pairs_sliding(&a, &b, &LagGeometry::new(stream.sync_period_ps(), opts))
}

/// Pair count for pulse separations in `[lo, hi]`, both orders, by double loop.
pub fn separation_pairs_brute_force(a: &[u64], b: &[u64], lo: u64, hi: u64) -> u64 {
    let mut n = 0;
    for &x in a {
        for &y in b {
            let d = x.abs_diff(y);
            if (lo..=hi).contains(&d) {
                n += 1;
            }
        }
    }
    n
}
