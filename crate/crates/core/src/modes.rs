//! Two-mode detection on 1-D occurrence histograms.

/// Two dominant modes of a histogram and the valley separating them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bimodal {
    pub low_mode: usize,
    pub high_mode: usize,
    /// Index of the smallest smoothed occurrence strictly between the modes,
    /// lowest index on ties.
    pub valley: usize,
}

/// Secondary mode must reach this fraction of the main mode.
const MIN_RELATIVE_HEIGHT: f64 = 0.05;
/// Valley must dip below this fraction of the smaller mode.
const MAX_VALLEY_RATIO: f64 = 0.7;

/// Gaussian smoothing with the kernel renormalized at the edges.
pub fn smooth(values: &[f64], sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 || values.is_empty() {
        return values.to_vec();
    }
    let reach = (4.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-reach..=reach)
        .map(|d| (-0.5 * (d as f64 / sigma).powi(2)).exp())
        .collect();
    let n = values.len() as isize;
    (0..n)
        .map(|i| {
            let mut acc = 0.0;
            let mut norm = 0.0;
            for (k, w) in kernel.iter().enumerate() {
                let j = i + k as isize - reach;
                if (0..n).contains(&j) {
                    acc += w * values[j as usize];
                    norm += w;
                }
            }
            acc / norm
        })
        .collect()
}

fn local_maxima(s: &[f64]) -> Vec<usize> {
    let n = s.len();
    (0..n)
        .filter(|&i| {
            let left_ok = i == 0 || s[i] > s[i - 1];
            // plateaus report their first index
            let right_ok = i + 1 == n || s[i] >= s[i + 1];
            left_ok && right_ok && s[i] > 0.0
        })
        .collect()
}

/// Finds the most prominent pair of modes after smoothing by `sigma` bins.
pub fn find_bimodal(values: &[f64], sigma: f64) -> Option<Bimodal> {
    let s = smooth(values, sigma);
    let maxima = local_maxima(&s);
    let &main = maxima
        .iter()
        .max_by(|&&a, &&b| s[a].total_cmp(&s[b]).then(b.cmp(&a)))?;

    let mut best: Option<(f64, Bimodal)> = None;
    for &m in &maxima {
        if m == main || s[m] < MIN_RELATIVE_HEIGHT * s[main] {
            continue;
        }
        let (lo, hi) = if m < main { (m, main) } else { (main, m) };
        if hi - lo < 2 {
            continue;
        }
        let mut valley = lo + 1;
        for i in lo + 1..hi {
            if s[i] < s[valley] {
                valley = i;
            }
        }
        let smaller = s[m].min(s[main]);
        if s[valley] > MAX_VALLEY_RATIO * smaller {
            continue;
        }
        let prominence = smaller - s[valley];
        if best.as_ref().is_none_or(|(p, _)| prominence > *p) {
            best = Some((
                prominence,
                Bimodal {
                    low_mode: lo,
                    high_mode: hi,
                    valley,
                },
            ));
        }
    }
    best.map(|(_, b)| b)
}
