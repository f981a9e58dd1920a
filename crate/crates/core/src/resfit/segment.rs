//! Dip detection on |S21| for multi-resonance traces.

use crate::model::ComplexTrace;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dip {
    /// Sample index of the |S21| minimum.
    pub index: usize,
    pub freq: f64,
    /// Topographic prominence of the dip, dB.
    pub prominence_db: f64,
    /// Full width at half depth (in power), Hz.
    pub linewidth: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct SegmentOptions {
    pub prominence_db: f64,
    /// Minimum separation between accepted dips, in linewidths.
    pub min_separation: f64,
    /// Half-width of each extracted window, in linewidths.
    pub window_half_width: f64,
}

impl Default for SegmentOptions {
    fn default() -> Self {
        Self {
            prominence_db: 3.0,
            min_separation: 20.0,
            window_half_width: 10.0,
        }
    }
}

fn smoothed_db(trace: &ComplexTrace) -> Vec<f64> {
    let db: Vec<f64> = trace.s21.iter().map(|z| 10.0 * z.norm_sqr().max(1e-300).log10()).collect();
    let n = db.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(2);
            let hi = (i + 3).min(n);
            db[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

/// Full width at half depth around `index`, with `base_db` the local baseline.
fn half_depth_width(trace: &ComplexTrace, db: &[f64], index: usize, base_db: f64) -> Option<f64> {
    let base = 10f64.powf(base_db / 10.0);
    let bottom = 10f64.powf(db[index] / 10.0);
    let half = 10.0 * (0.5 * (base + bottom)).log10();
    let cross = |range: &mut dyn Iterator<Item = usize>| -> Option<f64> {
        let mut prev = index;
        for i in range {
            if db[i] >= half {
                let (a, b) = (db[prev], db[i]);
                let t = if b != a { (half - a) / (b - a) } else { 0.5 };
                return Some(trace.freqs[prev] + t * (trace.freqs[i] - trace.freqs[prev]));
            }
            prev = i;
        }
        None
    };
    let left = cross(&mut (0..index).rev())?;
    let right = cross(&mut (index + 1..db.len()))?;
    Some(right - left)
}

/// Finds resonance dips ordered by frequency.
pub fn find_dips(trace: &ComplexTrace, opts: &SegmentOptions) -> Vec<Dip> {
    let db = smoothed_db(trace);
    let n = db.len();
    if n < 3 {
        return Vec::new();
    }
    let mut candidates = Vec::new();
    for i in 0..n {
        let left_ok = i == 0 || db[i] < db[i - 1];
        let right_ok = i + 1 == n || db[i] <= db[i + 1];
        if !(left_ok && right_ok) {
            continue;
        }
        // Highest point on each side before reaching a deeper sample.
        let mut left_max = f64::NEG_INFINITY;
        let mut j = i;
        while j > 0 {
            j -= 1;
            if db[j] < db[i] {
                break;
            }
            left_max = left_max.max(db[j]);
        }
        let mut right_max = f64::NEG_INFINITY;
        for &v in &db[i + 1..] {
            if v < db[i] {
                break;
            }
            right_max = right_max.max(v);
        }
        let base = left_max.min(right_max);
        let prominence = base - db[i];
        if prominence.is_finite() && prominence >= opts.prominence_db {
            if let Some(width) = half_depth_width(trace, &db, i, base) {
                candidates.push(Dip {
                    index: i,
                    freq: trace.freqs[i],
                    prominence_db: prominence,
                    linewidth: width,
                });
            }
        }
    }
    candidates.sort_by(|a, b| b.prominence_db.total_cmp(&a.prominence_db));
    let mut accepted: Vec<Dip> = Vec::new();
    for c in candidates {
        let clear = accepted.iter().all(|a| {
            let lw = a.linewidth.max(c.linewidth);
            (a.freq - c.freq).abs() >= opts.min_separation * lw
        });
        if clear {
            accepted.push(c);
        }
    }
    accepted.sort_by(|a, b| a.freq.total_cmp(&b.freq));
    accepted
}

/// Index range around `dips[k]`: ± `window_half_width` linewidths, clipped halfway to neighbours.
pub fn dip_window(trace: &ComplexTrace, dips: &[Dip], k: usize, opts: &SegmentOptions) -> std::ops::Range<usize> {
    let d = dips[k];
    let mut lo_f = d.freq - opts.window_half_width * d.linewidth;
    let mut hi_f = d.freq + opts.window_half_width * d.linewidth;
    if k > 0 {
        lo_f = lo_f.max(0.5 * (dips[k - 1].freq + d.freq));
    }
    if k + 1 < dips.len() {
        hi_f = hi_f.min(0.5 * (dips[k + 1].freq + d.freq));
    }
    let lo = trace.freqs.partition_point(|&f| f < lo_f);
    let hi = trace.freqs.partition_point(|&f| f <= hi_f);
    lo..hi
}

/// Splits a multi-resonance trace into one sub-trace per detected dip.
pub fn split_dips(trace: &ComplexTrace, opts: &SegmentOptions) -> Vec<(Dip, ComplexTrace)> {
    let dips = find_dips(trace, opts);
    (0..dips.len())
        .map(|k| (dips[k], trace.slice(dip_window(trace, &dips, k, opts))))
        .collect()
}
