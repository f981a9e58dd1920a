//! BCS gap as a function of reduced temperature `t = T/T_c`.
//!
//! The weak-coupling gap equation in the form
//! `ln(1/δ) = 2 ∫₀^∞ f(Δ cosh u) du`, with `δ = Δ/Δ₀` and `f` the Fermi
//! function, is solved by bisection. A 512-point table in `s = √(1 - t)` with
//! monotone cubic interpolation serves the hot path.

use std::sync::OnceLock;

use crate::constants::BCS_GAP_RATIO;
use crate::quad::integrate;

const GRID_POINTS: usize = 512;

/// Right-hand side integral for reduced gap `delta` at reduced temperature `t`.
fn thermal_integral(delta: f64, t: f64) -> f64 {
    // Argument of the Fermi function in units of k_B T.
    let x0 = delta * BCS_GAP_RATIO / t;
    let cutoff = 50.0 / x0;
    if cutoff <= 1.0 {
        return 0.0;
    }
    let u_max = cutoff.acosh();
    integrate(|u| 1.0 / ((x0 * u.cosh()).exp() + 1.0), 0.0, u_max, 1e-16, 1e-14, 400).value
}

/// Solves the gap equation directly. Returns `Δ(T)/Δ₀`.
pub fn reduced_gap_exact(t: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    if t >= 1.0 {
        return 0.0;
    }
    let g = |d: f64| (1.0 / d).ln() - 2.0 * thermal_integral(d, t);
    if g(1.0) >= 0.0 {
        return 1.0;
    }
    let (mut lo, mut hi) = (1e-14, 1.0);
    while hi - lo > 1e-15 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

struct GapTable {
    s: Vec<f64>,
    delta: Vec<f64>,
    slope: Vec<f64>,
}

/// Fritsch-Carlson slopes for a monotone piecewise cubic Hermite interpolant.
fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let d: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
    let mut m = vec![0.0; n];
    for k in 1..n - 1 {
        if d[k - 1] * d[k] > 0.0 {
            let w1 = 2.0 * h[k] + h[k - 1];
            let w2 = h[k] + 2.0 * h[k - 1];
            m[k] = (w1 + w2) / (w1 / d[k - 1] + w2 / d[k]);
        }
    }
    let end = |h0: f64, h1: f64, d0: f64, d1: f64| {
        let v = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
        if v * d0 <= 0.0 {
            0.0
        } else if d0 * d1 <= 0.0 && v.abs() > 3.0 * d0.abs() {
            3.0 * d0
        } else {
            v
        }
    };
    m[0] = end(h[0], h[1], d[0], d[1]);
    m[n - 1] = end(h[n - 2], h[n - 3], d[n - 2], d[n - 3]);
    m
}

fn table() -> &'static GapTable {
    static TABLE: OnceLock<GapTable> = OnceLock::new();
    TABLE.get_or_init(|| {
        let s: Vec<f64> = (0..GRID_POINTS).map(|k| k as f64 / (GRID_POINTS - 1) as f64).collect();
        let delta: Vec<f64> = s.iter().map(|&s| reduced_gap_exact(1.0 - s * s)).collect();
        let slope = pchip_slopes(&s, &delta);
        GapTable { s, delta, slope }
    })
}

/// Tabulated `Δ(T)/Δ₀`; monotone nonincreasing in `t`, exact at `t = 0` and `t = 1`.
pub fn reduced_gap(t: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    if t >= 1.0 {
        return 0.0;
    }
    let tab = table();
    let s = (1.0 - t).sqrt();
    let step = 1.0 / (GRID_POINTS - 1) as f64;
    let k = ((s / step) as usize).min(GRID_POINTS - 2);
    let (x0, x1) = (tab.s[k], tab.s[k + 1]);
    let h = x1 - x0;
    let u = (s - x0) / h;
    let (y0, y1, m0, m1) = (tab.delta[k], tab.delta[k + 1], tab.slope[k], tab.slope[k + 1]);
    let u2 = u * u;
    let u3 = u2 * u;
    let v = (2.0 * u3 - 3.0 * u2 + 1.0) * y0
        + (u3 - 2.0 * u2 + u) * h * m0
        + (-2.0 * u3 + 3.0 * u2) * y1
        + (u3 - u2) * h * m1;
    v.clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundaries() {
        assert!((reduced_gap(0.0) - 1.0).abs() < 1e-12);
        assert_eq!(reduced_gap(1.0), 0.0);
        assert!((reduced_gap_exact(0.05) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn table_matches_direct_solution() {
        for &t in &[0.11, 0.37, 0.5, 0.73, 0.9, 0.995] {
            let a = reduced_gap(t);
            let b = reduced_gap_exact(t);
            assert!((a - b).abs() < 1e-6, "t={t}: {a} vs {b}");
        }
    }

    #[test]
    fn near_tc_square_root_law() {
        // δ ≈ 1.7367 √(1 - t) close to T_c.
        let t: f64 = 0.9999;
        let d = reduced_gap_exact(t);
        assert!((d / (1.0 - t).sqrt() - 1.7367).abs() < 2e-3, "{d}");
    }
}
