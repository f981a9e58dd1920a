//! Kinetic-inductance nonlinearity: bifurcating notch response, per-trace
//! fitting of the nonlinearity strength `a`, the `a ∝ P_d` regression giving
//! the energy scale `E*`, and the conversion to a current-density scale `J*`.
//!
//! The effective reduced detuning `y` solves `y = y0 + a/(1 + 4y²)`, with
//! `y0 = Q_l (f − f_r)/f_r` the generator detuning.

use log::warn;
use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lsq::{LevenbergMarquardt, Problem};
use crate::model::{notch_response, ComplexTrace, ResonatorParams};

/// Bifurcation threshold `4√3/9`.
pub const A_CRIT: f64 = 0.769_800_358_919_501;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepDirection {
    Up,
    Down,
}

/// Sorted real roots of `4y³ − 4y0 y² + y − (y0 + a) = 0`.
pub fn nl_detuning_roots(y0: f64, a: f64) -> Vec<f64> {
    if a == 0.0 {
        return vec![y0];
    }
    // Monic form y³ + b y² + c y + d.
    let b = -y0;
    let c = 0.25;
    let d = -0.25 * (y0 + a);
    let shift = -b / 3.0;
    let p = c - b * b / 3.0;
    let q = 2.0 * b * b * b / 27.0 - b * c / 3.0 + d;
    let disc = -(4.0 * p * p * p + 27.0 * q * q);
    let mut roots: Vec<f64> = if disc > 0.0 {
        let m = 2.0 * (-p / 3.0).sqrt();
        let arg = (3.0 * q / (p * m)).clamp(-1.0, 1.0);
        let theta = arg.acos() / 3.0;
        (0..3)
            .map(|k| m * (theta - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos() + shift)
            .collect()
    } else {
        let s = (q * q / 4.0 + p * p * p / 27.0).max(0.0).sqrt();
        vec![(-q / 2.0 + s).cbrt() + (-q / 2.0 - s).cbrt() + shift]
    };
    for y in roots.iter_mut() {
        for _ in 0..3 {
            let f = ((4.0 * *y - 4.0 * y0) * *y + 1.0) * *y - (y0 + a);
            let df = (12.0 * *y - 8.0 * y0) * *y + 1.0;
            if df == 0.0 {
                break;
            }
            let step = f / df;
            if !step.is_finite() {
                break;
            }
            *y -= step;
        }
    }
    roots.sort_by(|x, y| x.total_cmp(y));
    roots
}

/// Generator detunings `(low, high)` bounding the bistable window, or `None` for `a ≤ a_crit`.
pub fn bistable_window(a: f64) -> Option<(f64, f64)> {
    if a <= A_CRIT {
        return None;
    }
    // Folds where dy0/dy = 0, i.e. (1 + 4y²)² + 8ay = 0 for y < 0.
    let g = |y: f64| (1.0 + 4.0 * y * y).powi(2) + 8.0 * a * y;
    let y_mid = -1.0 / (2.0 * 3f64.sqrt());
    let bisect = |mut lo: f64, mut hi: f64| {
        let rising = g(hi) > g(lo);
        for _ in 0..200 {
            let m = 0.5 * (lo + hi);
            if (g(m) > 0.0) == rising {
                hi = m;
            } else {
                lo = m;
            }
        }
        0.5 * (lo + hi)
    };
    let y1 = bisect(-(a + 1.0), y_mid);
    let y2 = bisect(y_mid, 0.0);
    let y0_of = |y: f64| y - a / (1.0 + 4.0 * y * y);
    let (u, v) = (y0_of(y1), y0_of(y2));
    Some((u.min(v), u.max(v)))
}

/// Effective detuning on the branch selected by the sweep direction.
pub fn tracked_detuning(y0: f64, a: f64, dir: SweepDirection, window: Option<(f64, f64)>) -> f64 {
    if a == 0.0 {
        return y0;
    }
    let roots = nl_detuning_roots(y0, a);
    let (lo, hi) = (roots[0], roots[roots.len() - 1]);
    // Up-sweeps stay on the branch connected to y0 → −∞ until its upper fold; down-sweeps mirror that.
    match (dir, window) {
        (SweepDirection::Up, Some((_, w_hi))) => if y0 < w_hi { lo } else { hi },
        (SweepDirection::Down, Some((w_lo, _))) => if y0 > w_lo { hi } else { lo },
        (SweepDirection::Up, None) => lo,
        (SweepDirection::Down, None) => hi,
    }
}

/// Forward trace with the index of the first sample past the jump (if any).
#[derive(Debug, Clone, PartialEq)]
pub struct NonlinearTrace {
    pub s21: Vec<Complex64>,
    pub jump_index: Option<usize>,
}

/// Samples the nonlinear notch response along a sweep.
///
/// `freqs` must be ascending; for `Down` the branch logic follows a
/// high-to-low sweep while the output stays in ascending frequency order.
pub fn s21_nonlinear_detailed(freqs: &[f64], p: &ResonatorParams, a: f64, dir: SweepDirection) -> Result<NonlinearTrace> {
    p.validate()?;
    if !(a >= 0.0 && a.is_finite()) {
        return Err(invalid("a", format!("must be >= 0, got {a}")));
    }
    let window = bistable_window(a);
    let diameter = p.circle_diameter();
    let y0s: Vec<f64> = freqs.iter().map(|&f| p.reduced_detuning(f)).collect();
    let s21 = freqs
        .iter()
        .zip(&y0s)
        .map(|(&f, &y0)| {
            let y = tracked_detuning(y0, a, dir, window);
            p.environment(f) * notch_response(y, diameter, p.phi)
        })
        .collect();
    let jump_index = window.and_then(|(w_lo, w_hi)| match dir {
        SweepDirection::Up => (1..y0s.len()).find(|&i| y0s[i - 1] < w_hi && y0s[i] >= w_hi),
        SweepDirection::Down => (1..y0s.len()).find(|&i| y0s[i - 1] <= w_lo && y0s[i] > w_lo),
    });
    Ok(NonlinearTrace { s21, jump_index })
}

pub fn s21_nonlinear(freqs: &[f64], p: &ResonatorParams, a: f64, dir: SweepDirection) -> Result<Vec<Complex64>> {
    Ok(s21_nonlinear_detailed(freqs, p, a, dir)?.s21)
}

/// `a = 2 Q_l³ P_d / (Q_c f_r E*)`.
pub fn a_from_power(p: &ResonatorParams, power_w: f64, e_star: f64) -> f64 {
    let q_l = p.q_l();
    2.0 * q_l.powi(3) * power_w / (p.q_c() * p.f_r * e_star)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonlinearTraceFit {
    pub a_param: f64,
    pub sigma_a: f64,
    /// Low-power reference with the fitted frequency drift and amplitude applied.
    pub params: ResonatorParams,
    pub power_w: Option<f64>,
    pub branch: SweepDirection,
    pub rms_residual: f64,
    pub converged: bool,
    /// The estimate was below 3σ and has been reported as `a = 0`.
    pub linear: bool,
    pub label: String,
}

struct NlProblem<'a> {
    trace: &'a ComplexTrace,
    reference: ResonatorParams,
    dir: SweepDirection,
    mask: Vec<bool>,
}

impl NlProblem<'_> {
    /// `x = [a, δf_r/f_r · 1e6, amp, α]`.
    fn params(&self, x: &DVector<f64>) -> ResonatorParams {
        ResonatorParams {
            f_r: self.reference.f_r * (1.0 + 1e-6 * x[1]),
            amp: x[2],
            alpha: x[3],
            ..self.reference
        }
    }
}

impl Problem for NlProblem<'_> {
    fn residuals(&self, x: &DVector<f64>) -> DVector<f64> {
        let n = self.trace.len();
        let p = self.params(x);
        let mut r = DVector::zeros(2 * n);
        let Ok(model) = s21_nonlinear(&self.trace.freqs, &p, x[0].max(0.0), self.dir) else {
            return DVector::from_element(2 * n, 1e10);
        };
        for i in 0..n {
            if self.mask[i] {
                let d = model[i] - self.trace.s21[i];
                r[i] = d.re;
                r[n + i] = d.im;
            }
        }
        if x[0] < 0.0 {
            r.iter_mut().for_each(|v| *v += x[0].abs() * 1e3);
        }
        r
    }

    fn fd_step(&self, x: &DVector<f64>, j: usize) -> f64 {
        match j {
            0 => 1e-5 * x[0].abs().max(1e-2),
            1 => 1e-4,
            _ => 1e-7 * x[j].abs().max(1e-3),
        }
    }
}

/// Index after the largest step in the data, if it stands out as a discontinuity.
fn detect_jump(z: &[Complex64]) -> Option<usize> {
    let steps: Vec<f64> = z.windows(2).map(|w| (w[1] - w[0]).norm()).collect();
    let mut sorted = steps.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let median = sorted[sorted.len() / 2];
    let (imax, &smax) = steps.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1))?;
    (smax > 20.0 * median).then_some(imax + 1)
}

/// Bins excluded on each side of a detected discontinuity.
pub const JUMP_GUARD_BINS: usize = 3;

/// Fits the nonlinearity strength with the quality factors frozen at `reference`.
///
/// Floats `a`, a small resonance drift and the complex amplitude.
pub fn fit_nonlinear_trace(trace: &ComplexTrace, reference: &ResonatorParams, dir: SweepDirection) -> Result<NonlinearTraceFit> {
    trace.validate()?;
    trace.require_fit_points()?;
    reference.validate()?;
    let n = trace.len();
    let mut mask = vec![true; n];
    if let Some(j) = detect_jump(&trace.s21) {
        let lo = j.saturating_sub(JUMP_GUARD_BINS);
        let hi = (j + JUMP_GUARD_BINS).min(n);
        mask[lo..hi].iter_mut().for_each(|m| *m = false);
    }
    let problem = NlProblem {
        trace,
        reference: *reference,
        dir,
        mask,
    };

    // Grid over (a, drift) with the complex amplitude solved linearly.
    let mut best = (f64::INFINITY, [0.0, 0.0, reference.amp, reference.alpha]);
    let lw_ppm = 1e6 / reference.q_l();
    for ia in 0..=100 {
        let a = 0.05 * ia as f64;
        for id in -4..=4 {
            let drift = 0.25 * id as f64 * lw_ppm;
            let mut x = DVector::from_row_slice(&[a, drift, 1.0, 0.0]);
            let base = problem.params(&x);
            let unit = ResonatorParams { amp: 1.0, alpha: 0.0, ..base };
            let Ok(m) = s21_nonlinear(&trace.freqs, &unit, a, dir) else { continue };
            let (mut num, mut den) = (Complex64::new(0.0, 0.0), 0.0);
            for i in (0..n).filter(|&i| problem.mask[i]) {
                num += m[i].conj() * trace.s21[i];
                den += m[i].norm_sqr();
            }
            let c = num / den;
            x[2] = c.norm();
            x[3] = c.arg();
            let cost = problem.residuals(&x).norm_squared();
            if cost < best.0 {
                best = (cost, [x[0], x[1], x[2], x[3]]);
            }
        }
    }
    let sol = LevenbergMarquardt::default().minimize(&problem, DVector::from_row_slice(&best.1));
    let n_used = problem.mask.iter().filter(|m| **m).count();
    let a = sol.x[0].max(0.0);
    let sigma_a = sol.sigma(0);
    let linear = !(a > 3.0 * sigma_a);
    let params = problem.params(&sol.x);
    Ok(NonlinearTraceFit {
        a_param: if linear { 0.0 } else { a },
        sigma_a,
        params,
        power_w: trace.power_watts(),
        branch: dir,
        rms_residual: (sol.cost / (2 * n_used) as f64).sqrt() / params.amp,
        converged: sol.converged,
        linear,
        label: trace.label.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    /// Inductor cross-section, m².
    pub area_m2: f64,
    /// Inductor length, m.
    pub length_m: f64,
}

impl Geometry {
    /// `C_geom = 2 · area · length`.
    pub fn c_geom(&self) -> f64 {
        2.0 * self.area_m2 * self.length_m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonlinearScale {
    /// J.
    pub e_star: f64,
    pub sigma_e_star: f64,
    /// Slope of `a` versus `P_d`, 1/W.
    pub slope: f64,
    pub sigma_slope: f64,
    /// A/cm²; filled by [`NonlinearScale::with_j_star`].
    pub j_star: Option<f64>,
    pub sigma_j_star: Option<f64>,
    pub geometry: Option<Geometry>,
    /// H/sq.
    pub l_k: Option<f64>,
    pub alpha_k: Option<f64>,
    pub n_powers: usize,
    /// Present when a quadratic term in `P_d` is significant beyond 3σ.
    pub model_violation: Option<String>,
}

/// Zero-intercept weighted regression of `a` on `P_d` and `E* = 2Q_l³/(Q_c f_r · slope)`.
pub fn fit_a_vs_power(fits: &[NonlinearTraceFit], reference: &ResonatorParams) -> Result<NonlinearScale> {
    let pts: Vec<(f64, f64, f64)> = fits
        .iter()
        .filter(|f| !f.linear)
        .map(|f| {
            let p = f.power_w.ok_or_else(|| invalid("power_w", "every fit needs a drive power"))?;
            Ok((p, f.a_param, f.sigma_a))
        })
        .collect::<Result<_>>()?;
    a_vs_power_points(&pts, reference)
}

/// Same as [`fit_a_vs_power`] on raw `(P_d [W], a, σ_a)` triples.
pub fn a_vs_power_points(pts: &[(f64, f64, f64)], reference: &ResonatorParams) -> Result<NonlinearScale> {
    if pts.len() < 4 {
        return Err(Error::InsufficientSpan(format!(
            "{} nonlinear powers; at least 4 required",
            pts.len()
        )));
    }
    let w = |s: f64| if s > 0.0 && s.is_finite() { 1.0 / (s * s) } else { 1.0 };
    let all_weighted = pts.iter().all(|&(_, _, s)| s > 0.0 && s.is_finite());
    let weight = |s: f64| if all_weighted { w(s) } else { 1.0 };
    let sxx: f64 = pts.iter().map(|&(p, _, s)| weight(s) * p * p).sum();
    let sxy: f64 = pts.iter().map(|&(p, a, s)| weight(s) * p * a).sum();
    let slope = sxy / sxx;
    if !(slope > 0.0) {
        return Err(Error::Degenerate(format!("non-positive a-vs-power slope {slope:.4e}")));
    }
    let chi2: f64 = pts.iter().map(|&(p, a, s)| weight(s) * (a - slope * p).powi(2)).sum();
    let dof = (pts.len() - 1) as f64;
    let scale = if all_weighted { (chi2 / dof).max(1.0) } else { chi2 / dof };
    let sigma_slope = (scale / sxx).sqrt();

    // Curvature check: a = s P + c P².
    let (mut s22, mut s23, mut s33, mut s2y, mut s3y) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(p, a, s) in pts {
        let wt = weight(s);
        s22 += wt * p * p;
        s23 += wt * p.powi(3);
        s33 += wt * p.powi(4);
        s2y += wt * p * a;
        s3y += wt * p * p * a;
    }
    let det = s22 * s33 - s23 * s23;
    let mut model_violation = None;
    if det > 0.0 && pts.len() > 2 {
        let c = (s22 * s3y - s23 * s2y) / det;
        let s = (s33 * s2y - s23 * s3y) / det;
        let chi2q: f64 = pts.iter().map(|&(p, a, sg)| weight(sg) * (a - s * p - c * p * p).powi(2)).sum();
        let scale_q = if all_weighted {
            (chi2q / (pts.len() as f64 - 2.0)).max(1.0)
        } else {
            chi2q / (pts.len() as f64 - 2.0)
        };
        let sigma_c = (scale_q * s22 / det).sqrt();
        if sigma_c > 0.0 && c.abs() > 3.0 * sigma_c {
            let msg = format!("a versus P_d curvature {c:.3e} exceeds 3σ ({sigma_c:.3e})");
            warn!("{msg}");
            model_violation = Some(msg);
        }
    }

    let q_l = reference.q_l();
    let e_star = 2.0 * q_l.powi(3) / (reference.q_c() * reference.f_r * slope);
    Ok(NonlinearScale {
        e_star,
        sigma_e_star: e_star * sigma_slope / slope,
        slope,
        sigma_slope,
        j_star: None,
        sigma_j_star: None,
        geometry: None,
        l_k: None,
        alpha_k: None,
        n_powers: pts.len(),
        model_violation,
    })
}

/// `J* = √(E* α_k C_geom / L_k)`, converted from A/m² to A/cm², times a calibration factor.
pub fn j_star_from_e_star(e_star: f64, l_k: f64, alpha_k: f64, geometry: Option<&Geometry>, calibration: f64) -> Result<f64> {
    let g = geometry.ok_or_else(|| {
        Error::Config("J* needs an explicit inductor geometry (cross-section area and length)".into())
    })?;
    for (name, v) in [
        ("e_star", e_star),
        ("l_k", l_k),
        ("alpha_k", alpha_k),
        ("area_m2", g.area_m2),
        ("length_m", g.length_m),
        ("calibration", calibration),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(invalid(name, format!("must be > 0, got {v}")));
        }
    }
    Ok(calibration * (e_star * alpha_k * g.c_geom() / l_k).sqrt() * 1e-4)
}

/// Calibration factor that maps a reference `(E*, L_k, α_k)` onto a known `J*`.
pub fn calibrate_j_star(e_star: f64, l_k: f64, alpha_k: f64, geometry: &Geometry, j_star_ref: f64) -> Result<f64> {
    let raw = j_star_from_e_star(e_star, l_k, alpha_k, Some(geometry), 1.0)?;
    Ok(j_star_ref / raw)
}

impl NonlinearScale {
    /// Attaches `J*` for the given material constants and geometry.
    pub fn with_j_star(mut self, l_k: f64, alpha_k: f64, geometry: Option<&Geometry>, calibration: f64) -> Result<Self> {
        let j = j_star_from_e_star(self.e_star, l_k, alpha_k, geometry, calibration)?;
        self.j_star = Some(j);
        self.sigma_j_star = Some(0.5 * j * self.sigma_e_star / self.e_star);
        self.geometry = geometry.copied();
        self.l_k = Some(l_k);
        self.alpha_k = Some(alpha_k);
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn a_crit_value() {
        assert!((A_CRIT - 4.0 * 3f64.sqrt() / 9.0).abs() < 1e-15);
    }

    #[test]
    fn roots_satisfy_cubic() {
        for &(y0, a) in &[(0.0, 2.0), (-1.0, 1.5), (3.0, 0.2), (-0.5, 0.7)] {
            for y in nl_detuning_roots(y0, a) {
                let r = y - y0 - a / (1.0 + 4.0 * y * y);
                assert!(r.abs() < 1e-12, "y0={y0} a={a} y={y} r={r}");
            }
        }
        assert_eq!(nl_detuning_roots(-1.5, 2.0).len(), 3);
        assert_eq!(nl_detuning_roots(0.3, 0.0), vec![0.3]);
    }

    #[test]
    fn window_edges_are_folds() {
        let (lo, hi) = bistable_window(1.5).unwrap();
        assert_eq!(nl_detuning_roots(0.5 * (lo + hi), 1.5).len(), 3);
        assert_eq!(nl_detuning_roots(lo - 1e-3, 1.5).len(), 1);
        assert_eq!(nl_detuning_roots(hi + 1e-3, 1.5).len(), 1);
        assert!(bistable_window(0.76).is_none());
    }

    #[test]
    fn missing_geometry_is_config_error() {
        assert!(matches!(j_star_from_e_star(1e-7, 1e-13, 0.1, None, 1.0), Err(Error::Config(_))));
    }
}
