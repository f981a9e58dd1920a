//! Two-level-system loss versus photon number.
//!
//! `tan δ(n, T) = Fδ⁰ tanh(h f_r / 2k_B T) / (1 + n/n_c)^β + 1/Q_i^sat`

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::constants::{BOLTZMANN, PLANCK};
use crate::error::{invalid, Error, Result};
use crate::lsq::{LevenbergMarquardt, Problem};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TLSParams {
    /// Critical photon number.
    pub n_c: f64,
    pub beta: f64,
    /// Low-power, zero-temperature TLS loss tangent `F·δ⁰_TLS`.
    pub f_delta0: f64,
    /// Saturated internal quality factor.
    pub q_i_sat: f64,
}

impl TLSParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("n_c", self.n_c),
            ("beta", self.beta),
            ("f_delta0", self.f_delta0),
            ("q_i_sat", self.q_i_sat),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("must be > 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Thermal saturation factor `tanh(h f / 2 k_B T)`.
pub fn thermal_factor(t: f64, f_r: f64) -> f64 {
    if t <= 0.0 {
        1.0
    } else {
        (PLANCK * f_r / (2.0 * BOLTZMANN * t)).tanh()
    }
}

pub fn tls_loss(n: f64, p: &TLSParams, t: f64, f_r: f64) -> f64 {
    p.f_delta0 * thermal_factor(t, f_r) / (1.0 + n / p.n_c).powf(p.beta) + 1.0 / p.q_i_sat
}

/// One point of a power sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TLSPoint {
    /// Mean photon number.
    pub n: f64,
    pub q_i: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TLSSigmas {
    pub n_c: f64,
    pub beta: f64,
    pub f_delta0: f64,
    pub q_i_sat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TLSFitResult {
    pub n_c: f64,
    pub beta: f64,
    pub f_delta0: f64,
    pub q_i_sat: f64,
    /// Hz.
    pub f_r: f64,
    /// K.
    pub t: f64,
    pub sigmas: TLSSigmas,
    /// RMS of `ln(tan δ)` residuals.
    pub rms_log_residual: f64,
    pub n_points: usize,
    pub converged: bool,
}

impl TLSFitResult {
    pub fn params(&self) -> TLSParams {
        TLSParams {
            n_c: self.n_c,
            beta: self.beta,
            f_delta0: self.f_delta0,
            q_i_sat: self.q_i_sat,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TLSFitOptions {
    /// A parameter whose log-sigma exceeds this is reported as unidentifiable.
    pub max_log_sigma: f64,
}

impl Default for TLSFitOptions {
    fn default() -> Self {
        Self { max_log_sigma: 1.0 }
    }
}

/// Log-space problem over `[ln n_c, ln β, ln Fδ⁰, ln(1/Q_sat)]`.
struct LogLoss {
    n: Vec<f64>,
    ln_y: Vec<f64>,
    thermal: f64,
}

impl LogLoss {
    fn terms(&self, x: &DVector<f64>, n: f64) -> (f64, f64, f64) {
        let (n_c, beta) = (x[0].exp(), x[1].exp());
        let g = (1.0 + n / n_c).powf(-beta);
        (x[2].exp() * self.thermal * g, x[3].exp(), beta)
    }
}

impl Problem for LogLoss {
    fn residuals(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.n.len(),
            self.n.iter().zip(&self.ln_y).map(|(&n, &ly)| {
                let (a, b, _) = self.terms(x, n);
                (a + b).ln() - ly
            }),
        )
    }

    fn jacobian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        let n_c = x[0].exp();
        let mut j = DMatrix::zeros(self.n.len(), 4);
        for (i, &n) in self.n.iter().enumerate() {
            let (a, b, beta) = self.terms(x, n);
            let m = a + b;
            let u = n / n_c;
            j[(i, 0)] = beta * u / (1.0 + u) * a / m;
            j[(i, 1)] = -beta * u.ln_1p() * a / m;
            j[(i, 2)] = a / m;
            j[(i, 3)] = b / m;
        }
        Some(j)
    }
}

/// Relative-weighted linear solve of `y ≈ A g + B`; `None` unless both are positive.
fn linear_amplitudes(g: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let (mut s_gg, mut s_g1, mut s_11, mut s_gy, mut s_1y) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&gi, &yi) in g.iter().zip(y) {
        let w = 1.0 / (yi * yi);
        s_gg += w * gi * gi;
        s_g1 += w * gi;
        s_11 += w;
        s_gy += w * gi * yi;
        s_1y += w * yi;
    }
    let det = s_gg * s_11 - s_g1 * s_g1;
    if det.abs() <= 1e-300 {
        return None;
    }
    let a = (s_gy * s_11 - s_1y * s_g1) / det;
    let b = (s_gg * s_1y - s_g1 * s_gy) / det;
    (a > 0.0 && b > 0.0).then_some((a, b))
}

/// Fits the TLS model to `(n, Q_i)` pairs measured at temperature `t`.
pub fn fit_tls_sweep(points: &[TLSPoint], t: f64, f_r: f64) -> Result<TLSFitResult> {
    fit_tls_sweep_with(points, t, f_r, &TLSFitOptions::default())
}

pub fn fit_tls_sweep_with(points: &[TLSPoint], t: f64, f_r: f64, opts: &TLSFitOptions) -> Result<TLSFitResult> {
    if points.len() < 8 {
        return Err(Error::InsufficientSpan(format!("{} points; at least 8 required", points.len())));
    }
    for p in points {
        if !(p.n > 0.0 && p.q_i > 0.0 && p.n.is_finite() && p.q_i.is_finite()) {
            return Err(invalid("points", format!("photon number and Q_i must be positive, got {p:?}")));
        }
    }
    let n_min = points.iter().map(|p| p.n).fold(f64::INFINITY, f64::min);
    let n_max = points.iter().map(|p| p.n).fold(0.0, f64::max);
    if n_max / n_min < 1e3 {
        return Err(Error::InsufficientSpan(format!(
            "photon numbers span {:.2} decades; at least 3 required",
            (n_max / n_min).log10()
        )));
    }
    let thermal = thermal_factor(t, f_r);
    let y: Vec<f64> = points.iter().map(|p| 1.0 / p.q_i).collect();
    let problem = LogLoss {
        n: points.iter().map(|p| p.n).collect(),
        ln_y: y.iter().map(|v| v.ln()).collect(),
        thermal,
    };

    // Deterministic multistart: (n_c, β) on a grid, amplitudes solved linearly.
    let mut starts: Vec<(f64, [f64; 4])> = Vec::new();
    let betas = [0.02, 0.05, 0.1, 0.2, 0.4, 0.8];
    let decades = (n_max / n_min).log10();
    for k in 0..=12 {
        let n_c = n_min * 10f64.powf(decades * (k as f64 / 12.0) - 1.0);
        for &beta in &betas {
            let g: Vec<f64> = problem.n.iter().map(|&n| (1.0 + n / n_c).powf(-beta)).collect();
            let Some((a, b)) = linear_amplitudes(&g, &y) else { continue };
            let x = DVector::from_row_slice(&[n_c.ln(), beta.ln(), (a / thermal).ln(), b.ln()]);
            let cost = problem.residuals(&x).norm_squared();
            starts.push((cost, [x[0], x[1], x[2], x[3]]));
        }
    }
    if starts.is_empty() {
        return Err(Error::Degenerate(
            "no positive TLS amplitude and saturation floor are consistent with the data".into(),
        ));
    }
    starts.sort_by(|a, b| a.0.total_cmp(&b.0));

    let lm = LevenbergMarquardt::default();
    let sol = starts
        .iter()
        .take(4)
        .map(|(_, x0)| lm.minimize(&problem, DVector::from_row_slice(x0)))
        .min_by(|a, b| a.cost.total_cmp(&b.cost))
        .expect("at least one start");

    let names = ["n_c", "beta", "f_delta0", "q_i_sat"];
    let log_sigma: Vec<f64> = (0..4).map(|j| sol.sigma(j)).collect();
    let bad: Vec<&str> = names
        .iter()
        .zip(&log_sigma)
        .filter(|(_, s)| !(s.is_finite() && **s <= opts.max_log_sigma))
        .map(|(n, _)| *n)
        .collect();
    if !bad.is_empty() {
        return Err(Error::Degenerate(format!(
            "photon-number range [{n_min:.3e}, {n_max:.3e}] cannot identify {}",
            bad.join(", ")
        )));
    }

    let x = &sol.x;
    let (n_c, beta, f_delta0, q_i_sat) = (x[0].exp(), x[1].exp(), x[2].exp(), (-x[3]).exp());
    if beta > 1.0 {
        warn!("fitted beta = {beta:.3} outside the usual (0, 1] range");
    }
    Ok(TLSFitResult {
        n_c,
        beta,
        f_delta0,
        q_i_sat,
        f_r,
        t,
        sigmas: TLSSigmas {
            n_c: n_c * log_sigma[0],
            beta: beta * log_sigma[1],
            f_delta0: f_delta0 * log_sigma[2],
            q_i_sat: q_i_sat * log_sigma[3],
        },
        rms_log_residual: (sol.cost / points.len() as f64).sqrt(),
        n_points: points.len(),
        converged: sol.converged,
    })
}

/// Fractional frequency shift relative to the lowest-photon-number point.
pub fn delta_fr_vs_power(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let Some(&(_, f_ref)) = points.iter().min_by(|a, b| a.0.total_cmp(&b.0)) else {
        return Vec::new();
    };
    points.iter().map(|&(n, f)| (n, (f - f_ref) / f_ref)).collect()
}

/// Number of leading power points in the linear regime: everything before the
/// first trace whose fit residual exceeds `factor` times the median of the
/// lowest-power half.
pub fn linear_regime_len(rms_by_power: &[f64], factor: f64) -> usize {
    if rms_by_power.is_empty() {
        return 0;
    }
    let mut low: Vec<f64> = rms_by_power[..rms_by_power.len().div_ceil(2)].to_vec();
    low.sort_by(|a, b| a.total_cmp(b));
    let median = low[low.len() / 2];
    rms_by_power
        .iter()
        .position(|&r| r > factor * median)
        .unwrap_or(rms_by_power.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ler8_nb() -> TLSParams {
        TLSParams {
            n_c: 6.93e7,
            beta: 0.115,
            f_delta0: 1.97e-6,
            q_i_sat: 9.52e5,
        }
    }

    #[test]
    fn limits() {
        let p = ler8_nb();
        assert!((tls_loss(1e300, &p, 0.015, 1.8e9) - 1.0 / p.q_i_sat).abs() < 1e-12);
        assert!((tls_loss(0.0, &p, 0.0, 1.8e9) - (p.f_delta0 + 1.0 / p.q_i_sat)).abs() < 1e-20);
    }

    #[test]
    fn analytic_jacobian_matches_numeric() {
        let prob = LogLoss {
            n: (0..20).map(|k| 10f64.powf(2.0 + 0.4 * k as f64)).collect(),
            ln_y: vec![0.0; 20],
            thermal: 0.98,
        };
        let x = DVector::from_row_slice(&[6.93e7f64.ln(), 0.115f64.ln(), 1.97e-6f64.ln(), (1.0 / 9.52e5f64).ln()]);
        let a = prob.jacobian(&x).unwrap();
        let n = crate::lsq::numeric_jacobian(&prob, &x, &[0, 1, 2, 3]);
        assert!((a - n).amax() < 1e-7);
    }

    #[test]
    fn linear_regime_cut() {
        assert_eq!(linear_regime_len(&[1.0, 1.1, 0.9, 1.0, 7.0, 9.0], 5.0), 4);
        assert_eq!(linear_regime_len(&[1.0, 1.0], 5.0), 2);
    }

    #[test]
    fn delta_fr_reference_is_lowest_n() {
        let d = delta_fr_vs_power(&[(10.0, 2.0), (1.0, 1.0), (100.0, 1.5)]);
        assert_eq!(d[1].1, 0.0);
        assert_eq!(d[0].1, 1.0);
    }
}
