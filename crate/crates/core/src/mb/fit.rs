use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::constants::{BCS_GAP_RATIO, BOLTZMANN, PLANCK};
use crate::error::{invalid, Error, Result};
use crate::lsq::{LevenbergMarquardt, Problem};

use super::gap::reduced_gap;
use super::sigma::{sigma1_reduced, sigma2_reduced};
use super::MBMaterial;

/// One temperature point of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MBPoint {
    /// K.
    pub t: f64,
    /// Hz.
    pub f_r: f64,
    pub q_i: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct MBFitOptions {
    /// Points below this temperature are excluded; `None` uses `h f_r0 / (2 k_B)`.
    pub exclude_below: Option<f64>,
    /// Float a temperature-independent `Q_i⁻¹` floor (TLS, radiation, ...).
    pub fit_offset: bool,
    /// Δ₀/(k_B T_c).
    pub gap_ratio: f64,
    /// Relative measurement uncertainty used as the weight scale.
    pub rel_noise: f64,
}

impl Default for MBFitOptions {
    fn default() -> Self {
        Self {
            exclude_below: None,
            fit_offset: true,
            gap_ratio: BCS_GAP_RATIO,
            rel_noise: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MBFitResult {
    pub alpha_k: f64,
    pub sigma_alpha_k: f64,
    /// K.
    pub t_c: f64,
    pub sigma_t_c: f64,
    pub q_i_inv_offset: f64,
    pub sigma_q_i_inv_offset: f64,
    pub gap_ratio: f64,
    pub f_r0: f64,
    pub t_ref: f64,
    pub n_used: usize,
    pub n_excluded: usize,
    /// RMS of the weighted residuals times `rel_noise` (a relative misfit).
    pub rms_residual: f64,
    pub converged: bool,
}

impl MBFitResult {
    pub fn material(&self) -> Result<MBMaterial> {
        MBMaterial::with_gap_ratio(self.t_c, self.alpha_k, self.gap_ratio)
    }
}

struct Sweep {
    temps: Vec<f64>,
    y_shift: Vec<f64>,
    y_loss: Vec<f64>,
    w_shift: Vec<f64>,
    w_loss: Vec<f64>,
    t_ref: f64,
    f_r0: f64,
    gap_ratio: f64,
    fit_offset: bool,
}

impl Sweep {
    /// Per-point `(σ₂/σ₂,ref − 1, σ₁/σ₂)`; `None` when any point is pair-breaking.
    fn kernels(&self, t_c: f64) -> Option<Vec<(f64, f64)>> {
        if !(t_c > 0.0) {
            return None;
        }
        let gap0 = self.gap_ratio * BOLTZMANN * t_c;
        let w = PLANCK * self.f_r0 / gap0;
        let eval = |t: f64| {
            let d = reduced_gap(t / t_c);
            if w >= 2.0 * d {
                return None;
            }
            let kt = BOLTZMANN * t / gap0;
            Some((sigma1_reduced(d, w, kt), sigma2_reduced(d, w, kt)))
        };
        let (_, s2_ref) = eval(self.t_ref)?;
        self.temps
            .iter()
            .map(|&t| eval(t).map(|(s1, s2)| (s2 / s2_ref - 1.0, s1 / s2)))
            .collect()
    }

    /// Weighted linear solve for `(α, offset)` at fixed kernels.
    fn linear(&self, k: &[(f64, f64)]) -> (f64, f64) {
        let (mut saa, mut sab, mut sbb, mut sya, mut syb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (i, &(a1, a2)) in k.iter().enumerate() {
            let g = 0.5 * a1 / self.w_shift[i];
            saa += g * g;
            sya += g * self.y_shift[i] / self.w_shift[i];
            let g2 = a2 / self.w_loss[i];
            let h2 = 1.0 / self.w_loss[i];
            saa += g2 * g2;
            sab += g2 * h2;
            sbb += h2 * h2;
            sya += g2 * self.y_loss[i] / self.w_loss[i];
            syb += h2 * self.y_loss[i] / self.w_loss[i];
        }
        if !self.fit_offset {
            return (sya / saa, 0.0);
        }
        let det = saa * sbb - sab * sab;
        ((sya * sbb - syb * sab) / det, (saa * syb - sab * sya) / det)
    }

    fn residuals_for(&self, alpha: f64, offset: f64, k: &[(f64, f64)]) -> DVector<f64> {
        let n = k.len();
        let mut r = DVector::zeros(2 * n);
        for (i, &(a1, a2)) in k.iter().enumerate() {
            r[i] = (0.5 * alpha * a1 - self.y_shift[i]) / self.w_shift[i];
            r[n + i] = (alpha * a2 + offset - self.y_loss[i]) / self.w_loss[i];
        }
        r
    }
}

impl Problem for Sweep {
    fn residuals(&self, x: &DVector<f64>) -> DVector<f64> {
        match self.kernels(x[1]) {
            Some(k) => self.residuals_for(x[0], x[2], &k),
            None => DVector::from_element(2 * self.temps.len(), 1e10),
        }
    }

    fn fd_step(&self, x: &DVector<f64>, j: usize) -> f64 {
        match j {
            1 => 1e-5 * x[1],
            _ => 1e-6 * x[j].abs().max(1e-9),
        }
    }
}

/// Joint fit of the frequency shift and internal loss versus temperature for
/// `(α_k, T_c)` plus an optional constant loss floor.
///
/// `f_r0` is the resonance frequency at the lowest sweep temperature, which
/// also serves as the conductivity reference.
pub fn fit_mb_sweep(points: &[MBPoint], f_r0: f64, opts: &MBFitOptions) -> Result<MBFitResult> {
    if !(f_r0 > 0.0 && f_r0.is_finite()) {
        return Err(invalid("f_r0", format!("must be > 0, got {f_r0}")));
    }
    for p in points {
        if !(p.t >= 0.0 && p.f_r > 0.0 && p.q_i > 0.0 && p.t.is_finite() && p.q_i.is_finite()) {
            return Err(invalid("points", format!("non-physical point {p:?}")));
        }
    }
    let t_ref = points
        .iter()
        .map(|p| p.t)
        .fold(f64::INFINITY, f64::min);
    let threshold = opts
        .exclude_below
        .unwrap_or(PLANCK * f_r0 / (2.0 * BOLTZMANN));
    let used: Vec<&MBPoint> = points.iter().filter(|p| p.t >= threshold).collect();
    if used.len() < 6 {
        return Err(Error::InsufficientSpan(format!(
            "{} points above {threshold:.4} K; at least 6 required",
            used.len()
        )));
    }
    let y_shift: Vec<f64> = used.iter().map(|p| (p.f_r - f_r0) / f_r0).collect();
    let y_loss: Vec<f64> = used.iter().map(|p| 1.0 / p.q_i).collect();
    let shift_floor = 1e-3 * y_shift.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-15);
    let sweep = Sweep {
        temps: used.iter().map(|p| p.t).collect(),
        w_shift: y_shift.iter().map(|v| opts.rel_noise * v.abs().max(shift_floor)).collect(),
        w_loss: y_loss.iter().map(|v| opts.rel_noise * v).collect(),
        y_shift,
        y_loss,
        t_ref,
        f_r0,
        gap_ratio: opts.gap_ratio,
        fit_offset: opts.fit_offset,
    };
    let t_max = sweep.temps.iter().cloned().fold(0.0, f64::max);

    // Deterministic T_c scan with (α, offset) solved linearly at each node.
    let (lo, hi, nodes) = (t_max / 0.9, 4.0 * t_max, 120);
    let mut best: Option<(f64, [f64; 3])> = None;
    for k in 0..nodes {
        let t_c = lo * (hi / lo).powf(k as f64 / (nodes - 1) as f64);
        let Some(kern) = sweep.kernels(t_c) else { continue };
        let (alpha, offset) = sweep.linear(&kern);
        if !(alpha > 0.0 && alpha < 1.0) {
            continue;
        }
        let cost = sweep.residuals_for(alpha, offset, &kern).norm_squared();
        if best.is_none_or(|(c, _)| cost < c) {
            best = Some((cost, [alpha, t_c, offset]));
        }
    }
    let (_, x0) = best.ok_or_else(|| Error::Degenerate("no T_c in the scan range gives 0 < α_k < 1".into()))?;

    let sol = LevenbergMarquardt::default().minimize_masked(
        &sweep,
        DVector::from_row_slice(&x0),
        &[true, true, opts.fit_offset],
    );
    let (alpha_k, t_c) = (sol.x[0], sol.x[1]);
    if t_max < t_c / 4.0 {
        return Err(Error::InsufficientSpan(format!(
            "sweep reaches {t_max:.3} K, below T_c/4 = {:.3} K",
            t_c / 4.0
        )));
    }
    let n_res = 2 * sweep.temps.len();
    Ok(MBFitResult {
        alpha_k,
        sigma_alpha_k: sol.sigma(0),
        t_c,
        sigma_t_c: sol.sigma(1),
        q_i_inv_offset: sol.x[2],
        sigma_q_i_inv_offset: sol.sigma(2),
        gap_ratio: opts.gap_ratio,
        f_r0,
        t_ref,
        n_used: used.len(),
        n_excluded: points.len() - used.len(),
        rms_residual: opts.rel_noise * (sol.cost / n_res as f64).sqrt(),
        converged: sol.converged && alpha_k > 0.0 && alpha_k < 1.0,
    })
}
