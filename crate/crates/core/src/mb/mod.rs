//! Superconductor response: BCS gap, Mattis-Bardeen conductivity, the
//! resulting frequency shift and internal loss, temperature-sweep fitting and
//! kinetic-inductance extraction.

mod fit;
pub mod gap;
mod kinetics;
mod sigma;

pub use fit::{fit_mb_sweep, MBFitOptions, MBFitResult, MBPoint};
pub use gap::{reduced_gap, reduced_gap_exact};
pub use kinetics::{aggregate_kinetics, extract_kinetic, KineticExtraction, KineticSummary};
pub use sigma::mb_sigma;

use serde::{Deserialize, Serialize};

use crate::constants::{BCS_GAP_RATIO, BOLTZMANN};
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MBMaterial {
    /// Critical temperature, K.
    pub t_c: f64,
    /// Zero-temperature gap Δ₀, J.
    pub gap0: f64,
    /// Kinetic inductance fraction.
    pub alpha_k: f64,
    /// Normal-state conductivity scale (arbitrary units; only ratios enter).
    pub sigma_n: f64,
}

impl MBMaterial {
    /// Material with the weak-coupling gap `Δ₀ = 1.764 k_B T_c`.
    pub fn new(t_c: f64, alpha_k: f64) -> Result<Self> {
        Self::with_gap_ratio(t_c, alpha_k, BCS_GAP_RATIO)
    }

    pub fn with_gap_ratio(t_c: f64, alpha_k: f64, ratio: f64) -> Result<Self> {
        let m = Self {
            t_c,
            gap0: ratio * BOLTZMANN * t_c,
            alpha_k,
            sigma_n: 1.0,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn gap_ratio(&self) -> f64 {
        self.gap0 / (BOLTZMANN * self.t_c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_c > 0.0 && self.t_c.is_finite()) {
            return Err(invalid("t_c", format!("must be > 0, got {}", self.t_c)));
        }
        let r = self.gap0 / (BOLTZMANN * self.t_c);
        if !(1.5..=2.2).contains(&r) {
            return Err(invalid("gap0", format!("Δ₀/(k_B T_c) = {r:.4} outside [1.5, 2.2]")));
        }
        if !(self.alpha_k > 0.0 && self.alpha_k < 1.0) {
            return Err(invalid("alpha_k", format!("must lie in (0, 1), got {}", self.alpha_k)));
        }
        if !(self.sigma_n > 0.0 && self.sigma_n.is_finite()) {
            return Err(invalid("sigma_n", format!("must be > 0, got {}", self.sigma_n)));
        }
        Ok(())
    }

    /// Tabulated gap Δ(T), J.
    pub fn gap_at(&self, t: f64) -> f64 {
        self.gap0 * reduced_gap(t / self.t_c)
    }
}

/// Tabulated gap Δ(T), J.
pub fn gap_at_temperature(mat: &MBMaterial, t: f64) -> f64 {
    mat.gap_at(t)
}

/// Gap from a direct solve of the gap equation (no table), J.
pub fn gap_at_temperature_exact(mat: &MBMaterial, t: f64) -> f64 {
    mat.gap0 * reduced_gap_exact(t / mat.t_c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MBObservables {
    /// Fractional frequency shift relative to the reference temperature.
    pub delta_fr: f64,
    pub q_i_inv: f64,
}

/// Frequency shift and quasiparticle loss at `t`, relative to `t_ref`.
///
/// `Δf_r/f_r = (α_k/2)(σ₂(T) − σ₂(T_ref))/σ₂(T_ref)` and `Q_i⁻¹ = α_k σ₁/σ₂`.
pub fn mb_observables(mat: &MBMaterial, t: f64, f_r0: f64, t_ref: f64) -> Result<MBObservables> {
    if t > 0.9 * mat.t_c {
        return Err(invalid("T", format!("{t} K above 0.9 T_c = {} K", 0.9 * mat.t_c)));
    }
    let (s1, s2) = mb_sigma(mat, t, f_r0)?;
    let (_, s2_ref) = mb_sigma(mat, t_ref, f_r0)?;
    Ok(MBObservables {
        delta_fr: 0.5 * mat.alpha_k * (s2 - s2_ref) / s2_ref,
        q_i_inv: mat.alpha_k * s1 / s2,
    })
}
