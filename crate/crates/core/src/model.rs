//! Canonical resonator types and the forward notch-transmission model.
//!
//! The transmission of a notch-coupled resonator is
//!
//! ```text
//! S21(f) = a e^{iα} e^{-2πifτ} [1 - (Q_l/|Q_e|) e^{iφ} / (1 + 2i Q_l (f - f_r)/f_r)]
//! ```
//!
//! with `Q_e = |Q_e| e^{iφ}`, `1/Q_c = Re(1/Q_e)` and `1/Q_l = 1/Q_i + 1/Q_c`.
//! With `α = τ = 0` this is the bare notch model.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

use crate::constants::PLANCK;
use crate::error::{invalid, Error, Result};

/// Fitted (or generating) description of a single resonance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonatorParams {
    /// Resonance frequency, Hz.
    pub f_r: f64,
    /// Internal quality factor.
    pub q_i: f64,
    /// Magnitude of the complex external quality factor.
    pub q_e_mag: f64,
    /// Impedance-mismatch angle, rad.
    pub phi: f64,
    /// Off-resonance transmission magnitude.
    pub amp: f64,
    /// Phase of the complex off-resonance scale, rad.
    #[serde(default)]
    pub alpha: f64,
    /// Cable delay, s.
    #[serde(default)]
    pub tau: f64,
}

impl ResonatorParams {
    /// Builds parameters from the coupling quality factor `Q_c` instead of `|Q_e|`.
    pub fn from_qc(f_r: f64, q_i: f64, q_c: f64, phi: f64) -> Result<Self> {
        let p = Self {
            f_r,
            q_i,
            q_e_mag: q_c * phi.cos(),
            phi,
            amp: 1.0,
            alpha: 0.0,
            tau: 0.0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_environment(mut self, amp: f64, alpha: f64, tau: f64) -> Self {
        self.amp = amp;
        self.alpha = alpha;
        self.tau = tau;
        self
    }

    /// Coupling quality factor, `|Q_e| / cos φ`.
    pub fn q_c(&self) -> f64 {
        self.q_e_mag / self.phi.cos()
    }

    /// Loaded quality factor, `(1/Q_i + 1/Q_c)^-1`.
    pub fn q_l(&self) -> f64 {
        1.0 / (1.0 / self.q_i + 1.0 / self.q_c())
    }

    /// Full-width linewidth `f_r / Q_l`, Hz.
    pub fn linewidth(&self) -> f64 {
        self.f_r / self.q_l()
    }

    /// Diameter of the resonance circle relative to the baseline, `Q_l / |Q_e|`.
    pub fn circle_diameter(&self) -> f64 {
        self.q_l() / self.q_e_mag
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.f_r.is_finite() && self.f_r > 0.0) {
            return Err(invalid("f_r", format!("must be positive and finite, got {}", self.f_r)));
        }
        for (field, q) in [("q_i", self.q_i), ("q_e_mag", self.q_e_mag)] {
            if !(q.is_finite() && q > 1.0) {
                return Err(invalid(field, format!("must be finite and > 1, got {q}")));
            }
        }
        if !(self.phi.is_finite() && self.phi.abs() < FRAC_PI_2) {
            return Err(invalid("phi", format!("must lie in (-pi/2, pi/2), got {}", self.phi)));
        }
        let q_c = self.q_c();
        if !(q_c.is_finite() && q_c > 1.0) {
            return Err(invalid("q_e_mag", format!("derived Q_c = {q_c} is not > 1")));
        }
        if !(self.amp.is_finite() && self.amp > 0.0) {
            return Err(invalid("amp", format!("must be positive, got {}", self.amp)));
        }
        if !self.alpha.is_finite() {
            return Err(invalid("alpha", "must be finite"));
        }
        if !self.tau.is_finite() {
            return Err(invalid("tau", "must be finite"));
        }
        Ok(())
    }

    /// Reduced detuning `Q_l (f - f_r) / f_r`.
    pub fn reduced_detuning(&self, f: f64) -> f64 {
        self.q_l() * (f - self.f_r) / self.f_r
    }

    /// Complex environment factor `a e^{iα} e^{-2πifτ}`.
    pub fn environment(&self, f: f64) -> Complex64 {
        Complex64::from_polar(self.amp, self.alpha - 2.0 * PI * f * self.tau)
    }

    /// Evaluates the model at a single frequency. Parameters are assumed valid.
    pub fn s21_at(&self, f: f64) -> Complex64 {
        self.environment(f) * notch_response(self.reduced_detuning(f), self.circle_diameter(), self.phi)
    }
}

/// Normalized notch response `1 - d e^{iφ} / (1 + 2iy)` for reduced detuning `y`.
pub fn notch_response(y: f64, diameter: f64, phi: f64) -> Complex64 {
    let num = Complex64::from_polar(diameter, phi);
    Complex64::new(1.0, 0.0) - num / Complex64::new(1.0, 2.0 * y)
}

/// Forward model evaluated on a frequency grid.
pub fn s21_notch(freqs: &[f64], p: &ResonatorParams) -> Result<Vec<Complex64>> {
    p.validate()?;
    if let Some(bad) = freqs.iter().find(|f| !(f.is_finite() && **f > 0.0)) {
        return Err(invalid("f", format!("frequencies must be positive and finite, got {bad}")));
    }
    Ok(freqs.iter().map(|&f| p.s21_at(f)).collect())
}

pub fn loaded_q(p: &ResonatorParams) -> f64 {
    p.q_l()
}

/// Mean intracavity photon number `<n> = Q_l^2/(π Q_c) · P/(h f_r^2)`.
pub fn photon_number(p: &ResonatorParams, power_w: f64) -> f64 {
    let q_l = p.q_l();
    q_l * q_l / (PI * p.q_c()) * power_w / (PLANCK * p.f_r * p.f_r)
}

pub fn dbm_to_watts(p_dbm: f64) -> f64 {
    10f64.powf((p_dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(p_w: f64) -> f64 {
    10.0 * p_w.log10() + 30.0
}

/// Frequency-ordered complex transmission samples with measurement metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexTrace {
    pub freqs: Vec<f64>,
    pub s21: Vec<Complex64>,
    #[serde(default)]
    pub temperature_k: Option<f64>,
    #[serde(default)]
    pub power_dbm: Option<f64>,
    #[serde(default)]
    pub label: String,
}

/// Minimum number of samples accepted by any fitter.
pub const MIN_FIT_POINTS: usize = 8;

impl ComplexTrace {
    pub fn new(freqs: Vec<f64>, s21: Vec<Complex64>) -> Result<Self> {
        let t = Self {
            freqs,
            s21,
            temperature_k: None,
            power_dbm: None,
            label: String::new(),
        };
        t.validate()?;
        Ok(t)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn with_conditions(mut self, temperature_k: Option<f64>, power_dbm: Option<f64>) -> Self {
        self.temperature_k = temperature_k;
        self.power_dbm = power_dbm;
        self
    }

    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.freqs.len() != self.s21.len() {
            return Err(Error::InvalidTrace(format!(
                "{} frequencies but {} S21 samples",
                self.freqs.len(),
                self.s21.len()
            )));
        }
        if self.freqs.is_empty() {
            return Err(Error::InvalidTrace("empty trace".into()));
        }
        for (i, (f, z)) in self.freqs.iter().zip(&self.s21).enumerate() {
            if !f.is_finite() || !z.re.is_finite() || !z.im.is_finite() {
                return Err(Error::InvalidTrace(format!("non-finite value at sample {i}")));
            }
        }
        if let Some(i) = self.freqs.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::InvalidTrace(format!(
                "frequencies not strictly increasing at sample {}",
                i + 1
            )));
        }
        if let Some(t) = self.temperature_k {
            if !(t > 0.0) {
                return Err(Error::InvalidTrace(format!("temperature must be positive, got {t}")));
            }
        }
        Ok(())
    }

    pub(crate) fn require_fit_points(&self) -> Result<()> {
        if self.len() < MIN_FIT_POINTS {
            return Err(Error::Unfittable(format!(
                "{} points, at least {MIN_FIT_POINTS} required",
                self.len()
            )));
        }
        Ok(())
    }

    /// Sub-trace covering the index range, metadata preserved.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        Self {
            freqs: self.freqs[range.clone()].to_vec(),
            s21: self.s21[range].to_vec(),
            temperature_k: self.temperature_k,
            power_dbm: self.power_dbm,
            label: self.label.clone(),
        }
    }

    pub fn power_watts(&self) -> Option<f64> {
        self.power_dbm.map(dbm_to_watts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn fig1c() -> ResonatorParams {
        ResonatorParams::from_qc(1.7537e9, 1.18e6, 7.90e4, 0.0).unwrap()
    }

    #[test]
    fn on_resonance_dip_depth() {
        let p = fig1c();
        let z = s21_notch(&[p.f_r], &p).unwrap()[0];
        assert_relative_eq!(z.re, 1.0 - p.q_l() / p.q_c(), epsilon = 1e-15);
        assert!(z.im.abs() < 1e-15);
        // Dip minimum, not a peak.
        assert!(z.norm() < 1.0);
        let depth_db = 20.0 * z.norm().log10();
        // 1 - Q_l/Q_c = Q_l/Q_i = 0.062748...
        assert_relative_eq!(depth_db, 20.0 * (p.q_l() / p.q_i).log10(), epsilon = 1e-12);
        assert!((depth_db - (-24.047)).abs() < 0.01, "{depth_db}");
    }

    #[test]
    fn far_detuning_returns_baseline() {
        let p = fig1c().with_environment(0.7, 0.0, 0.0);
        let z = s21_notch(&[p.f_r * 10.0], &p).unwrap()[0];
        assert!((z - Complex64::new(0.7, 0.0)).norm() < 1e-5);
    }

    #[test]
    fn loaded_q_examples() {
        let p = ResonatorParams::from_qc(5e9, 2e5, 2e5, 0.0).unwrap();
        assert_relative_eq!(loaded_q(&p), 1e5, max_relative = 1e-14);
        let p = ResonatorParams::from_qc(5e9, 1e15, 3e4, 0.0).unwrap();
        assert_relative_eq!(loaded_q(&p), 3e4, max_relative = 1e-9);
        assert!((loaded_q(&fig1c()) - 74042.89).abs() < 0.01);
    }

    #[test]
    fn photon_number_at_minus_96_dbm() {
        let p = fig1c();
        assert_eq!(photon_number(&p, 0.0), 0.0);
        let n = photon_number(&p, dbm_to_watts(-96.0));
        // Independent arithmetic: Q_l = 74043.36, Q_l²/(π Q_c) = 22090.1,
        // P/(h f²) = 2.51189e-13 / (6.62607e-34 · 3.07546e18) = 123.264.
        assert!((n - 2.7229e6).abs() / 2.7229e6 < 1e-3, "{n}");
        assert_relative_eq!(photon_number(&p, 2.0 * 1e-13), 2.0 * photon_number(&p, 1e-13), max_relative = 1e-15);
    }

    #[test]
    fn dbm_conversions() {
        assert_relative_eq!(dbm_to_watts(0.0), 1e-3, max_relative = 1e-15);
        assert_relative_eq!(dbm_to_watts(-30.0), 1e-6, max_relative = 1e-15);
        assert_relative_eq!(dbm_to_watts(-96.0), 2.512e-13, max_relative = 1e-3);
        for p in [-130.0, -96.0, -44.0, 0.0, 17.5] {
            assert_relative_eq!(watts_to_dbm(dbm_to_watts(p)), p, max_relative = 1e-12);
        }
    }

    #[test]
    fn invalid_params_name_field() {
        let mut p = fig1c();
        p.q_i = 0.5;
        match s21_notch(&[1e9], &p) {
            Err(Error::InvalidParam { field, .. }) => assert_eq!(field, "q_i"),
            other => panic!("{other:?}"),
        }
        p = fig1c();
        p.phi = 2.0;
        assert!(matches!(p.validate(), Err(Error::InvalidParam { field: "phi", .. })));
    }

    #[test]
    fn trace_rejects_reversed_frequencies() {
        let z = vec![Complex64::new(1.0, 0.0); 3];
        assert!(ComplexTrace::new(vec![3e9, 2e9, 1e9], z.clone()).is_err());
        assert!(ComplexTrace::new(vec![1e9, 2e9], z.clone()).is_err());
        assert!(ComplexTrace::new(vec![1e9, 2e9, 3e9], z).is_ok());
    }
}
