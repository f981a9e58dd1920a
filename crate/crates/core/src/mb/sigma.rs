//! Mattis-Bardeen complex conductivity, normalized to the normal state.
//!
//! All energies are expressed in units of Δ₀ internally.

use crate::constants::{BOLTZMANN, PLANCK};
use crate::error::{Error, Result};
use crate::quad::integrate;

use super::MBMaterial;

/// `f(a) - f(b)` for Fermi functions of reduced arguments `a = E/kT`, `b = E'/kT`.
fn fermi_difference(a: f64, b: f64) -> f64 {
    0.5 * (0.5 * (b - a)).sinh() / ((0.5 * a).cosh() * (0.5 * b).cosh())
}

/// `σ₁/σ_n` for reduced gap `d`, photon energy `w` and thermal energy `kt` (units of Δ₀).
pub(crate) fn sigma1_reduced(d: f64, w: f64, kt: f64) -> f64 {
    if kt <= 0.0 {
        return 0.0;
    }
    // E = d + v², which removes the 1/√(E - d) edge.
    let v_max = (60.0 * kt).sqrt();
    let integrand = |v: f64| {
        let e = d + v * v;
        let ew = e + w;
        let num = e * e + d * d + w * e;
        let den = (2.0 * d + v * v).sqrt() * (ew * ew - d * d).sqrt();
        2.0 * fermi_difference(e / kt, ew / kt) * num / den
    };
    let r = integrate(integrand, 0.0, v_max, 0.0, 1e-11, 400);
    2.0 / w * r.value
}

/// `σ₂/σ_n` for reduced gap `d`, photon energy `w < 2d` and thermal energy `kt`.
pub(crate) fn sigma2_reduced(d: f64, w: f64, kt: f64) -> f64 {
    // E = c + h cos θ maps [Δ - ħω, Δ] onto θ ∈ [0, π] and cancels both edges.
    let c = d - 0.5 * w;
    let h = 0.5 * w;
    let integrand = |theta: f64| {
        let e = c + h * theta.cos();
        let ew = e + w;
        let occupation = if kt > 0.0 { (0.5 * ew / kt).tanh() } else { 1.0 };
        let num = e * e + d * d + w * e;
        occupation * num / ((d + e).sqrt() * (ew + d).sqrt())
    };
    let r = integrate(integrand, 0.0, std::f64::consts::PI, 0.0, 1e-12, 400);
    r.value / w
}

/// Returns `(σ₁/σ_n, σ₂/σ_n)` at temperature `t` (K) and frequency `f` (Hz).
///
/// Fails with [`Error::PairBreaking`] when `h f ≥ 2Δ(T)`.
pub fn mb_sigma(mat: &MBMaterial, t: f64, f: f64) -> Result<(f64, f64)> {
    mat.validate()?;
    if !(t >= 0.0 && t.is_finite()) {
        return Err(crate::error::invalid("T", format!("must be >= 0, got {t}")));
    }
    if !(f > 0.0 && f.is_finite()) {
        return Err(crate::error::invalid("f", format!("must be > 0, got {f}")));
    }
    let gap = mat.gap_at(t);
    let hf = PLANCK * f;
    if hf >= 2.0 * gap {
        return Err(Error::PairBreaking { hf, two_gap: 2.0 * gap });
    }
    let d = gap / mat.gap0;
    let w = hf / mat.gap0;
    let kt = BOLTZMANN * t / mat.gap0;
    Ok((sigma1_reduced(d, w, kt), sigma2_reduced(d, w, kt)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fermi_difference_is_stable() {
        let a: f64 = 3.0;
        let b: f64 = 3.0 + 1e-9;
        let direct = 1.0 / (a.exp() + 1.0) - 1.0 / (b.exp() + 1.0);
        assert!((fermi_difference(a, b) - direct).abs() < 1e-17);
        assert!(fermi_difference(1e3, 1.001e3) >= 0.0);
    }

    #[test]
    fn zero_temperature_sigma2() {
        let mat = MBMaterial::new(8.7, 0.063).unwrap();
        let (s1, s2) = mb_sigma(&mat, 0.0, 1.75e9).unwrap();
        assert_eq!(s1, 0.0);
        let limit = std::f64::consts::PI * mat.gap0 / (PLANCK * 1.75e9);
        assert!((s2 / limit - 1.0).abs() < 1e-3);
    }

    #[test]
    fn pair_breaking_rejected() {
        let mat = MBMaterial::new(1.0, 0.1).unwrap();
        assert!(matches!(mb_sigma(&mat, 0.5, 2e11), Err(Error::PairBreaking { .. })));
    }
}
