//! Physical constants (exact SI values) shared by every model.

/// Planck constant, J s.
pub const PLANCK: f64 = 6.626_070_15e-34;

/// Boltzmann constant, J/K.
pub const BOLTZMANN: f64 = 1.380_649e-23;

/// Euler-Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Weak-coupling BCS ratio Δ₀ / (k_B T_c) = π e^{-γ} ≈ 1.764.
pub const BCS_GAP_RATIO: f64 = std::f64::consts::PI * 0.561_459_483_566_885_2;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bcs_ratio_matches_pi_exp_minus_gamma() {
        let expected = std::f64::consts::PI * (-EULER_GAMMA).exp();
        assert!((BCS_GAP_RATIO - expected).abs() < 1e-15);
        assert!((BCS_GAP_RATIO - 1.764).abs() < 1e-3);
    }
}
