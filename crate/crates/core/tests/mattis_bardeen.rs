use proptest::prelude::*;

use scres::constants::{BOLTZMANN, EULER_GAMMA, PLANCK};
use scres::mb::{self, extract_kinetic, MBMaterial};

/// Reduced BCS gap from the Matsubara form of the gap equation,
/// `ln(1/t) = 2x₀ Σ_n [1/x_n − 1/√(x_n² + δ²)]`, `x_n = (2n+1) x₀`, `x₀ = t e^γ`.
fn matsubara_gap(t: f64) -> f64 {
    if t >= 1.0 {
        return 0.0;
    }
    let x0 = t * EULER_GAMMA.exp();
    let n_terms = 200_000usize;
    let residual = |d: f64| {
        let mut s = 0.0;
        for n in (0..n_terms).rev() {
            let x = (2 * n + 1) as f64 * x0;
            s += 1.0 / x - 1.0 / (x * x + d * d).sqrt();
        }
        // Tail: Σ_{n≥N} δ²/(2x_n³) ≈ δ²/(2x₀³) · 1/(16 N²).
        s += d * d / (2.0 * x0.powi(3)) / (16.0 * (n_terms as f64).powi(2));
        2.0 * x0 * s - (1.0 / t).ln()
    };
    let (mut lo, mut hi) = (1e-9, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if residual(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for k in 1..n {
        s += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

fn fermi(x: f64) -> f64 {
    1.0 / (x.exp() + 1.0)
}

/// Composite-Simpson Mattis-Bardeen integrals, energies in joules.
fn mb_oracle(gap: f64, hw: f64, kt: f64) -> (f64, f64) {
    // σ₁: E = Δ cosh u removes the √(E² − Δ²) edge.
    let u_max = (1.0 + 60.0 * kt / gap).acosh();
    let s1 = simpson(
        |u| {
            let e = gap * u.cosh();
            let ew = e + hw;
            (fermi(e / kt) - fermi(ew / kt)) * (e * e + gap * gap + hw * e) / (ew * ew - gap * gap).sqrt()
        },
        0.0,
        u_max,
        20_000,
    ) * 2.0
        / hw;
    // σ₂ over [Δ − ħω, Δ], split at the midpoint with E = Δ − s² and E = Δ − ħω + s².
    let g = |e: f64| (1.0 - 2.0 * fermi((e + hw) / kt)) * (e * e + gap * gap + hw * e);
    let half = (0.5 * hw).sqrt();
    let upper = simpson(
        |s| {
            let e = gap - s * s;
            2.0 * g(e) / ((2.0 * gap - s * s).sqrt() * ((e + hw).powi(2) - gap * gap).sqrt())
        },
        0.0,
        half,
        20_000,
    );
    let lower = simpson(
        |s| {
            let e = gap - hw + s * s;
            2.0 * g(e) / ((gap * gap - e * e).sqrt() * (2.0 * gap + s * s).sqrt())
        },
        0.0,
        half,
        20_000,
    );
    (s1, (upper + lower) / hw)
}

#[test]
fn gap_matches_matsubara_solution() {
    for k in 1..40 {
        let t = 0.025 * k as f64;
        let oracle = matsubara_gap(t);
        let exact = mb::reduced_gap_exact(t);
        let table = mb::reduced_gap(t);
        assert!((exact - oracle).abs() < 1e-7, "t={t}: {exact} vs {oracle}");
        assert!((table - oracle).abs() < 1e-5, "t={t}: table {table} vs {oracle}");
    }
}

#[test]
fn conductivity_matches_quadrature_oracle() {
    let mat = MBMaterial::new(8.7, 0.063).unwrap();
    for f in [1.5e9, 6e9] {
        for t in [0.5, 1.0, 2.0, 3.0, 4.0, 6.0] {
            let (s1, s2) = mb::mb_sigma(&mat, t, f).unwrap();
            let (o1, o2) = mb_oracle(mb::gap_at_temperature(&mat, t), PLANCK * f, BOLTZMANN * t);
            assert!((s1 / o1 - 1.0).abs() < 1e-7, "σ₁ T={t} f={f}: {s1} vs {o1}");
            assert!((s2 / o2 - 1.0).abs() < 1e-7, "σ₂ T={t} f={f}: {s2} vs {o2}");
        }
    }
}

#[test]
fn low_temperature_sigma2_limit() {
    for (t_c, f) in [(8.7, 1.797e9), (7.3, 1.75e9)] {
        let mat = MBMaterial::new(t_c, 0.1).unwrap();
        let (s1, s2) = mb::mb_sigma(&mat, 0.01 * t_c, f).unwrap();
        let expected = std::f64::consts::PI * mat.gap0 / (PLANCK * f);
        assert!((s2 / expected - 1.0).abs() < 0.01);
        assert!(s1 < 1e-30);
    }
}

proptest! {
    #[test]
    fn gap_is_nonincreasing(t in 0.0..0.999f64, dt in 1e-6..0.05f64) {
        prop_assert!(mb::reduced_gap((t + dt).min(1.0)) <= mb::reduced_gap(t) + 1e-12);
    }

    #[test]
    fn gap_close_to_tanh_interpolant(t in 0.2..0.98f64) {
        let approx = (1.74 * (1.0 / t - 1.0).sqrt()).tanh();
        prop_assert!((mb::reduced_gap(t) / approx - 1.0).abs() < 0.02);
    }

    #[test]
    fn quasiparticle_loss_grows_above_quarter_tc(t_c in 1.0..10.0f64, alpha in 0.01..0.9f64, frac in 0.25..0.85f64) {
        let mat = MBMaterial::new(t_c, alpha).unwrap();
        let f = 2e9;
        let t = frac * t_c;
        let a = mb::mb_observables(&mat, t, f, 0.01 * t_c).unwrap();
        let b = mb::mb_observables(&mat, t * 1.02, f, 0.01 * t_c).unwrap();
        prop_assert!(a.q_i_inv >= 0.0);
        prop_assert!(b.q_i_inv > a.q_i_inv);
        prop_assert!(b.delta_fr < a.delta_fr);
    }

    #[test]
    fn kinetic_extraction_inverts_forward_model(l_k in 1e-15..1e-11f64, l_g in 1e-13..1e-10f64, f_sim in 1e8..1e10f64) {
        let f_meas = f_sim / (1.0 + l_k / l_g).sqrt();
        let k = extract_kinetic(f_sim, f_meas, l_g).unwrap();
        prop_assert!(f_meas <= f_sim);
        prop_assert!((k.l_k / l_k - 1.0).abs() < 1e-9 * (1.0 + l_g / l_k));
        prop_assert!((k.alpha_k - k.l_k / (k.l_g + k.l_k)).abs() <= 1e-12);
    }
}
