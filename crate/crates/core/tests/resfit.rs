use proptest::prelude::*;

use scres::resfit::fit_resonance;
use scres::synth::{self, ChipSpec, Conditions, Feedline, ResonatorSpec};
use scres::{ComplexTrace, ResonatorParams};

fn trace(p: ResonatorParams, feed: Feedline, sigma: f64, seed: u64) -> ComplexTrace {
    let mut chip = ChipSpec::new(vec![ResonatorSpec::simple("r", p)], seed);
    chip.feedline = feed;
    chip.noise.sigma = sigma;
    let freqs = synth::linewidth_grid(p.f_r, p.linewidth(), 2001, 10.0);
    synth::simulate_trace(&chip, 0, &freqs, &Conditions::new(0.015, -120.0), 0).unwrap()
}

/// Random draws over the documented ranges at 50 dB SNR.
#[test]
fn round_trip_within_ten_sigma() {
    let mut rng = synth::rng_for(99, 0);
    let uniform = |rng: &mut _, lo: f64, hi: f64| lo + (hi - lo) * rand_unit(rng);
    let draws = 100;
    let mut good = 0;
    for seed in 0..draws {
        let q_i = 10f64.powf(uniform(&mut rng, 3.0, 7.0));
        let q_c = 10f64.powf(uniform(&mut rng, 3.0, 6.0));
        let phi = uniform(&mut rng, -0.4, 0.4);
        let p = ResonatorParams::from_qc(uniform(&mut rng, 1e9, 8e9), q_i, q_c, phi).unwrap();
        let feed = Feedline {
            amp: uniform(&mut rng, 0.3, 1.0),
            alpha: uniform(&mut rng, -3.0, 3.0),
            tau: uniform(&mut rng, 0.0, 50e-9),
        };
        let tr = trace(p, feed, 10f64.powf(-2.5), seed);
        let Ok(f) = fit_resonance(&tr) else { continue };
        let (q, s) = (&f.params, &f.sigmas);
        let ok = (q.f_r - p.f_r).abs() <= 10.0 * s.f_r
            && (q.q_i - p.q_i).abs() <= 10.0 * s.q_i
            && (q.q_c() - p.q_c()).abs() <= 10.0 * s.q_c
            && (q.phi - p.phi).abs() <= 10.0 * s.phi;
        good += ok as usize;
    }
    assert!(good * 100 >= 95 * draws as usize, "{good}/{draws}");
}

fn rand_unit(rng: &mut rand_chacha::ChaCha20Rng) -> f64 {
    use rand::Rng;
    rng.random::<f64>()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn complex_rescaling_leaves_resonator_unchanged(mag in 0.05..20.0f64, arg in -3.1..3.1f64, seed in 0..1000u64) {
        let p = ResonatorParams::from_qc(4.2e9, 2e5, 5e4, 0.1).unwrap();
        let tr = trace(p, Feedline { amp: 0.7, alpha: 0.3, tau: 20e-9 }, 1e-3, seed);
        let c = scres::Complex64::from_polar(mag, arg);
        let scaled = ComplexTrace::new(tr.freqs.clone(), tr.s21.iter().map(|z| z * c).collect()).unwrap();
        let (a, b) = (fit_resonance(&tr).unwrap(), fit_resonance(&scaled).unwrap());
        for (x, y) in [(a.params.f_r, b.params.f_r), (a.params.q_i, b.params.q_i), (a.params.q_c(), b.params.q_c()), (a.params.q_l(), b.params.q_l())] {
            prop_assert!((x / y - 1.0).abs() < 1e-9, "{x} vs {y}");
        }
        prop_assert!((b.params.amp / (a.params.amp * mag) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn frequency_shift_moves_only_f_r(shift in -1e8..1e8f64, seed in 0..1000u64) {
        let p = ResonatorParams::from_qc(4.2e9, 2e5, 5e4, -0.2).unwrap();
        let tr = trace(p, Feedline { amp: 0.9, alpha: -1.0, tau: 0.0 }, 1e-3, seed);
        let moved = ComplexTrace::new(tr.freqs.iter().map(|f| f + shift).collect(), tr.s21.clone()).unwrap();
        let (a, b) = (fit_resonance(&tr).unwrap(), fit_resonance(&moved).unwrap());
        prop_assert!(((b.params.f_r - shift) / a.params.f_r - 1.0).abs() < 1e-12);
        // Same dip width in Hz, so Q scales with the centre frequency.
        prop_assert!((b.params.linewidth() / a.params.linewidth() - 1.0).abs() < 1e-6);
        prop_assert!((b.params.phi - a.params.phi).abs() < 1e-6);
    }

    #[test]
    fn refinement_never_worsens_residual(lqi in 4.0..6.5f64, lqc in 3.5..5.5f64, phi in -0.4..0.4f64, seed in 0..1000u64) {
        let p = ResonatorParams::from_qc(5e9, 10f64.powf(lqi), 10f64.powf(lqc), phi).unwrap();
        let tr = trace(p, Feedline { amp: 0.5, alpha: 2.0, tau: 40e-9 }, 3e-3, seed);
        let f = fit_resonance(&tr).unwrap();
        prop_assert!(f.rms_residual <= f.staged_rms_residual * (1.0 + 1e-12));
        for k in 0..7 {
            prop_assert!((f.covariance[k][k].sqrt() - [f.sigmas.f_r, f.sigmas.q_i, f.sigmas.q_e_mag, f.sigmas.phi, f.sigmas.amp, f.sigmas.alpha, f.sigmas.tau][k]).abs()
                <= 1e-12 * f.covariance[k][k].sqrt());
        }
    }
}

#[test]
fn fitted_residual_matches_injected_noise() {
    let p = ResonatorParams::from_qc(3e9, 5e5, 4e4, 0.05).unwrap();
    for seed in 0..10 {
        let f = fit_resonance(&trace(p, Feedline { amp: 0.6, alpha: 0.0, tau: 10e-9 }, 2e-3, seed)).unwrap();
        assert!((f.rms_residual / 2e-3 - 1.0).abs() < 0.2, "{}", f.rms_residual);
    }
}
