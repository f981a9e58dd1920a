use proptest::prelude::*;

use scres::model::{dbm_to_watts, photon_number, s21_notch};
use scres::{Complex64, ResonatorParams};

fn params() -> impl Strategy<Value = ResonatorParams> {
    (1e8..2e10f64, 3.0..7.0f64, 3.0..6.0f64, -1.2..1.2f64, 0.1..2.0f64, -3.0..3.0f64)
        .prop_map(|(f_r, lqi, lqc, phi, amp, alpha)| {
            ResonatorParams::from_qc(f_r, 10f64.powf(lqi), 10f64.powf(lqc), phi)
                .unwrap()
                .with_environment(amp, alpha, 0.0)
        })
}

proptest! {
    #[test]
    fn derived_quality_factors_are_ordered(p in params()) {
        let (q_c, q_l) = (p.q_c(), p.q_l());
        prop_assert!(q_c.is_finite() && q_c > 1.0);
        prop_assert!(q_l > 0.0 && q_l < p.q_i.min(q_c));
        prop_assert!((1.0 / q_l - 1.0 / p.q_i - 1.0 / q_c).abs() <= 1e-12 / q_l);
    }

    #[test]
    fn dip_minimum_sits_at_resonance(mut p in params(), span in 0.5..20.0f64) {
        p.phi = 0.0;
        p.q_e_mag = p.q_c();
        let lw = p.linewidth();
        let freqs: Vec<f64> = (0..=400).map(|k| p.f_r + (k as f64 / 200.0 - 1.0) * span * lw).collect();
        let z = s21_notch(&freqs, &p).unwrap();
        let at = p.s21_at(p.f_r).norm();
        prop_assert!(z.iter().all(|v| v.norm() >= at * (1.0 - 1e-12)));
    }

    #[test]
    fn weak_coupling_approaches_baseline(p in params(), y in -50.0..50.0f64) {
        // |S21/baseline − 1| ≤ Q_l/|Q_e|, which vanishes as the coupling does.
        let f = p.f_r * (1.0 + y / p.q_l());
        let dev = (p.s21_at(f) / p.environment(f) - 1.0).norm();
        prop_assert!(dev <= p.circle_diameter() * (1.0 + 1e-12));
    }

    #[test]
    fn photon_number_ignores_trace_amplitude(p in params(), scale in 0.01..100.0f64, dbm in -140.0..-40.0f64) {
        let q = p.with_environment(p.amp * scale, p.alpha + 1.0, 1e-8);
        prop_assert_eq!(photon_number(&p, dbm_to_watts(dbm)), photon_number(&q, dbm_to_watts(dbm)));
    }

    #[test]
    fn resonance_traces_a_circle(p in params(), span in 1.0..30.0f64) {
        let lw = p.linewidth();
        let freqs: Vec<f64> = (0..=200).map(|k| p.f_r + (k as f64 / 100.0 - 1.0) * span * lw).collect();
        let z = s21_notch(&freqs, &p).unwrap();
        // Analytic circle: centre a e^{iα}(1 − d e^{iφ}/2), radius a d / 2.
        let d = p.circle_diameter();
        let env = Complex64::from_polar(p.amp, p.alpha);
        let centre = env * (1.0 - Complex64::from_polar(0.5 * d, p.phi));
        let radius = 0.5 * p.amp * d;
        let worst = z.iter().map(|v| ((v - centre).norm() - radius).abs()).fold(0.0, f64::max);
        prop_assert!(worst < 1e-9 * p.amp, "radial deviation {worst}");
    }
}

#[test]
fn fig1c_photon_number_by_hand() {
    let p = ResonatorParams::from_qc(1.7537e9, 1.18e6, 7.9e4, 0.0).unwrap();
    let q_l = 1.0 / (1.0 / 1.18e6 + 1.0 / 7.9e4);
    let hand = q_l * q_l / (std::f64::consts::PI * 7.9e4) * 10f64.powf(-12.6) / (6.626_070_15e-34 * 1.7537e9f64.powi(2));
    let n = photon_number(&p, dbm_to_watts(-96.0));
    assert!((n / hand - 1.0).abs() < 1e-12);
    assert!((n - 2.7228e6).abs() < 5e1);
}
