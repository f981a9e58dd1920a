use scres::io::to_csv;
use scres::model::{dbm_to_watts, photon_number};
use scres::resfit::fit_resonance;
use scres::synth::presets::{self, Material};
use scres::synth::{self, Conditions};

#[test]
fn same_seed_same_bytes() {
    for m in Material::ALL {
        let chip = presets::paper_chip(m, 42);
        let cond = Conditions::new(0.015, -100.0);
        let grid = synth::chip_grid(&chip, &cond, 201, 10.0, 10).unwrap();
        let a = to_csv(&synth::simulate_chip(&chip, &grid, &cond, 0).unwrap());
        let b = to_csv(&synth::simulate_chip(&chip, &grid, &cond, 0).unwrap());
        assert_eq!(a, b);
        let other = presets::paper_chip(m, 43);
        assert_ne!(a, to_csv(&synth::simulate_chip(&other, &grid, &cond, 0).unwrap()));
    }
}

#[test]
fn fitted_residual_tracks_noise_sigma() {
    let mut chip = presets::paper_chip(Material::NbAu, 8);
    for sigma in [3e-4, 1e-3, 3e-3] {
        chip.noise.sigma = sigma;
        for (i, _) in chip.resonators.iter().enumerate().step_by(3) {
            let cond = Conditions::new(0.015, -100.0);
            let eff = synth::effective_resonator(&chip.resonators[i], &chip.feedline, chip.t_ref, &cond).unwrap();
            let tr = synth::simulate_trace(&chip, i, &synth::condition_grid(&eff, 1201, 10.0), &cond, 0).unwrap();
            let f = fit_resonance(&tr).unwrap();
            assert!((f.rms_residual / sigma - 1.0).abs() < 0.2, "σ {sigma}: rms {}", f.rms_residual);
        }
    }
}

#[test]
fn photon_number_is_self_consistent() {
    let spec = presets::paper_resonator(1, Material::NbAu);
    let chip = presets::paper_chip(Material::NbAu, 0);
    for dbm in [-120.0, -100.0, -80.0, -60.0] {
        let eff = synth::effective_resonator(&spec, &chip.feedline, chip.t_ref, &Conditions::new(0.015, dbm)).unwrap();
        let again = photon_number(&eff.params, dbm_to_watts(dbm));
        assert!((again / eff.photon_number - 1.0).abs() < 1e-8, "{dbm} dBm: {again} vs {}", eff.photon_number);
    }
}

#[test]
fn simulated_power_sweep_moves_up_then_saturates() {
    let spec = presets::paper_resonator(8, Material::Nb);
    let chip = presets::paper_chip(Material::Nb, 0);
    let f: Vec<f64> = (0..=15)
        .map(|k| {
            let cond = Conditions::new(0.015, -120.0 + 4.0 * k as f64);
            synth::effective_resonator(&spec, &chip.feedline, chip.t_ref, &cond).unwrap().params.f_r
        })
        .collect();
    assert!(f.windows(2).all(|w| w[1] >= w[0]));
    assert!(f[15] > f[0]);
}
