//! Forward simulator with seeded noise: single traces, chip spectra,
//! temperature and power sweeps, and observable-level sweeps for the fitters.

pub mod presets;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::mb::{mb_observables, MBMaterial, MBPoint};
use crate::model::{dbm_to_watts, notch_response, photon_number, ComplexTrace, ResonatorParams};
use crate::nonlinear::{a_from_power, s21_nonlinear, SweepDirection};
use crate::tls::{thermal_factor, tls_loss, TLSParams, TLSPoint};

/// Name of the random generator, recorded in dataset metadata.
pub const RNG_ALGORITHM: &str = "ChaCha20";

/// Nonlinearity below this strength is not applied.
pub const A_THRESHOLD: f64 = 0.01;

/// Independent stream `stream` derived from the master `seed`.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn stream_id(resonator: usize, condition: usize) -> u64 {
    ((resonator as u64) << 32) | condition as u64
}

const CHIP_STREAM: u64 = 1 << 63;

/// Standard normal draw.
pub fn gauss(rng: &mut ChaCha20Rng) -> f64 {
    StandardNormal.sample(rng)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonatorSpec {
    pub label: String,
    /// Low-power parameters at the reference temperature. `q_i` sets the
    /// power-independent loss and is replaced by the TLS model when `tls` is set.
    pub params: ResonatorParams,
    #[serde(default)]
    pub mb: Option<MBMaterial>,
    #[serde(default)]
    pub tls: Option<TLSParams>,
    /// Nonlinearity energy scale, J.
    #[serde(default)]
    pub e_star: Option<f64>,
    /// Dispersive TLS pull `δf/f = −κ Fδ⁰ tanh(hf/2k_BT_ref) / (1 + n/n_c)^β`, taken
    /// relative to `n = 0` so that only its power dependence shows.
    #[serde(default)]
    pub tls_shift_coeff: f64,
}

impl ResonatorSpec {
    pub fn simple(label: impl Into<String>, params: ResonatorParams) -> Self {
        Self {
            label: label.into(),
            params,
            mb: None,
            tls: None,
            e_star: None,
            tls_shift_coeff: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Feedline {
    pub amp: f64,
    /// rad.
    pub alpha: f64,
    /// Cable delay, s.
    pub tau: f64,
}

impl Default for Feedline {
    fn default() -> Self {
        Self {
            amp: 1.0,
            alpha: 0.0,
            tau: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Additive Gaussian σ per quadrature, relative to the baseline amplitude.
    pub sigma: f64,
    /// Multiplicative amplitude jitter σ.
    #[serde(default)]
    pub amp_jitter: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            sigma: 1e-3,
            amp_jitter: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChipSpec {
    pub resonators: Vec<ResonatorSpec>,
    #[serde(default)]
    pub feedline: Feedline,
    #[serde(default)]
    pub noise: NoiseSpec,
    pub seed: u64,
    /// Reference (base) temperature, K.
    #[serde(default = "default_t_ref")]
    pub t_ref: f64,
    /// Source-to-device attenuation, dB.
    #[serde(default = "default_attenuation")]
    pub attenuation_db: f64,
}

fn default_t_ref() -> f64 {
    0.015
}

fn default_attenuation() -> f64 {
    60.0
}

impl ChipSpec {
    pub fn new(resonators: Vec<ResonatorSpec>, seed: u64) -> Self {
        Self {
            resonators,
            feedline: Feedline::default(),
            noise: NoiseSpec::default(),
            seed,
            t_ref: default_t_ref(),
            attenuation_db: default_attenuation(),
        }
    }

    /// Enforces ≥ 10 linewidths between every pair of resonances.
    pub fn validate(&self) -> Result<()> {
        for r in &self.resonators {
            r.params.validate()?;
            if let Some(m) = &r.mb {
                m.validate()?;
            }
            if let Some(t) = &r.tls {
                t.validate()?;
            }
        }
        let mut sorted: Vec<&ResonatorParams> = self.resonators.iter().map(|r| &r.params).collect();
        sorted.sort_by(|a, b| a.f_r.total_cmp(&b.f_r));
        for w in sorted.windows(2) {
            let lw = w[0].linewidth().max(w[1].linewidth());
            if w[1].f_r - w[0].f_r < 10.0 * lw {
                return Err(invalid(
                    "resonators",
                    format!(
                        "resonances at {:.6e} Hz and {:.6e} Hz are closer than 10 linewidths",
                        w[0].f_r, w[1].f_r
                    ),
                ));
            }
        }
        if !(self.noise.sigma >= 0.0 && self.noise.amp_jitter >= 0.0) {
            return Err(invalid("noise", "sigma and amp_jitter must be >= 0"));
        }
        Ok(())
    }
}

/// Measurement conditions at the device.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Conditions {
    /// K.
    pub temperature_k: f64,
    /// Drive power at the device, dBm.
    pub power_dbm: f64,
    pub sweep: SweepDirection,
}

impl Conditions {
    pub fn new(temperature_k: f64, power_dbm: f64) -> Self {
        Self {
            temperature_k,
            power_dbm,
            sweep: SweepDirection::Up,
        }
    }
}

/// Resonator state at one operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveResonator {
    /// Includes the feedline environment.
    pub params: ResonatorParams,
    pub photon_number: f64,
    /// Nonlinearity strength (0 when below threshold or without `e_star`).
    pub a: f64,
}

const MAX_FIXED_POINT_ITER: usize = 50;
const FIXED_POINT_TOL: f64 = 1e-9;

/// Solves the photon number self-consistently with `Q_i(n)` and applies the
/// temperature and power dependences of `spec`.
pub fn effective_resonator(spec: &ResonatorSpec, feed: &Feedline, t_ref: f64, cond: &Conditions) -> Result<EffectiveResonator> {
    let base = spec.params;
    let t = cond.temperature_k;
    let (mb_shift, mb_loss) = match &spec.mb {
        Some(m) => {
            let o = mb_observables(m, t, base.f_r, t_ref)?;
            (o.delta_fr, o.q_i_inv)
        }
        None => (0.0, 0.0),
    };
    let power_w = dbm_to_watts(cond.power_dbm);
    let at = |n: f64| -> ResonatorParams {
        let (loss, pull) = match &spec.tls {
            Some(p) => {
                let unsat = p.f_delta0 * thermal_factor(t_ref, base.f_r);
                let saturated = tls_loss(n, p, t_ref, base.f_r) - 1.0 / p.q_i_sat;
                (tls_loss(n, p, t, base.f_r), saturated - unsat)
            }
            None => (1.0 / base.q_i, 0.0),
        };
        let q_i_inv = loss + mb_loss;
        ResonatorParams {
            f_r: base.f_r * (1.0 + mb_shift - spec.tls_shift_coeff * pull),
            q_i: 1.0 / q_i_inv,
            amp: feed.amp,
            alpha: feed.alpha,
            tau: feed.tau,
            ..base
        }
    };
    let mut n = photon_number(&at(0.0), power_w);
    let mut converged = n == 0.0 || spec.tls.is_none();
    for _ in 0..MAX_FIXED_POINT_ITER {
        if converged {
            break;
        }
        let next = photon_number(&at(n), power_w);
        converged = (next - n).abs() <= FIXED_POINT_TOL * next.abs();
        n = next;
    }
    if !converged {
        return Err(Error::Simulation(format!(
            "photon number did not reach a fixed point within {MAX_FIXED_POINT_ITER} iterations for '{}'",
            spec.label
        )));
    }
    let params = at(n);
    params.validate()?;
    let a = match spec.e_star {
        Some(e) if e > 0.0 => a_from_power(&params, power_w, e),
        _ => 0.0,
    };
    Ok(EffectiveResonator {
        params,
        photon_number: n,
        a: if a > A_THRESHOLD { a } else { 0.0 },
    })
}

/// `n` points spanning `span_lw` linewidths centred on `center`.
pub fn linewidth_grid(center: f64, linewidth: f64, n: usize, span_lw: f64) -> Vec<f64> {
    (0..n)
        .map(|k| center + (k as f64 / (n - 1) as f64 - 0.5) * span_lw * linewidth)
        .collect()
}

/// Grid that follows an operating point: centred on the (pulled) dip,
/// widened by the nonlinear shift.
pub fn condition_grid(eff: &EffectiveResonator, n: usize, span_lw: f64) -> Vec<f64> {
    let p = &eff.params;
    let lw = p.linewidth();
    linewidth_grid(p.f_r - 0.5 * eff.a * lw, lw, n, span_lw + 2.0 * eff.a)
}

fn add_noise(z: &mut [Complex64], noise: &NoiseSpec, amp: f64, rng: &mut ChaCha20Rng) {
    for v in z.iter_mut() {
        if noise.amp_jitter > 0.0 {
            *v *= 1.0 + noise.amp_jitter * gauss(rng);
        }
        if noise.sigma > 0.0 {
            let re = gauss(rng);
            let im = gauss(rng);
            *v += Complex64::new(re, im) * (noise.sigma * amp);
        }
    }
}

fn resonator_response(eff: &EffectiveResonator, freqs: &[f64], dir: SweepDirection) -> Result<Vec<Complex64>> {
    let unit = ResonatorParams {
        amp: 1.0,
        alpha: 0.0,
        tau: 0.0,
        ..eff.params
    };
    if eff.a > 0.0 {
        s21_nonlinear(freqs, &unit, eff.a, dir)
    } else {
        let d = unit.circle_diameter();
        Ok(freqs.iter().map(|&f| notch_response(unit.reduced_detuning(f), d, unit.phi)).collect())
    }
}

/// One resonator of `chip` on its own trace. `condition_index` selects the random stream.
pub fn simulate_trace(chip: &ChipSpec, index: usize, freqs: &[f64], cond: &Conditions, condition_index: usize) -> Result<ComplexTrace> {
    let spec = chip
        .resonators
        .get(index)
        .ok_or_else(|| invalid("index", format!("no resonator {index}")))?;
    let eff = effective_resonator(spec, &chip.feedline, chip.t_ref, cond)?;
    let env = &eff.params;
    let mut z: Vec<Complex64> = resonator_response(&eff, freqs, cond.sweep)?
        .into_iter()
        .zip(freqs)
        .map(|(s, &f)| s * env.environment(f))
        .collect();
    let mut rng = rng_for(chip.seed, stream_id(index, condition_index));
    add_noise(&mut z, &chip.noise, chip.feedline.amp, &mut rng);
    Ok(ComplexTrace::new(freqs.to_vec(), z)?
        .with_label(spec.label.clone())
        .with_conditions(Some(cond.temperature_k), Some(cond.power_dbm)))
}

/// Full feedline: product of every resonator response times the baseline.
pub fn simulate_chip(chip: &ChipSpec, freqs: &[f64], cond: &Conditions, condition_index: usize) -> Result<ComplexTrace> {
    chip.validate()?;
    let mut z: Vec<Complex64> = freqs
        .iter()
        .map(|&f| {
            Complex64::from_polar(
                chip.feedline.amp,
                chip.feedline.alpha - 2.0 * std::f64::consts::PI * f * chip.feedline.tau,
            )
        })
        .collect();
    for spec in &chip.resonators {
        let eff = effective_resonator(spec, &chip.feedline, chip.t_ref, cond)?;
        for (v, s) in z.iter_mut().zip(resonator_response(&eff, freqs, cond.sweep)?) {
            *v *= s;
        }
    }
    let mut rng = rng_for(chip.seed, CHIP_STREAM | condition_index as u64);
    add_noise(&mut z, &chip.noise, chip.feedline.amp, &mut rng);
    Ok(ComplexTrace::new(freqs.to_vec(), z)?
        .with_label("chip")
        .with_conditions(Some(cond.temperature_k), Some(cond.power_dbm)))
}

/// Chip grid: a dense window of `per_window` points over ±`half_width_lw`
/// linewidths around every resonance, joined by `background` points per gap.
pub fn chip_grid(chip: &ChipSpec, cond: &Conditions, per_window: usize, half_width_lw: f64, background: usize) -> Result<Vec<f64>> {
    let mut windows = Vec::new();
    for spec in &chip.resonators {
        let eff = effective_resonator(spec, &chip.feedline, chip.t_ref, cond)?;
        windows.push(condition_grid(&eff, per_window, 2.0 * half_width_lw));
    }
    windows.sort_by(|a, b| a[0].total_cmp(&b[0]));
    let mut grid: Vec<f64> = Vec::new();
    for (k, w) in windows.iter().enumerate() {
        if k > 0 {
            let (lo, hi) = (*grid.last().expect("non-empty"), w[0]);
            for j in 1..=background {
                grid.push(lo + (hi - lo) * j as f64 / (background + 1) as f64);
            }
        }
        for &f in w {
            if grid.last().is_none_or(|&l| f > l) {
                grid.push(f);
            }
        }
    }
    Ok(grid)
}

/// Resonator `index` at each temperature, on a grid following the dip.
pub fn simulate_temperature_sweep(chip: &ChipSpec, index: usize, temps: &[f64], power_dbm: f64, n_points: usize, span_lw: f64) -> Result<Vec<ComplexTrace>> {
    let conds: Vec<Conditions> = temps.iter().map(|&t| Conditions::new(t, power_dbm)).collect();
    simulate_conditions(chip, index, &conds, 0, n_points, span_lw)
}

/// Resonator `index` at each device power.
pub fn simulate_power_sweep(chip: &ChipSpec, index: usize, powers_dbm: &[f64], temperature_k: f64, n_points: usize, span_lw: f64) -> Result<Vec<ComplexTrace>> {
    let conds: Vec<Conditions> = powers_dbm.iter().map(|&p| Conditions::new(temperature_k, p)).collect();
    simulate_conditions(chip, index, &conds, 0, n_points, span_lw)
}

/// Parallel over conditions; condition `k` draws from stream `first_condition + k`.
pub fn simulate_conditions(
    chip: &ChipSpec,
    index: usize,
    conds: &[Conditions],
    first_condition: usize,
    n_points: usize,
    span_lw: f64,
) -> Result<Vec<ComplexTrace>> {
    let spec = chip
        .resonators
        .get(index)
        .ok_or_else(|| invalid("index", format!("no resonator {index}")))?;
    conds
        .par_iter()
        .enumerate()
        .map(|(k, c)| {
            let eff = effective_resonator(spec, &chip.feedline, chip.t_ref, c)?;
            let grid = condition_grid(&eff, n_points, span_lw);
            simulate_trace(chip, index, &grid, c, first_condition + k)
        })
        .collect()
}

/// Observable-level temperature sweep: MB response plus a constant loss floor,
/// with multiplicative Gaussian noise on `Δf_r` and on `Q_i`.
pub fn simulate_mb_sweep(mat: &MBMaterial, f_r0: f64, temps: &[f64], loss_floor: f64, rel_noise: f64, seed: u64) -> Result<Vec<MBPoint>> {
    let t_ref = temps.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut rng = rng_for(seed, 0);
    temps
        .iter()
        .map(|&t| {
            let o = mb_observables(mat, t, f_r0, t_ref)?;
            let shift = o.delta_fr * (1.0 + rel_noise * gauss(&mut rng));
            let loss = (o.q_i_inv + loss_floor) * (1.0 + rel_noise * gauss(&mut rng));
            Ok(MBPoint {
                t,
                f_r: f_r0 * (1.0 + shift),
                q_i: 1.0 / loss,
            })
        })
        .collect()
}

/// Observable-level power sweep: TLS loss with multiplicative noise on `Q_i`.
pub fn simulate_tls_sweep(p: &TLSParams, f_r: f64, t: f64, photon_numbers: &[f64], rel_noise: f64, seed: u64) -> Vec<TLSPoint> {
    let mut rng = rng_for(seed, 0);
    photon_numbers
        .iter()
        .map(|&n| TLSPoint {
            n,
            q_i: (1.0 + rel_noise * gauss(&mut rng)) / tls_loss(n, p, t, f_r),
        })
        .collect()
}

/// `n` log-spaced values from `lo` to `hi`.
pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| lo * (hi / lo).powf(k as f64 / (n - 1).max(1) as f64))
        .collect()
}

/// `n` evenly spaced values from `lo` to `hi`.
pub fn lin_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| lo + (hi - lo) * k as f64 / (n - 1).max(1) as f64)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::s21_notch;

    #[test]
    fn noiseless_linear_trace_matches_forward_model() {
        let p = presets::fig1c_params();
        let mut chip = ChipSpec::new(vec![ResonatorSpec::simple("LER8", p)], 1);
        chip.noise.sigma = 0.0;
        let cond = Conditions::new(chip.t_ref, -96.0);
        let freqs = linewidth_grid(p.f_r, p.linewidth(), 201, 10.0);
        let t = simulate_trace(&chip, 0, &freqs, &cond, 0).unwrap();
        assert_eq!(t.s21, s21_notch(&freqs, &p).unwrap());
    }

    #[test]
    fn streams_are_independent_and_reproducible() {
        use rand::RngCore;
        let a = rng_for(7, 1).next_u64();
        assert_eq!(a, rng_for(7, 1).next_u64());
        assert_ne!(a, rng_for(7, 2).next_u64());
    }

    #[test]
    fn close_resonators_rejected() {
        let p = presets::fig1c_params();
        let q = ResonatorParams { f_r: p.f_r + 2.0 * p.linewidth(), ..p };
        let chip = ChipSpec::new(vec![ResonatorSpec::simple("a", p), ResonatorSpec::simple("b", q)], 1);
        assert!(chip.validate().is_err());
    }
}
