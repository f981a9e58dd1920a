//! Phase-versus-frequency fit of points re-centered on the resonance circle:
//! `θ(f) = θ₀ + 2·atan(2 Q_l (1 - f/f_r))`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{Error, Result};
use crate::lsq::{LevenbergMarquardt, Problem};
use crate::model::MIN_FIT_POINTS;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseFit {
    pub f_r: f64,
    pub q_l: f64,
    pub theta0: f64,
    pub sigma_f_r: f64,
    pub sigma_q_l: f64,
    pub converged: bool,
}

/// Unwraps a phase sequence so consecutive samples differ by less than π.
pub fn unwrap(phases: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(phases.len());
    let mut offset = 0.0;
    let mut prev: Option<f64> = None;
    for &p in phases {
        if let Some(q) = prev {
            let d = p - q;
            if d > PI {
                offset -= 2.0 * PI * ((d + PI) / (2.0 * PI)).floor();
            } else if d < -PI {
                offset += 2.0 * PI * ((-d + PI) / (2.0 * PI)).floor();
            }
        }
        out.push(p + offset);
        prev = Some(p);
    }
    out
}

pub(crate) fn model_phase(f: f64, f_r: f64, q_l: f64, theta0: f64) -> f64 {
    theta0 + 2.0 * (2.0 * q_l * (1.0 - f / f_r)).atan()
}

struct PhaseProblem<'a> {
    freqs: &'a [f64],
    theta: &'a [f64],
}

impl Problem for PhaseProblem<'_> {
    fn residuals(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.freqs.len(),
            self.freqs
                .iter()
                .zip(self.theta)
                .map(|(&f, &t)| model_phase(f, x[1], x[2], x[0]) - t),
        )
    }

    fn jacobian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        let (f_r, q_l) = (x[1], x[2]);
        let mut j = DMatrix::zeros(self.freqs.len(), 3);
        for (i, &f) in self.freqs.iter().enumerate() {
            let u = 2.0 * q_l * (1.0 - f / f_r);
            let g = 2.0 / (1.0 + u * u);
            j[(i, 0)] = 1.0;
            j[(i, 1)] = g * 2.0 * q_l * f / (f_r * f_r);
            j[(i, 2)] = g * 2.0 * (1.0 - f / f_r);
        }
        Some(j)
    }
}

/// Frequency at which a (decreasing) sequence first crosses `level`, by linear interpolation.
fn crossing(freqs: &[f64], theta: &[f64], level: f64) -> Option<f64> {
    theta.windows(2).zip(freqs.windows(2)).find_map(|(t, f)| {
        if (t[0] - level) * (t[1] - level) <= 0.0 && t[0] != t[1] {
            Some(f[0] + (level - t[0]) / (t[1] - t[0]) * (f[1] - f[0]))
        } else {
            None
        }
    })
}

fn block_means(theta: &[f64], blocks: usize) -> Vec<f64> {
    let n = theta.len();
    (0..blocks)
        .map(|b| {
            let lo = b * n / blocks;
            let hi = ((b + 1) * n / blocks).max(lo + 1);
            theta[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Fits the phase of `points - center` against frequency.
pub fn phase_fit(freqs: &[f64], points: &[Complex64], center: Complex64) -> Result<PhaseFit> {
    let n = freqs.len();
    if n < MIN_FIT_POINTS || points.len() != n {
        return Err(Error::Unfittable(format!("phase fit needs at least {MIN_FIT_POINTS} points")));
    }
    let raw: Vec<f64> = points.iter().map(|z| (z - center).arg()).collect();
    let theta = unwrap(&raw);

    // Monotonicity on block averages, tolerance from the point-to-point scatter.
    let mut diffs: Vec<f64> = theta.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let sigma_point = 1.4826 * median(&mut diffs) / std::f64::consts::SQRT_2;
    let blocks = (n / 4).clamp(2, 32);
    let per_block = n as f64 / blocks as f64;
    let tol = 4.0 * sigma_point * (2.0 / per_block).sqrt() + 1e-12;
    let means = block_means(&theta, blocks);
    if let Some(b) = means.windows(2).position(|w| w[1] - w[0] > tol) {
        return Err(Error::Degenerate(format!(
            "phase is not monotonic after unwrapping (block {} of {blocks})",
            b + 1
        )));
    }
    let excursion = theta[0] - theta[n - 1];
    if excursion < FRAC_PI_2 {
        return Err(Error::Degenerate(format!(
            "phase excursion {excursion:.3} rad too small to locate the resonance"
        )));
    }

    let theta0_guess = 0.5 * (theta[0] + theta[n - 1]);
    let f_r_guess = crossing(freqs, &theta, theta0_guess).unwrap_or(0.5 * (freqs[0] + freqs[n - 1]));
    let q_l_guess = match (
        crossing(freqs, &theta, theta0_guess + FRAC_PI_2),
        crossing(freqs, &theta, theta0_guess - FRAC_PI_2),
    ) {
        (Some(lo), Some(hi)) if hi > lo => f_r_guess / (hi - lo),
        _ => {
            // Slope dθ/df = -4 Q_l / f_r over the whole window.
            let slope = (theta[n - 1] - theta[0]) / (freqs[n - 1] - freqs[0]);
            (-slope * f_r_guess / 4.0).max(1.0)
        }
    };

    let problem = PhaseProblem { freqs, theta: &theta };
    let sol = LevenbergMarquardt::default().minimize(
        &problem,
        DVector::from_vec(vec![theta0_guess, f_r_guess, q_l_guess]),
    );
    let (theta0, f_r, q_l) = (sol.x[0], sol.x[1], sol.x[2]);
    if !(q_l.is_finite() && q_l > 0.0 && f_r.is_finite() && f_r > 0.0) {
        return Err(Error::Degenerate(format!("phase fit diverged (f_r = {f_r}, Q_l = {q_l})")));
    }
    Ok(PhaseFit {
        f_r,
        q_l,
        theta0,
        sigma_f_r: sol.sigma(1),
        sigma_q_l: sol.sigma(2),
        converged: sol.converged,
    })
}
