//! Damped least squares (Levenberg-Marquardt) with linearized covariance.
//!
//! Minimizes `Σ r_i(x)²` over the free subset of `x`. The damping matrix is
//! the diagonal of `JᵀJ` (Marquardt scaling), which makes the iteration
//! invariant to per-parameter rescaling.

use nalgebra::{DMatrix, DVector};

/// A residual function with an optional analytic Jacobian.
pub trait Problem {
    fn residuals(&self, x: &DVector<f64>) -> DVector<f64>;

    /// Analytic Jacobian (`m × n`, all parameters). `None` selects central differences.
    fn jacobian(&self, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }

    /// Finite-difference step for parameter `j`.
    fn fd_step(&self, x: &DVector<f64>, j: usize) -> f64 {
        1e-6 * x[j].abs().max(1e-6)
    }
}

#[derive(Debug, Clone)]
pub struct LevenbergMarquardt {
    pub max_iter: usize,
    /// Relative cost-change tolerance.
    pub ftol: f64,
    /// Relative (scaled) step-norm tolerance.
    pub xtol: f64,
    pub initial_lambda: f64,
}

impl Default for LevenbergMarquardt {
    fn default() -> Self {
        Self {
            max_iter: 200,
            ftol: 1e-12,
            xtol: 1e-12,
            initial_lambda: 1e-3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub x: DVector<f64>,
    /// Sum of squared residuals at `x`.
    pub cost: f64,
    pub residuals: DVector<f64>,
    /// Full `n × n` covariance scaled by the residual variance; zero rows for fixed parameters.
    pub covariance: DMatrix<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Residual count minus free-parameter count.
    pub dof: usize,
}

impl Solution {
    pub fn sigma(&self, j: usize) -> f64 {
        self.covariance[(j, j)].max(0.0).sqrt()
    }

    /// Residual variance `cost / dof`.
    pub fn residual_variance(&self) -> f64 {
        if self.dof == 0 {
            0.0
        } else {
            self.cost / self.dof as f64
        }
    }
}

fn sum_sq(r: &DVector<f64>) -> f64 {
    let c = r.norm_squared();
    if c.is_finite() {
        c
    } else {
        f64::INFINITY
    }
}

pub fn numeric_jacobian<P: Problem + ?Sized>(p: &P, x: &DVector<f64>, free: &[usize]) -> DMatrix<f64> {
    let r0 = p.residuals(x);
    let mut jac = DMatrix::zeros(r0.len(), free.len());
    for (col, &j) in free.iter().enumerate() {
        let h = p.fd_step(x, j);
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += h;
        xm[j] -= h;
        let d = (p.residuals(&xp) - p.residuals(&xm)) / (2.0 * h);
        jac.set_column(col, &d);
    }
    jac
}

fn free_jacobian<P: Problem + ?Sized>(p: &P, x: &DVector<f64>, free: &[usize]) -> DMatrix<f64> {
    match p.jacobian(x) {
        Some(full) => full.select_columns(free),
        None => numeric_jacobian(p, x, free),
    }
}

/// Scaled pseudo-inverse of `JᵀJ`; robust to rank deficiency.
fn normal_inverse(jac: &DMatrix<f64>) -> DMatrix<f64> {
    let jtj = jac.transpose() * jac;
    let k = jtj.nrows();
    let scale: Vec<f64> = (0..k)
        .map(|i| {
            let d = jtj[(i, i)];
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let s = DMatrix::from_fn(k, k, |i, j| jtj[(i, j)] * scale[i] * scale[j]);
    let svd = s.svd(true, true);
    let smax = svd.singular_values.max();
    let inv = svd
        .pseudo_inverse(smax * 1e-14)
        .unwrap_or_else(|_| DMatrix::from_element(k, k, f64::INFINITY));
    DMatrix::from_fn(k, k, |i, j| inv[(i, j)] * scale[i] * scale[j])
}

impl LevenbergMarquardt {
    pub fn minimize<P: Problem + ?Sized>(&self, problem: &P, x0: DVector<f64>) -> Solution {
        let mask = vec![true; x0.len()];
        self.minimize_masked(problem, x0, &mask)
    }

    /// Minimizes over parameters whose `free` flag is set; the rest stay at `x0`.
    pub fn minimize_masked<P: Problem + ?Sized>(
        &self,
        problem: &P,
        x0: DVector<f64>,
        free: &[bool],
    ) -> Solution {
        let n = x0.len();
        let idx: Vec<usize> = (0..n).filter(|&j| free[j]).collect();
        let k = idx.len();
        let mut x = x0;
        let mut r = problem.residuals(&x);
        let mut cost = sum_sq(&r);
        let mut lambda = self.initial_lambda;
        let mut converged = false;
        let mut iterations = 0;

        if k == 0 || cost == 0.0 {
            converged = true;
        }

        while !converged && iterations < self.max_iter && cost.is_finite() {
            iterations += 1;
            let jac = free_jacobian(problem, &x, &idx);
            let jtj = jac.transpose() * &jac;
            let grad = jac.transpose() * &r;
            let dmax = (0..k).map(|i| jtj[(i, i)]).fold(0.0, f64::max);
            if dmax == 0.0 || !dmax.is_finite() {
                break;
            }
            let diag: Vec<f64> = (0..k).map(|i| jtj[(i, i)].max(dmax * 1e-30)).collect();

            let mut accepted = false;
            while lambda < 1e20 {
                let mut a = jtj.clone();
                for i in 0..k {
                    a[(i, i)] += lambda * diag[i];
                }
                let step = match a.cholesky() {
                    Some(ch) => ch.solve(&(-&grad)),
                    None => {
                        lambda *= 10.0;
                        continue;
                    }
                };
                let mut x_new = x.clone();
                for (c, &j) in idx.iter().enumerate() {
                    x_new[j] += step[c];
                }
                let r_new = problem.residuals(&x_new);
                let cost_new = sum_sq(&r_new);
                if cost_new <= cost {
                    let step_norm: f64 = (0..k).map(|c| diag[c] * step[c] * step[c]).sum::<f64>().sqrt();
                    let x_norm: f64 = idx
                        .iter()
                        .enumerate()
                        .map(|(c, &j)| diag[c] * x[j] * x[j])
                        .sum::<f64>()
                        .sqrt();
                    let rel_change = (cost - cost_new) / cost.max(f64::MIN_POSITIVE);
                    x = x_new;
                    r = r_new;
                    cost = cost_new;
                    lambda = (lambda / 10.0).max(1e-15);
                    accepted = true;
                    if cost == 0.0 || rel_change < self.ftol || step_norm <= self.xtol * (x_norm + self.xtol) {
                        converged = true;
                    }
                    break;
                }
                lambda *= 10.0;
            }
            if !accepted {
                // No descent direction left at machine precision: x is a stationary point.
                converged = true;
                break;
            }
        }

        let m = r.len();
        let dof = m.saturating_sub(k);
        let mut covariance = DMatrix::zeros(n, n);
        if k > 0 {
            let jac = free_jacobian(problem, &x, &idx);
            let s2 = if dof > 0 { cost / dof as f64 } else { 0.0 };
            let inv = normal_inverse(&jac) * s2;
            for (a, &i) in idx.iter().enumerate() {
                for (b, &j) in idx.iter().enumerate() {
                    covariance[(i, j)] = inv[(a, b)];
                }
            }
        }

        Solution {
            x,
            cost,
            residuals: r,
            covariance,
            iterations,
            converged,
            dof,
        }
    }
}
