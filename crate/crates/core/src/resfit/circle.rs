//! Algebraic (Taubin) circle fit with geometric refinement.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lsq::{LevenbergMarquardt, Problem};
use crate::model::MIN_FIT_POINTS;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Circle {
    pub center: Complex64,
    pub radius: f64,
    /// RMS of `|z - center| - radius`.
    pub residual: f64,
}

impl Circle {
    fn from_parts(points: &[Complex64], center: Complex64, radius: f64) -> Self {
        let ss: f64 = points.iter().map(|z| ((z - center).norm() - radius).powi(2)).sum();
        Self {
            center,
            radius,
            residual: (ss / points.len() as f64).sqrt(),
        }
    }
}

/// Taubin's algebraic fit (Newton iteration on the characteristic polynomial).
pub fn taubin(points: &[Complex64]) -> Result<Circle> {
    let n = points.len() as f64;
    let mean = points.iter().sum::<Complex64>() / n;
    let (mut mxx, mut myy, mut mxy, mut mxz, mut myz, mut mzz) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for p in points {
        let x = p.re - mean.re;
        let y = p.im - mean.im;
        let z = x * x + y * y;
        mxx += x * x;
        myy += y * y;
        mxy += x * y;
        mxz += x * z;
        myz += y * z;
        mzz += z * z;
    }
    mxx /= n;
    myy /= n;
    mxy /= n;
    mxz /= n;
    myz /= n;
    mzz /= n;

    // Collinearity: smallest eigenvalue of the 2x2 scatter matrix.
    let tr = mxx + myy;
    let det2 = mxx * myy - mxy * mxy;
    let disc = (tr * tr / 4.0 - det2).max(0.0).sqrt();
    let lmin = tr / 2.0 - disc;
    if !(tr > 0.0) || lmin <= 1e-12 * tr {
        return Err(Error::Geometry("points are collinear or coincident".into()));
    }

    let mz = mxx + myy;
    let cov_xy = mxx * myy - mxy * mxy;
    let var_z = mzz - mz * mz;
    let a3 = 4.0 * mz;
    let a2 = -3.0 * mz * mz - mzz;
    let a1 = var_z * mz + 4.0 * cov_xy * mz - mxz * mxz - myz * myz;
    let a0 = mxz * (mxz * myy - myz * mxy) + myz * (myz * mxx - mxz * mxy) - var_z * cov_xy;
    let a22 = a2 + a2;
    let a33 = a3 + a3 + a3;

    let mut x = 0.0;
    let mut y = a0;
    for _ in 0..100 {
        let dy = a1 + x * (a22 + a33 * x);
        let x_new = x - y / dy;
        if x_new == x || !x_new.is_finite() {
            break;
        }
        let y_new = a0 + x_new * (a1 + x_new * (a2 + x_new * a3));
        if y_new.abs() >= y.abs() {
            break;
        }
        x = x_new;
        y = y_new;
    }

    let det = x * x - x * mz + cov_xy;
    if det == 0.0 || !det.is_finite() {
        return Err(Error::Geometry("singular circle system".into()));
    }
    let xc = (mxz * (myy - x) - myz * mxy) / det / 2.0;
    let yc = (myz * (mxx - x) - mxz * mxy) / det / 2.0;
    let radius = (xc * xc + yc * yc + mz).sqrt();
    let center = Complex64::new(xc, yc) + mean;
    if !(radius.is_finite() && center.re.is_finite() && center.im.is_finite()) {
        return Err(Error::Geometry("circle fit diverged".into()));
    }
    Ok(Circle::from_parts(points, center, radius))
}

struct Geometric<'a> {
    points: &'a [Complex64],
}

impl Problem for Geometric<'_> {
    fn residuals(&self, x: &DVector<f64>) -> DVector<f64> {
        let c = Complex64::new(x[0], x[1]);
        DVector::from_iterator(self.points.len(), self.points.iter().map(|z| (z - c).norm() - x[2]))
    }

    fn jacobian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        let c = Complex64::new(x[0], x[1]);
        let mut j = DMatrix::zeros(self.points.len(), 3);
        for (i, z) in self.points.iter().enumerate() {
            let d = z - c;
            let r = d.norm().max(f64::MIN_POSITIVE);
            j[(i, 0)] = -d.re / r;
            j[(i, 1)] = -d.im / r;
            j[(i, 2)] = -1.0;
        }
        Some(j)
    }
}

/// Least-squares circle through `points`: algebraic start, geometric (distance) refinement.
pub fn circle_fit(points: &[Complex64]) -> Result<Circle> {
    if points.len() < MIN_FIT_POINTS {
        return Err(Error::Unfittable(format!(
            "circle fit needs at least {MIN_FIT_POINTS} points, got {}",
            points.len()
        )));
    }
    let algebraic = taubin(points)?;
    let x0 = DVector::from_vec(vec![algebraic.center.re, algebraic.center.im, algebraic.radius]);
    let sol = LevenbergMarquardt::default().minimize(&Geometric { points }, x0);
    let refined = Circle::from_parts(points, Complex64::new(sol.x[0], sol.x[1]), sol.x[2].abs());
    if refined.residual.is_finite() && refined.residual <= algebraic.residual {
        Ok(refined)
    } else {
        Ok(algebraic)
    }
}
