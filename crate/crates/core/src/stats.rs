//! Paired comparison of two device populations.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::function::beta::beta_reg;

use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedSample {
    pub labels: Vec<String>,
    pub group_a: Vec<f64>,
    pub group_b: Vec<f64>,
}

impl PairedSample {
    pub fn new(labels: Vec<String>, group_a: Vec<f64>, group_b: Vec<f64>) -> Result<Self> {
        let s = Self { labels, group_a, group_b };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.labels.len();
        if self.group_a.len() != n || self.group_b.len() != n {
            return Err(invalid(
                "groups",
                format!("lengths differ: {} labels, {} a, {} b", n, self.group_a.len(), self.group_b.len()),
            ));
        }
        if n < 2 {
            return Err(invalid("labels", "at least 2 pairs required"));
        }
        if let Some(v) = self.group_a.iter().chain(&self.group_b).find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(invalid("groups", format!("values must be strictly positive, got {v}")));
        }
        let mut sorted = self.labels.clone();
        sorted.sort();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(invalid("labels", format!("duplicate label {}", w[0])));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub t_statistic: f64,
    pub dof: usize,
    /// Two-sided; `None` when the differences have zero variance.
    pub p_value: Option<f64>,
    pub mean_difference: f64,
    pub ci95: (f64, f64),
    pub degenerate: bool,
}

/// Two-sided p-value `I_{ν/(ν+t²)}(ν/2, 1/2)` for Student's t with `dof` degrees of freedom.
pub fn t_two_sided_p(t: f64, dof: f64) -> f64 {
    if t == 0.0 {
        return 1.0;
    }
    if !t.is_finite() {
        return 0.0;
    }
    beta_reg(0.5 * dof, 0.5, dof / (dof + t * t))
}

/// Paired t-test on `d_i = b_i − a_i`.
pub fn paired_t_test(s: &PairedSample) -> Result<TTestResult> {
    s.validate()?;
    let n = s.group_a.len();
    let d: Vec<f64> = s.group_b.iter().zip(&s.group_a).map(|(b, a)| b - a).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let dof = n - 1;
    let se = (var / n as f64).sqrt();
    // Relative floor: differences equal up to rounding count as zero variance.
    let scale = d.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if se <= 1e-14 * scale || se == 0.0 {
        let t = if mean == 0.0 { 0.0 } else { mean.signum() * f64::INFINITY };
        return Ok(TTestResult {
            t_statistic: t,
            dof,
            p_value: None,
            mean_difference: mean,
            ci95: (mean, mean),
            degenerate: true,
        });
    }
    let t = mean / se;
    let q = StudentsT::new(0.0, 1.0, dof as f64)
        .map_err(|e| invalid("dof", e.to_string()))?
        .inverse_cdf(0.975);
    Ok(TTestResult {
        t_statistic: t,
        dof,
        p_value: Some(t_two_sided_p(t, dof as f64)),
        mean_difference: mean,
        ci95: (mean - q * se, mean + q * se),
        degenerate: false,
    })
}

pub fn significance_stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        "ns"
    }
}
