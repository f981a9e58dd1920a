use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KineticExtraction {
    /// H/sq.
    pub l_k: f64,
    /// H/sq.
    pub l_g: f64,
    pub alpha_k: f64,
    /// Hz.
    pub f_sim: f64,
    /// Hz.
    pub f_meas: f64,
}

/// `L_k = [(f_sim/f_meas)² − 1] L_g` and `α_k = L_k/(L_g + L_k)`.
pub fn extract_kinetic(f_sim: f64, f_meas: f64, l_g: f64) -> Result<KineticExtraction> {
    if !(f_meas > 0.0 && f_meas.is_finite()) {
        return Err(invalid("f_meas", format!("must be > 0, got {f_meas}")));
    }
    if !(l_g > 0.0 && l_g.is_finite()) {
        return Err(invalid("l_g", format!("must be > 0, got {l_g}")));
    }
    if f_meas > f_sim {
        return Err(Error::Unphysical(format!(
            "measured frequency {f_meas} Hz exceeds simulated {f_sim} Hz; kinetic inductance cannot raise f_r"
        )));
    }
    let ratio = f_sim / f_meas;
    let l_k = (ratio * ratio - 1.0) * l_g;
    Ok(KineticExtraction {
        l_k,
        l_g,
        alpha_k: l_k / (l_g + l_k),
        f_sim,
        f_meas,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KineticSummary {
    pub l_k_mean: f64,
    pub l_k_std: f64,
    pub alpha_k_mean: f64,
    pub alpha_k_std: f64,
    pub n: usize,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, var.sqrt())
}

/// Sample mean and sample standard deviation (n − 1) of `L_k` and `α_k`.
pub fn aggregate_kinetics(extractions: &[KineticExtraction]) -> Result<KineticSummary> {
    if extractions.len() < 2 {
        return Err(Error::InsufficientSpan("at least 2 extractions required".into()));
    }
    let (l_k_mean, l_k_std) = mean_std(&extractions.iter().map(|e| e.l_k).collect::<Vec<_>>());
    let (alpha_k_mean, alpha_k_std) = mean_std(&extractions.iter().map(|e| e.alpha_k).collect::<Vec<_>>());
    Ok(KineticSummary {
        l_k_mean,
        l_k_std,
        alpha_k_mean,
        alpha_k_std,
        n: extractions.len(),
    })
}
