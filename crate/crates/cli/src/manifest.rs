use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use scres::nonlinear::SweepDirection;
use scres::ComplexTrace;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceKind {
    /// Full feedline spectrum; resonances are segmented before fitting.
    Spectrum,
    Temperature,
    Power,
    Nonlinear,
    /// Low-power trace anchoring a nonlinear series.
    Reference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignMeta {
    pub label: String,
    /// H/sq.
    pub l_g: f64,
    /// Hz.
    pub f_sim: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChipMeta {
    pub material: String,
    pub designs: Vec<DesignMeta>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRef {
    /// Relative to the manifest directory.
    pub path: String,
    pub label: String,
    pub material: String,
    pub kind: TraceKind,
    pub temperature_k: f64,
    pub source_power_dbm: f64,
    pub attenuation_db: f64,
    #[serde(default = "default_sweep")]
    pub sweep: SweepDirection,
}

fn default_sweep() -> SweepDirection {
    SweepDirection::Up
}

impl TraceRef {
    pub fn device_power_dbm(&self) -> f64 {
        self.source_power_dbm - self.attenuation_db
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub dataset_id: String,
    pub chips: Vec<ChipMeta>,
    pub traces: Vec<TraceRef>,
}

/// Label used for spectrum traces, which hold every design of a chip.
pub const CHIP_LABEL: &str = "chip";

impl Manifest {
    pub fn load(path: &Path) -> Result<(Self, PathBuf), CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let m: Manifest = serde_json::from_str(&text).map_err(|e| CliError::Core(scres::Error::Parse {
            line: e.line(),
            msg: format!("{}: {e}", path.display()),
        }))?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        m.validate()?;
        Ok((m, dir))
    }

    fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Usage(format!("manifest: {msg}")));
        let mut materials = BTreeSet::new();
        for c in &self.chips {
            if !materials.insert(c.material.as_str()) {
                return bad(format!("material '{}' listed twice", c.material));
            }
            for d in &c.designs {
                if !(d.l_g > 0.0 && d.f_sim > 0.0) {
                    return bad(format!("design {} needs positive l_g and f_sim", d.label));
                }
            }
        }
        for t in &self.traces {
            if !(t.attenuation_db >= 0.0) {
                return bad(format!("{}: attenuation must be >= 0", t.path));
            }
            if !(t.temperature_k >= 0.0) {
                return bad(format!("{}: temperature must be >= 0", t.path));
            }
            let chip = self.chips.iter().find(|c| c.material == t.material);
            let known = match (t.kind, chip) {
                (TraceKind::Spectrum, Some(_)) => t.label == CHIP_LABEL,
                (_, Some(c)) => c.designs.iter().any(|d| d.label == t.label),
                (_, None) => self.chips.is_empty(),
            };
            if !known {
                return bad(format!("{}: label '{}' is not a design of material '{}'", t.path, t.label, t.material));
            }
        }
        Ok(())
    }

    pub fn design(&self, material: &str, label: &str) -> Option<&DesignMeta> {
        self.chips
            .iter()
            .find(|c| c.material == material)
            .and_then(|c| c.designs.iter().find(|d| d.label == label))
    }

    pub fn chip(&self, material: &str) -> Option<&ChipMeta> {
        self.chips.iter().find(|c| c.material == material)
    }
}

/// Ingests every trace of the selected kinds, in manifest order.
pub fn load_traces(m: &Manifest, dir: &Path, kinds: &[TraceKind]) -> Result<Vec<(TraceRef, ComplexTrace)>, CliError> {
    m.traces
        .par_iter()
        .filter(|t| kinds.contains(&t.kind))
        .map(|t| {
            let path = dir.join(&t.path);
            let trace = scres::io::read_trace(&path).map_err(|e| match e {
                scres::Error::Parse { line, msg } => CliError::Core(scres::Error::Parse {
                    line,
                    msg: format!("{}: {msg}", t.path),
                }),
                scres::Error::Io(msg) => CliError::Io(format!("{}: {msg}", t.path)),
                other => CliError::Core(other),
            })?;
            let trace = trace
                .with_label(t.label.clone())
                .with_conditions(Some(t.temperature_k), Some(t.device_power_dbm()));
            Ok((t.clone(), trace))
        })
        .collect()
}

/// Groups entries by `(material, label)` preserving first-appearance order.
pub fn group_series<T: Clone>(items: &[(TraceRef, T)]) -> Vec<((String, String), Vec<(TraceRef, T)>)> {
    let mut out: Vec<((String, String), Vec<(TraceRef, T)>)> = Vec::new();
    for (r, v) in items {
        let key = (r.material.clone(), r.label.clone());
        match out.iter_mut().find(|(k, _)| *k == key) {
            Some((_, list)) => list.push((r.clone(), v.clone())),
            None => out.push((key, vec![(r.clone(), v.clone())])),
        }
    }
    out
}
