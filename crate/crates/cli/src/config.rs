use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::CliError;

/// Values read from a `--config` TOML file; every key is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub preset: Option<String>,
    /// Chip specification (JSON) simulated instead of a preset.
    pub chip: Option<PathBuf>,
    pub material: Option<String>,
    pub noise_sigma: Option<f64>,
    pub attenuation_db: Option<f64>,
    pub base_temperature_k: Option<f64>,
    pub spectrum_power_dbm: Option<f64>,
    pub trace_points: Option<usize>,
    pub nonlinear_trace_points: Option<usize>,
    pub chip_window_points: Option<usize>,
    pub chip_window_linewidths: Option<f64>,
    pub sweep_span_linewidths: Option<f64>,
    pub temperature_max_k: Option<f64>,
    pub temperature_points: Option<usize>,
    pub temperature_power_dbm: Option<f64>,
    pub power_min_dbm: Option<f64>,
    pub power_max_dbm: Option<f64>,
    pub power_step_db: Option<f64>,
    pub nonlinear_powers: Option<usize>,
    pub reference_power_dbm: Option<f64>,
    pub linear_regime_factor: Option<f64>,
    pub mb_exclude_below_k: Option<f64>,
    pub geometry_area_m2: Option<f64>,
    pub geometry_length_m: Option<f64>,
    pub jstar_calibration: Option<f64>,
    pub jstar_reference_label: Option<String>,
    pub jstar_reference_material: Option<String>,
    pub jstar_reference_value: Option<f64>,
}

/// Fully resolved settings, echoed into every report. `jobs` is left out of the
/// echo because results do not depend on it.
#[derive(Debug, Clone, Serialize)]
pub struct Config {
    pub seed: u64,
    #[serde(skip)]
    pub jobs: usize,
    pub preset: Option<String>,
    pub chip: Option<String>,
    pub material: Option<String>,
    pub noise_sigma: f64,
    pub attenuation_db: f64,
    pub base_temperature_k: f64,
    pub spectrum_power_dbm: f64,
    pub trace_points: usize,
    pub nonlinear_trace_points: usize,
    pub chip_window_points: usize,
    pub chip_window_linewidths: f64,
    pub sweep_span_linewidths: f64,
    pub temperature_max_k: f64,
    pub temperature_points: usize,
    pub temperature_power_dbm: f64,
    pub power_min_dbm: f64,
    pub power_max_dbm: f64,
    pub power_step_db: f64,
    pub nonlinear_powers: usize,
    pub reference_power_dbm: f64,
    pub linear_regime_factor: f64,
    pub mb_exclude_below_k: Option<f64>,
    pub geometry_area_m2: f64,
    pub geometry_length_m: f64,
    pub jstar_calibration: Option<f64>,
    pub jstar_reference_label: String,
    pub jstar_reference_material: String,
    pub jstar_reference_value: f64,
}

/// Command-line overrides (highest precedence).
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub preset: Option<String>,
}

impl Config {
    pub fn resolve(file: Option<&Path>, cli: &Overrides) -> Result<Self, CliError> {
        let f: ConfigFile = match file {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
                toml::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", p.display())))?
            }
            None => ConfigFile::default(),
        };
        let geometry = scres::synth::presets::nominal_geometry();
        let cfg = Config {
            seed: cli.seed.or(f.seed).unwrap_or(0),
            jobs: cli.jobs.or(f.jobs).unwrap_or(1).max(1),
            preset: cli.preset.clone().or(f.preset),
            chip: f.chip.map(|p| p.display().to_string()),
            material: f.material,
            noise_sigma: f.noise_sigma.unwrap_or(1e-3),
            attenuation_db: f.attenuation_db.unwrap_or(60.0),
            base_temperature_k: f.base_temperature_k.unwrap_or(0.015),
            spectrum_power_dbm: f.spectrum_power_dbm.unwrap_or(-100.0),
            trace_points: f.trace_points.unwrap_or(801),
            nonlinear_trace_points: f.nonlinear_trace_points.unwrap_or(1201),
            chip_window_points: f.chip_window_points.unwrap_or(401),
            chip_window_linewidths: f.chip_window_linewidths.unwrap_or(10.0),
            sweep_span_linewidths: f.sweep_span_linewidths.unwrap_or(10.0),
            temperature_max_k: f.temperature_max_k.unwrap_or(4.0),
            temperature_points: f.temperature_points.unwrap_or(30),
            temperature_power_dbm: f.temperature_power_dbm.unwrap_or(-100.0),
            power_min_dbm: f.power_min_dbm.unwrap_or(-120.0),
            power_max_dbm: f.power_max_dbm.unwrap_or(-40.0),
            power_step_db: f.power_step_db.unwrap_or(4.0),
            nonlinear_powers: f.nonlinear_powers.unwrap_or(9),
            reference_power_dbm: f.reference_power_dbm.unwrap_or(-80.0),
            linear_regime_factor: f.linear_regime_factor.unwrap_or(5.0),
            mb_exclude_below_k: f.mb_exclude_below_k,
            geometry_area_m2: f.geometry_area_m2.unwrap_or(geometry.area_m2),
            geometry_length_m: f.geometry_length_m.unwrap_or(geometry.length_m),
            jstar_calibration: f.jstar_calibration,
            jstar_reference_label: f.jstar_reference_label.unwrap_or_else(|| "LER1".into()),
            jstar_reference_material: f.jstar_reference_material.unwrap_or_else(|| "Nb".into()),
            jstar_reference_value: f.jstar_reference_value.unwrap_or(4.27e8),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        let bad = |k: &str, why: &str| Err(CliError::Usage(format!("config `{k}` {why}")));
        if !(self.noise_sigma >= 0.0) {
            return bad("noise_sigma", "must be >= 0");
        }
        if !(self.attenuation_db >= 0.0) {
            return bad("attenuation_db", "must be >= 0");
        }
        if self.trace_points < 16 || self.nonlinear_trace_points < 16 || self.chip_window_points < 16 {
            return bad("*_points", "must be >= 16");
        }
        if !(self.power_step_db > 0.0 && self.power_max_dbm >= self.power_min_dbm) {
            return bad("power_*", "must describe an ascending range with a positive step");
        }
        if self.temperature_points < 2 || self.nonlinear_powers < 2 {
            return bad("temperature_points/nonlinear_powers", "must be >= 2");
        }
        if !(self.geometry_area_m2 > 0.0 && self.geometry_length_m > 0.0) {
            return bad("geometry_*", "must be > 0");
        }
        Ok(())
    }

    pub fn geometry(&self) -> scres::nonlinear::Geometry {
        scres::nonlinear::Geometry {
            area_m2: self.geometry_area_m2,
            length_m: self.geometry_length_m,
        }
    }
}
