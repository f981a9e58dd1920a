use std::path::Path;

use serde::Serialize;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use scres::resfit::FitResult;

use crate::config::Config;
use crate::CliError;

pub const TOOL: &str = "scres";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// `{value, unit}`.
pub fn q(value: f64, unit: &str) -> Value {
    json!({ "value": value, "unit": unit })
}

/// `{value, unit, sigma}`.
pub fn qs(value: f64, sigma: f64, unit: &str) -> Value {
    json!({ "value": value, "unit": unit, "sigma": sigma })
}

pub fn fit_result_json(f: &FitResult) -> Value {
    let p = &f.params;
    let s = &f.sigmas;
    json!({
        "f_r": qs(p.f_r, s.f_r, "Hz"),
        "q_i": qs(p.q_i, s.q_i, "1"),
        "q_c": qs(p.q_c(), s.q_c, "1"),
        "q_e_mag": qs(p.q_e_mag, s.q_e_mag, "1"),
        "q_l": qs(p.q_l(), s.q_l, "1"),
        "phi": qs(p.phi, s.phi, "rad"),
        "amp": qs(p.amp, s.amp, "1"),
        "alpha": qs(p.alpha, s.alpha, "rad"),
        "tau": qs(p.tau, s.tau, "s"),
        "rms_residual": q(f.rms_residual, "1"),
        "n_points": f.n_points,
        "converged": f.converged,
        "q_i_clamped": f.q_i_clamped,
    })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(sha256_hex(&bytes))
}

/// Tool identity, effective configuration and hashes of every input (paths relative to `base`).
pub fn provenance(command: &str, cfg: &Config, base: &Path, inputs: &[&str]) -> Result<Value, CliError> {
    let mut hashes = Map::new();
    for rel in inputs {
        hashes.insert(rel.to_string(), Value::String(sha256_file(&base.join(rel))?));
    }
    Ok(json!({
        "tool": TOOL,
        "version": VERSION,
        "command": command,
        "config": to_value(cfg)?,
        "inputs": hashes,
    }))
}

pub fn to_value<T: Serialize>(v: &T) -> Result<Value, CliError> {
    serde_json::to_value(v).map_err(|e| CliError::Io(e.to_string()))
}

/// Writes `value` as canonical JSON to `out/name`.
pub fn write_json(out: &Path, name: &str, value: &Value) -> Result<(), CliError> {
    let path = out.join(name);
    std::fs::write(&path, scres::io::canonical_json(value)).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn read_json(path: &Path) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| {
        CliError::Core(scres::Error::Parse {
            line: e.line(),
            msg: format!("{}: {e}", path.display()),
        })
    })
}

/// Error entry recorded in place of a failed result.
pub fn error_json(e: &scres::Error) -> Value {
    json!({ "error": e.to_string(), "kind": crate::error_kind(e) })
}

/// Report fragments merged by `report`, in a fixed order.
pub const FRAGMENTS: [(&str, &str); 6] = [
    ("simulate", "simulate_report.json"),
    ("fit", "fit_report.json"),
    ("mb", "mb_report.json"),
    ("tls", "tls_report.json"),
    ("nonlinear", "nl_report.json"),
    ("compare", "compare_report.json"),
];
