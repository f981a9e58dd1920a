use std::path::Path;

use rayon::prelude::*;
use serde_json::{json, Value};

use scres::synth::presets::{self, Material, L_G};
use scres::synth::{self, ChipSpec, Conditions};
use scres::ComplexTrace;

use crate::config::Config;
use crate::manifest::{ChipMeta, DesignMeta, Manifest, TraceKind, TraceRef, CHIP_LABEL};
use crate::report::{provenance, q, to_value, write_json};
use crate::CliError;

// Stream blocks keep every series of a resonator on its own noise.
const TEMPERATURE_STREAMS: usize = 1000;
const POWER_STREAMS: usize = 2000;
const NONLINEAR_STREAMS: usize = 3000;
const REFERENCE_STREAM: usize = 4000;

/// One trace to generate.
struct Job {
    material: String,
    label: String,
    kind: TraceKind,
    index: Option<usize>,
    cond: Conditions,
    stream: usize,
    points: usize,
    file: String,
}

fn source_power(cfg: &Config, device_dbm: f64) -> f64 {
    device_dbm + cfg.attenuation_db
}

fn power_grid(cfg: &Config) -> Vec<f64> {
    let n = ((cfg.power_max_dbm - cfg.power_min_dbm) / cfg.power_step_db + 1e-9).floor() as usize + 1;
    (0..n).map(|k| cfg.power_min_dbm + k as f64 * cfg.power_step_db).collect()
}

fn preset_jobs(cfg: &Config, m: Material, chip: &ChipSpec) -> Vec<Job> {
    let t0 = cfg.base_temperature_k;
    let tag = m.tag().to_string();
    let slug = m.slug();
    let mut jobs = vec![Job {
        material: tag.clone(),
        label: CHIP_LABEL.into(),
        kind: TraceKind::Spectrum,
        index: None,
        cond: Conditions::new(t0, cfg.spectrum_power_dbm),
        stream: 0,
        points: cfg.chip_window_points,
        file: format!("traces/{slug}_spectrum.csv"),
    }];
    let ler8 = chip.resonators.iter().position(|r| r.label == "LER8").expect("preset has LER8");
    for (k, t) in synth::lin_space(t0, cfg.temperature_max_k, cfg.temperature_points).into_iter().enumerate() {
        jobs.push(Job {
            material: tag.clone(),
            label: "LER8".into(),
            kind: TraceKind::Temperature,
            index: Some(ler8),
            cond: Conditions::new(t, cfg.temperature_power_dbm),
            stream: TEMPERATURE_STREAMS + k,
            points: cfg.trace_points,
            file: format!("traces/{slug}_LER8_T{k:02}.csv"),
        });
    }
    let (nl_lo, nl_hi) = m.nonlinear_powers_dbm();
    for design in presets::TABLE_DESIGNS {
        let label = format!("LER{design}");
        let idx = chip.resonators.iter().position(|r| r.label == label).expect("preset design");
        for (k, p) in power_grid(cfg).into_iter().enumerate() {
            jobs.push(Job {
                material: tag.clone(),
                label: label.clone(),
                kind: TraceKind::Power,
                index: Some(idx),
                cond: Conditions::new(t0, p),
                stream: POWER_STREAMS + k,
                points: cfg.trace_points,
                file: format!("traces/{slug}_{label}_P{k:02}.csv"),
            });
        }
        jobs.push(Job {
            material: tag.clone(),
            label: label.clone(),
            kind: TraceKind::Reference,
            index: Some(idx),
            cond: Conditions::new(t0, cfg.reference_power_dbm),
            stream: REFERENCE_STREAM,
            points: cfg.nonlinear_trace_points,
            file: format!("traces/{slug}_{label}_ref.csv"),
        });
        for (k, p) in synth::lin_space(nl_lo, nl_hi, cfg.nonlinear_powers).into_iter().enumerate() {
            jobs.push(Job {
                material: tag.clone(),
                label: label.clone(),
                kind: TraceKind::Nonlinear,
                index: Some(idx),
                cond: Conditions::new(t0, p),
                stream: NONLINEAR_STREAMS + k,
                points: cfg.nonlinear_trace_points,
                file: format!("traces/{slug}_{label}_NL{k:02}.csv"),
            });
        }
    }
    jobs
}

fn run_job(cfg: &Config, chip: &ChipSpec, job: &Job) -> Result<ComplexTrace, CliError> {
    match job.index {
        None => {
            let grid = synth::chip_grid(chip, &job.cond, job.points, cfg.chip_window_linewidths, 20)?;
            Ok(synth::simulate_chip(chip, &grid, &job.cond, job.stream)?)
        }
        Some(i) => {
            let eff = synth::effective_resonator(&chip.resonators[i], &chip.feedline, chip.t_ref, &job.cond)?;
            let grid = synth::condition_grid(&eff, job.points, cfg.sweep_span_linewidths);
            Ok(synth::simulate_trace(chip, i, &grid, &job.cond, job.stream)?)
        }
    }
}

fn truth_json(m: &str, chip: &ChipSpec) -> Value {
    let rows: Vec<Value> = chip
        .resonators
        .iter()
        .map(|r| {
            let mut v = json!({
                "label": r.label,
                "f_r": q(r.params.f_r, "Hz"),
                "q_i_low_power": q(r.params.q_i, "1"),
                "q_c": q(r.params.q_c(), "1"),
            });
            if let Some(t) = &r.tls {
                v["tls"] = json!({
                    "n_c": q(t.n_c, "1"),
                    "beta": q(t.beta, "1"),
                    "f_delta0": q(t.f_delta0, "1"),
                    "q_i_sat": q(t.q_i_sat, "1"),
                });
            }
            if let Some(mb) = &r.mb {
                v["mb"] = json!({ "t_c": q(mb.t_c, "K"), "alpha_k": q(mb.alpha_k, "1") });
            }
            if let Some(e) = r.e_star {
                v["e_star"] = q(e, "J");
            }
            v
        })
        .collect();
    json!({ "material": m, "resonators": rows })
}

pub fn run(cfg: &Config, out: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out.join("traces")).map_err(|e| CliError::Io(e.to_string()))?;
    let mut chips: Vec<(String, ChipSpec, Vec<Job>, Option<Material>)> = Vec::new();
    let mut inputs: Vec<String> = Vec::new();
    let dataset_id;
    match (&cfg.chip, cfg.preset.as_deref()) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{path}: {e}")))?;
            let mut chip: ChipSpec = serde_json::from_str(&text).map_err(|e| {
                CliError::Core(scres::Error::Parse {
                    line: e.line(),
                    msg: format!("{path}: {e}"),
                })
            })?;
            chip.seed = cfg.seed;
            chip.noise.sigma = cfg.noise_sigma;
            chip.attenuation_db = cfg.attenuation_db;
            chip.validate()?;
            let tag = cfg.material.clone().unwrap_or_else(|| "custom".into());
            let jobs = vec![Job {
                material: tag.clone(),
                label: CHIP_LABEL.into(),
                kind: TraceKind::Spectrum,
                index: None,
                cond: Conditions::new(cfg.base_temperature_k, cfg.spectrum_power_dbm),
                stream: 0,
                points: cfg.chip_window_points,
                file: "traces/spectrum.csv".into(),
            }];
            dataset_id = format!("custom-seed{}", cfg.seed);
            chips.push((tag, chip, jobs, None));
        }
        (None, Some("paper-chip")) => {
            for m in Material::ALL {
                let mut chip = presets::paper_chip(m, cfg.seed);
                chip.noise.sigma = cfg.noise_sigma;
                chip.attenuation_db = cfg.attenuation_db;
                chip.t_ref = cfg.base_temperature_k;
                let jobs = preset_jobs(cfg, m, &chip);
                chips.push((m.tag().into(), chip, jobs, Some(m)));
            }
            dataset_id = format!("paper-chip-seed{}", cfg.seed);
        }
        (None, Some(other)) => return Err(CliError::Usage(format!("unknown preset '{other}' (available: paper-chip)"))),
        (None, None) => return Err(CliError::Usage("simulate needs --preset or a `chip` entry in --config".into())),
    }

    let mut manifest = Manifest {
        dataset_id: dataset_id.clone(),
        chips: Vec::new(),
        traces: Vec::new(),
    };
    let mut truth = Vec::new();
    for (tag, chip, jobs, material) in &chips {
        let traces: Vec<ComplexTrace> = jobs.par_iter().map(|j| run_job(cfg, chip, j)).collect::<Result<_, _>>()?;
        jobs.par_iter()
            .zip(&traces)
            .try_for_each(|(j, t)| scres::io::write_csv(t, &out.join(&j.file)))?;
        let designs = chip
            .resonators
            .iter()
            .map(|r| DesignMeta {
                label: r.label.clone(),
                l_g: L_G,
                f_sim: match material {
                    Some(m) => presets::simulated_frequency(r.params.f_r, *m),
                    None => r.params.f_r,
                },
            })
            .collect();
        manifest.chips.push(ChipMeta {
            material: tag.clone(),
            designs,
        });
        for j in jobs {
            manifest.traces.push(TraceRef {
                path: j.file.clone(),
                label: j.label.clone(),
                material: j.material.clone(),
                kind: j.kind,
                temperature_k: j.cond.temperature_k,
                source_power_dbm: source_power(cfg, j.cond.power_dbm),
                attenuation_db: cfg.attenuation_db,
                sweep: j.cond.sweep,
            });
            inputs.push(j.file.clone());
        }
        truth.push(truth_json(tag, chip));
    }
    write_json(out, "manifest.json", &to_value(&manifest)?)?;
    let input_refs: Vec<&str> = inputs.iter().map(String::as_str).collect();
    let fragment = json!({
        "dataset_id": dataset_id,
        "rng": synth::RNG_ALGORITHM,
        "seed": cfg.seed,
        "n_traces": manifest.traces.len(),
        "truth": truth,
        "provenance": provenance("simulate", cfg, out, &input_refs)?,
    });
    write_json(out, "simulate_report.json", &fragment)
}
