use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::{json, Map, Value};

use scres::mb::{aggregate_kinetics, extract_kinetic, fit_mb_sweep, mb_observables, MBFitOptions, MBPoint};
use scres::model::{dbm_to_watts, photon_number};
use scres::nonlinear::{calibrate_j_star, fit_a_vs_power, fit_nonlinear_trace, s21_nonlinear, NonlinearScale, NonlinearTraceFit};
use scres::resfit::{fit_resonance, segment, FitResult};
use scres::stats::{paired_t_test, significance_stars, PairedSample};
use scres::tls::{fit_tls_sweep, linear_regime_len, tls_loss, TLSPoint};
use scres::ComplexTrace;

use crate::config::Config;
use crate::manifest::{group_series, load_traces, Manifest, TraceKind, TraceRef};
use crate::plots::{db, Figure};
use crate::report::{error_json, fit_result_json, provenance, q, qs, read_json, write_json, FRAGMENTS};
use crate::{warn, CliError};

fn slug(s: &str) -> String {
    s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase()
}

fn trace_paths(traces: &[(TraceRef, ComplexTrace)]) -> Vec<String> {
    let mut v: Vec<String> = traces.iter().map(|(r, _)| r.path.clone()).collect();
    v.push("manifest.json".into());
    v
}

fn prov(cmd: &str, cfg: &Config, dir: &Path, manifest_name: &str, traces: &[(TraceRef, ComplexTrace)]) -> Result<Value, CliError> {
    let mut paths = trace_paths(traces);
    *paths.last_mut().expect("manifest entry") = manifest_name.to_string();
    let refs: Vec<&str> = paths.iter().map(String::as_str).collect();
    provenance(cmd, cfg, dir, &refs)
}

fn manifest_name(path: &Path) -> String {
    path.file_name().and_then(|s| s.to_str()).unwrap_or("manifest.json").to_string()
}

fn conditions_json(r: &TraceRef) -> Value {
    json!({
        "file": r.path,
        "label": r.label,
        "material": r.material,
        "kind": r.kind,
        "temperature": q(r.temperature_k, "K"),
        "source_power": q(r.source_power_dbm, "dBm"),
        "attenuation": q(r.attenuation_db, "dB"),
        "device_power": q(r.device_power_dbm(), "dBm"),
    })
}

/// Splits a spectrum into single-resonance windows, labelled by design in
/// ascending `f_sim` order when the dip count matches the chip metadata.
fn segment_spectrum(m: &Manifest, r: &TraceRef, t: &ComplexTrace) -> Vec<(String, ComplexTrace)> {
    let parts = segment::split_dips(t, &segment::SegmentOptions::default());
    let mut designs: Vec<(f64, String)> = m
        .chip(&r.material)
        .map(|c| c.designs.iter().map(|d| (d.f_sim, d.label.clone())).collect())
        .unwrap_or_default();
    designs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let by_order = designs.len() == parts.len();
    if !by_order && !designs.is_empty() {
        warn(&format!(
            "{}: found {} resonances but the chip lists {} designs; using positional labels",
            r.path,
            parts.len(),
            designs.len()
        ));
    }
    parts
        .into_iter()
        .enumerate()
        .map(|(k, (_, tr))| {
            let label = if by_order { designs[k].1.clone() } else { format!("dip{}", k + 1) };
            (label.clone(), tr.with_label(label))
        })
        .collect()
}

fn spectrum_plot(fig: &mut Figure, out: &Path, name: &str, t: &ComplexTrace, fit: Option<&FitResult>) -> Result<(), CliError> {
    let rows: Vec<Vec<f64>> = t
        .freqs
        .iter()
        .zip(&t.s21)
        .map(|(&f, &z)| {
            let m = fit.map(|r| r.params.s21_at(f)).unwrap_or(z);
            vec![f, db(z), z.arg(), db(m), m.arg()]
        })
        .collect();
    fig.add(out, name, name, &rows)
}

pub fn fit(cfg: &Config, manifest_path: &Path, out: &Path) -> Result<(), CliError> {
    let (m, dir) = Manifest::load(manifest_path)?;
    let traces = load_traces(&m, &dir, &[TraceKind::Spectrum])?;
    if traces.is_empty() {
        return Err(CliError::Usage("manifest has no spectrum traces".into()));
    }
    let mut jobs: Vec<(TraceRef, String, ComplexTrace)> = Vec::new();
    for (r, t) in &traces {
        for (label, seg) in segment_spectrum(&m, r, t) {
            jobs.push((r.clone(), label, seg));
        }
    }
    let fits: Vec<scres::Result<FitResult>> = jobs.par_iter().map(|(_, _, t)| fit_resonance(t)).collect();

    let mut fig_b = Figure::new("fig1b", "feedline transmission magnitude per chip", &[("freq", "Hz"), ("s21_mag", "dB")]);
    for (r, t) in &traces {
        let rows: Vec<Vec<f64>> = t.freqs.iter().zip(&t.s21).map(|(&f, &z)| vec![f, db(z)]).collect();
        fig_b.add(out, &format!("fig1b_{}.dat", slug(&r.material)), &r.material, &rows)?;
    }
    fig_b.finish(out)?;

    let mut fig_c = Figure::new(
        "fig1c",
        "single-resonance spectra with fit overlay",
        &[("freq", "Hz"), ("s21_mag", "dB"), ("s21_phase", "rad"), ("fit_mag", "dB"), ("fit_phase", "rad")],
    );
    let mut entries = Vec::new();
    let mut failures = 0;
    for ((r, label, seg), res) in jobs.iter().zip(&fits) {
        let mut e = conditions_json(r);
        e["label"] = json!(label);
        match res {
            Ok(f) => e["result"] = fit_result_json(f),
            Err(err) => {
                failures += 1;
                warn(&format!("{} {label}: {err}", r.path));
                e["result"] = error_json(err);
            }
        }
        spectrum_plot(&mut fig_c, out, &format!("fig1c_{}_{}.dat", slug(&r.material), slug(label)), seg, res.as_ref().ok())?;
        entries.push(e);
    }
    fig_c.finish(out)?;
    if failures == jobs.len() {
        return Err(CliError::Core(scres::Error::Unfittable("no resonance could be fitted".into())));
    }

    // Kinetic inductance from simulated vs fitted frequencies.
    let mut kinetics = Vec::new();
    for chip in &m.chips {
        let mut ext = Vec::new();
        let mut rows = Vec::new();
        for ((r, label, _), res) in jobs.iter().zip(&fits) {
            let (Some(d), Ok(f)) = (m.design(&chip.material, label), res) else { continue };
            if r.material != chip.material {
                continue;
            }
            match extract_kinetic(d.f_sim, f.params.f_r, d.l_g) {
                Ok(k) => {
                    rows.push(json!({
                        "label": label,
                        "f_sim": q(k.f_sim, "Hz"),
                        "f_meas": q(k.f_meas, "Hz"),
                        "l_k": q(k.l_k, "H/sq"),
                        "alpha_k": q(k.alpha_k, "1"),
                    }));
                    ext.push(k);
                }
                Err(e) => warn(&format!("{} {label}: {e}", chip.material)),
            }
        }
        let summary = match aggregate_kinetics(&ext) {
            Ok(s) => json!({
                "l_k_mean": qs(s.l_k_mean, s.l_k_std, "H/sq"),
                "alpha_k_mean": qs(s.alpha_k_mean, s.alpha_k_std, "1"),
                "n": s.n,
            }),
            Err(e) => error_json(&e),
        };
        kinetics.push(json!({ "material": chip.material, "designs": rows, "summary": summary }));
    }

    let fragment = json!({
        "dataset_id": m.dataset_id,
        "fits": entries,
        "kinetics": kinetics,
        "provenance": prov("fit", cfg, &dir, &manifest_name(manifest_path), &traces)?,
    });
    write_json(out, "fit_report.json", &fragment)
}

/// Fits every trace of the given kinds, in manifest order.
fn fit_all(traces: &[(TraceRef, ComplexTrace)]) -> Vec<(TraceRef, scres::Result<FitResult>)> {
    traces.par_iter().map(|(r, t)| (r.clone(), fit_resonance(t))).collect()
}

pub fn mbfit(cfg: &Config, manifest_path: &Path, out: &Path) -> Result<(), CliError> {
    let (m, dir) = Manifest::load(manifest_path)?;
    let traces = load_traces(&m, &dir, &[TraceKind::Temperature])?;
    let fits = fit_all(&traces);
    let mut blocks = Vec::new();
    let mut fig_b = Figure::new(
        "fig2b",
        "fractional frequency shift versus temperature with Mattis-Bardeen curve",
        &[("temperature", "K"), ("delta_fr", "1"), ("model", "1")],
    );
    let mut fig_c = Figure::new(
        "fig2c",
        "inverse internal quality factor versus temperature with Mattis-Bardeen curve",
        &[("temperature", "K"), ("q_i_inv", "1"), ("model", "1")],
    );
    let mut ok = 0;
    let series = group_series(&fits);
    for ((material, label), list) in &series {
        let mut pts: Vec<MBPoint> = Vec::new();
        for (r, res) in list {
            match res {
                Ok(f) => pts.push(MBPoint {
                    t: r.temperature_k,
                    f_r: f.params.f_r,
                    q_i: f.params.q_i,
                }),
                Err(e) => warn(&format!("{}: {e}", r.path)),
            }
        }
        pts.sort_by(|a, b| a.t.total_cmp(&b.t));
        let mut block = json!({ "material": material, "label": label, "n_traces": list.len() });
        let Some(first) = pts.first().copied() else {
            block["result"] = error_json(&scres::Error::InsufficientSpan("no fitted temperature points".into()));
            blocks.push(block);
            continue;
        };
        let opts = MBFitOptions {
            exclude_below: cfg.mb_exclude_below_k,
            ..Default::default()
        };
        match fit_mb_sweep(&pts, first.f_r, &opts) {
            Ok(r) => {
                ok += 1;
                block["result"] = json!({
                    "alpha_k": qs(r.alpha_k, r.sigma_alpha_k, "1"),
                    "t_c": qs(r.t_c, r.sigma_t_c, "K"),
                    "q_i_inv_offset": qs(r.q_i_inv_offset, r.sigma_q_i_inv_offset, "1"),
                    "gap_ratio": q(r.gap_ratio, "1"),
                    "f_r0": q(r.f_r0, "Hz"),
                    "t_ref": q(r.t_ref, "K"),
                    "n_used": r.n_used,
                    "n_excluded": r.n_excluded,
                    "rms_residual": q(r.rms_residual, "1"),
                    "converged": r.converged,
                });
                let mat = r.material()?;
                let model = |t: f64| mb_observables(&mat, t, r.f_r0, r.t_ref).ok();
                let (mut rows_b, mut rows_c) = (Vec::new(), Vec::new());
                for p in &pts {
                    let o = model(p.t);
                    rows_b.push(vec![p.t, (p.f_r - r.f_r0) / r.f_r0, o.map_or(f64::NAN, |o| o.delta_fr)]);
                    rows_c.push(vec![p.t, 1.0 / p.q_i, o.map_or(f64::NAN, |o| o.q_i_inv + r.q_i_inv_offset)]);
                }
                let name = format!("{}_{}", slug(material), slug(label));
                fig_b.add(out, &format!("fig2b_{name}.dat"), &format!("{material} {label}"), &rows_b)?;
                fig_c.add(out, &format!("fig2c_{name}.dat"), &format!("{material} {label}"), &rows_c)?;
            }
            Err(e) => {
                warn(&format!("{material} {label}: {e}"));
                block["result"] = error_json(&e);
            }
        }
        blocks.push(block);
    }
    fig_b.finish(out)?;
    fig_c.finish(out)?;
    let fragment = json!({
        "dataset_id": m.dataset_id,
        "sweeps": blocks,
        "provenance": prov("mbfit", cfg, &dir, &manifest_name(manifest_path), &traces)?,
    });
    write_json(out, "mb_report.json", &fragment)?;
    if ok == 0 {
        return Err(CliError::Core(scres::Error::InsufficientSpan("no temperature sweep could be fitted".into())));
    }
    Ok(())
}

pub fn tlsfit(cfg: &Config, manifest_path: &Path, out: &Path) -> Result<(), CliError> {
    let (m, dir) = Manifest::load(manifest_path)?;
    let traces = load_traces(&m, &dir, &[TraceKind::Power])?;
    let fits = fit_all(&traces);
    let mut fig_b = Figure::new(
        "fig3b",
        "fractional frequency shift versus photon number",
        &[("photon_number", "1"), ("delta_fr", "1")],
    );
    let mut fig_c = Figure::new(
        "fig3c",
        "loss tangent versus photon number with TLS model",
        &[("photon_number", "1"), ("q_i_inv", "1"), ("model", "1")],
    );
    let mut blocks = Vec::new();
    let mut ok = 0;
    for ((material, label), mut list) in group_series(&fits) {
        list.sort_by(|a, b| a.0.device_power_dbm().total_cmp(&b.0.device_power_dbm()));
        let good: Vec<(&TraceRef, &FitResult)> = list
            .iter()
            .filter_map(|(r, res)| match res {
                Ok(f) => Some((r, f)),
                Err(e) => {
                    warn(&format!("{}: {e}", r.path));
                    None
                }
            })
            .collect();
        let rms: Vec<f64> = good.iter().map(|(_, f)| f.rms_residual).collect();
        let n_lin = linear_regime_len(&rms, cfg.linear_regime_factor);
        let mut block = json!({
            "material": material,
            "label": label,
            "n_traces": list.len(),
            "n_linear": n_lin,
        });
        let pts: Vec<(f64, f64, f64, f64)> = good[..n_lin]
            .iter()
            .map(|(r, f)| {
                let n = photon_number(&f.params, dbm_to_watts(r.device_power_dbm()));
                (n, f.params.q_i, f.params.f_r, r.temperature_k)
            })
            .collect();
        let name = format!("{}_{}", slug(&material), slug(&label));
        let shifts = scres::tls::delta_fr_vs_power(&pts.iter().map(|p| (p.0, p.2)).collect::<Vec<_>>());
        fig_b.add(out, &format!("fig3b_{name}.dat"), &format!("{material} {label}"), &shifts.iter().map(|&(n, d)| vec![n, d]).collect::<Vec<_>>())?;
        let Some(&(_, _, f_low, t)) = pts.first() else {
            block["result"] = error_json(&scres::Error::InsufficientSpan("no linear-regime points".into()));
            blocks.push(block);
            continue;
        };
        let tls_pts: Vec<TLSPoint> = pts.iter().map(|p| TLSPoint { n: p.0, q_i: p.1 }).collect();
        match fit_tls_sweep(&tls_pts, t, f_low) {
            Ok(r) => {
                ok += 1;
                let s = &r.sigmas;
                block["result"] = json!({
                    "n_c": qs(r.n_c, s.n_c, "1"),
                    "beta": qs(r.beta, s.beta, "1"),
                    "f_delta0": qs(r.f_delta0, s.f_delta0, "1"),
                    "q_i_sat": qs(r.q_i_sat, s.q_i_sat, "1"),
                    "f_r": q(r.f_r, "Hz"),
                    "temperature": q(r.t, "K"),
                    "rms_log_residual": q(r.rms_log_residual, "1"),
                    "n_points": r.n_points,
                    "converged": r.converged,
                });
                let p = r.params();
                let rows: Vec<Vec<f64>> = tls_pts.iter().map(|x| vec![x.n, 1.0 / x.q_i, tls_loss(x.n, &p, t, f_low)]).collect();
                fig_c.add(out, &format!("fig3c_{name}.dat"), &format!("{material} {label}"), &rows)?;
            }
            Err(e) => {
                warn(&format!("{material} {label}: {e}"));
                block["result"] = error_json(&e);
            }
        }
        blocks.push(block);
    }
    fig_b.finish(out)?;
    fig_c.finish(out)?;
    let fragment = json!({
        "dataset_id": m.dataset_id,
        "sweeps": blocks,
        "provenance": prov("tlsfit", cfg, &dir, &manifest_name(manifest_path), &traces)?,
    });
    write_json(out, "tls_report.json", &fragment)?;
    if ok == 0 {
        return Err(CliError::Core(scres::Error::Degenerate("no power sweep could be fitted".into())));
    }
    Ok(())
}

struct NlSeries {
    material: String,
    label: String,
    reference: scres::Result<FitResult>,
    fits: Vec<(TraceRef, scres::Result<NonlinearTraceFit>)>,
}

pub fn nlfit(cfg: &Config, manifest_path: &Path, out: &Path) -> Result<(), CliError> {
    let (m, dir) = Manifest::load(manifest_path)?;
    let traces = load_traces(&m, &dir, &[TraceKind::Nonlinear, TraceKind::Reference])?;
    let refs: Vec<(TraceRef, ComplexTrace)> = traces.iter().filter(|(r, _)| r.kind == TraceKind::Reference).cloned().collect();
    let nl: Vec<(TraceRef, ComplexTrace)> = traces.iter().filter(|(r, _)| r.kind == TraceKind::Nonlinear).cloned().collect();
    let groups = group_series(&nl);
    let series: Vec<NlSeries> = groups
        .par_iter()
        .map(|((material, label), list)| {
            let reference = refs
                .iter()
                .find(|(r, _)| &r.material == material && &r.label == label)
                .ok_or_else(|| scres::Error::Config(format!("no reference trace for {material} {label}")))
                .and_then(|(_, t)| fit_resonance(t));
            let fits = list
                .par_iter()
                .map(|(r, t)| {
                    let res = match &reference {
                        Ok(f) => fit_nonlinear_trace(t, &f.params, r.sweep),
                        Err(e) => Err(e.clone()),
                    };
                    (r.clone(), res)
                })
                .collect();
            NlSeries {
                material: material.clone(),
                label: label.clone(),
                reference,
                fits,
            }
        })
        .collect();

    // E* per series, then the kinetic constants needed for J*.
    let mut scales: Vec<Option<(NonlinearScale, f64, f64)>> = Vec::new();
    for s in &series {
        let entry = s.reference.as_ref().ok().and_then(|rf| {
            let ok: Vec<NonlinearTraceFit> = s.fits.iter().filter_map(|(_, f)| f.as_ref().ok().cloned()).collect();
            let scale = fit_a_vs_power(&ok, &rf.params).map_err(|e| warn(&format!("{} {}: {e}", s.material, s.label))).ok()?;
            let d = m.design(&s.material, &s.label)?;
            let k = extract_kinetic(d.f_sim, rf.params.f_r, d.l_g).map_err(|e| warn(&format!("{} {}: {e}", s.material, s.label))).ok()?;
            Some((scale, k.l_k, k.alpha_k))
        });
        scales.push(entry);
    }
    let geometry = cfg.geometry();
    let calibration = match cfg.jstar_calibration {
        Some(c) => Some(c),
        None => series
            .iter()
            .zip(&scales)
            .find(|(s, _)| s.label == cfg.jstar_reference_label && s.material == cfg.jstar_reference_material)
            .and_then(|(_, sc)| sc.as_ref())
            .and_then(|(sc, l_k, a_k)| calibrate_j_star(sc.e_star, *l_k, *a_k, &geometry, cfg.jstar_reference_value).ok()),
    };
    if calibration.is_none() {
        warn("J* not reported: no calibration factor and the reference series is missing");
    }

    let mut fig_a = Figure::new(
        "fig4a",
        "nonlinear transmission magnitude with model, frequency relative to the low-power resonance",
        &[("freq_offset", "Hz"), ("s21_mag", "dB"), ("model_mag", "dB")],
    );
    let mut fig_b = Figure::new(
        "fig4b",
        "nonlinearity parameter versus drive power with the zero-intercept line",
        &[("power", "W"), ("a", "1"), ("sigma_a", "1"), ("line", "1")],
    );
    let mut blocks = Vec::new();
    let mut ok = 0;
    for (s, sc) in series.iter().zip(&scales) {
        let name = format!("{}_{}", slug(&s.material), slug(&s.label));
        let mut per_power = Vec::new();
        for (r, f) in &s.fits {
            per_power.push(match f {
                Ok(f) => json!({
                    "file": r.path,
                    "device_power": q(r.device_power_dbm(), "dBm"),
                    "a": qs(f.a_param, f.sigma_a, "1"),
                    "rms_residual": q(f.rms_residual, "1"),
                    "branch": f.branch,
                    "linear": f.linear,
                    "converged": f.converged,
                }),
                Err(e) => {
                    warn(&format!("{}: {e}", r.path));
                    json!({ "file": r.path, "result": error_json(e) })
                }
            });
        }
        let mut block = json!({ "material": s.material, "label": s.label, "powers": per_power });
        match (&s.reference, sc) {
            (Err(e), _) => block["result"] = error_json(e),
            (Ok(_), None) => block["result"] = error_json(&scres::Error::Degenerate("E* could not be determined".into())),
            (Ok(rf), Some((scale, l_k, a_k))) => {
                ok += 1;
                let mut res = json!({
                    "e_star": qs(scale.e_star, scale.sigma_e_star, "J"),
                    "slope": qs(scale.slope, scale.sigma_slope, "1/W"),
                    "l_k": q(*l_k, "H/sq"),
                    "alpha_k": q(*a_k, "1"),
                    "n_powers": scale.n_powers,
                    "reference": fit_result_json(rf),
                });
                if let Some(v) = &scale.model_violation {
                    res["model_violation"] = json!(v);
                }
                if let Some(cal) = calibration {
                    match scale.clone().with_j_star(*l_k, *a_k, Some(&geometry), cal) {
                        Ok(j) => {
                            res["j_star"] = qs(j.j_star.unwrap_or(f64::NAN), j.sigma_j_star.unwrap_or(f64::NAN), "A/cm^2");
                            res["j_star_calibration"] = q(cal, "1");
                            res["geometry"] = json!({
                                "area": q(geometry.area_m2, "m^2"),
                                "length": q(geometry.length_m, "m"),
                            });
                        }
                        Err(e) => res["j_star"] = error_json(&e),
                    }
                }
                block["result"] = res;

                let p0 = rf.params;
                for (k, ((r, f), (_, t))) in s.fits.iter().zip(nl.iter().filter(|(r, _)| r.material == s.material && r.label == s.label)).enumerate() {
                    let Ok(f) = f else { continue };
                    let model = s21_nonlinear(&t.freqs, &f.params, f.a_param, f.branch).unwrap_or_else(|_| t.s21.clone());
                    let rows: Vec<Vec<f64>> = t
                        .freqs
                        .iter()
                        .zip(&t.s21)
                        .zip(&model)
                        .map(|((&fr, &z), &mz)| vec![fr - p0.f_r, db(z), db(mz)])
                        .collect();
                    fig_a.add(out, &format!("fig4a_{name}_{k:02}.dat"), &format!("{} {} {:.1} dBm", s.material, s.label, r.device_power_dbm()), &rows)?;
                }
                let rows: Vec<Vec<f64>> = s
                    .fits
                    .iter()
                    .filter_map(|(_, f)| f.as_ref().ok())
                    .filter_map(|f| f.power_w.map(|p| vec![p, f.a_param, f.sigma_a, scale.slope * p]))
                    .collect();
                fig_b.add(out, &format!("fig4b_{name}.dat"), &format!("{} {}", s.material, s.label), &rows)?;
            }
        }
        blocks.push(block);
    }
    fig_a.finish(out)?;
    fig_b.finish(out)?;
    let fragment = json!({
        "dataset_id": m.dataset_id,
        "series": blocks,
        "provenance": prov("nlfit", cfg, &dir, &manifest_name(manifest_path), &traces)?,
    });
    write_json(out, "nl_report.json", &fragment)?;
    if ok == 0 {
        return Err(CliError::Core(scres::Error::Degenerate("no nonlinear series could be fitted".into())));
    }
    Ok(())
}

/// Paired comparison of fitted `Q_i` between two materials, matched by design label.
pub fn compare(cfg: &Config, fits_path: &Path, out: &Path, materials: (&str, &str)) -> Result<(), CliError> {
    let report = read_json(fits_path)?;
    let entries = report["fits"]
        .as_array()
        .ok_or_else(|| CliError::Usage(format!("{}: no `fits` array", fits_path.display())))?;
    let q_i = |material: &str, label: &str| -> Option<f64> {
        entries
            .iter()
            .find(|e| e["material"] == material && e["label"] == label)
            .and_then(|e| e["result"]["q_i"]["value"].as_f64())
    };
    let mut labels: Vec<String> = entries
        .iter()
        .filter(|e| e["material"] == materials.0)
        .filter_map(|e| e["label"].as_str().map(String::from))
        .collect();
    labels.dedup();
    let (mut kept, mut a, mut b) = (Vec::new(), Vec::new(), Vec::new());
    for l in labels {
        if let (Some(x), Some(y)) = (q_i(materials.0, &l), q_i(materials.1, &l)) {
            kept.push(l);
            a.push(x);
            b.push(y);
        }
    }
    let sample = PairedSample::new(kept.clone(), a.clone(), b.clone())?;
    let r = paired_t_test(&sample)?;
    let rows: Vec<Vec<f64>> = (0..kept.len()).map(|k| vec![(k + 1) as f64, a[k], b[k]]).collect();
    let mut fig = Figure::new(
        "fig1d",
        "internal quality factor per design for the two materials",
        &[("design_index", "1"), ("q_i_a", "1"), ("q_i_b", "1")],
    );
    fig.add(out, "fig1d.dat", &format!("{} vs {}", materials.0, materials.1), &rows)?;
    fig.finish(out)?;
    let pairs: Vec<Value> = kept
        .iter()
        .zip(a.iter().zip(&b))
        .map(|(l, (x, y))| json!({ "label": l, "a": q(*x, "1"), "b": q(*y, "1") }))
        .collect();
    let fit_name = fits_path.file_name().and_then(|s| s.to_str()).unwrap_or("fit_report.json");
    let base = fits_path.parent().map(Path::to_path_buf).unwrap_or_else(PathBuf::new);
    let fragment = json!({
        "quantity": "q_i",
        "group_a": materials.0,
        "group_b": materials.1,
        "pairs": pairs,
        "t_statistic": r.t_statistic,
        "dof": r.dof,
        "p_value": r.p_value,
        "mean_difference": q(r.mean_difference, "1"),
        "ci95": [r.ci95.0, r.ci95.1],
        "degenerate": r.degenerate,
        "significance": r.p_value.map(significance_stars),
        "provenance": provenance("compare", cfg, &base, &[fit_name])?,
    });
    write_json(out, "compare_report.json", &fragment)
}

/// Merges every fragment present in `dir` into `report.json`.
pub fn report(dir: &Path) -> Result<(), CliError> {
    let mut merged = Map::new();
    let mut hashes = Map::new();
    for (key, file) in FRAGMENTS {
        let path = dir.join(file);
        if !path.exists() {
            continue;
        }
        hashes.insert(file.into(), json!(crate::report::sha256_file(&path)?));
        merged.insert(key.into(), read_json(&path)?);
    }
    if merged.is_empty() {
        return Err(CliError::Usage(format!("no report fragments in {}", dir.display())));
    }
    merged.insert(
        "provenance".into(),
        json!({
            "tool": crate::report::TOOL,
            "version": crate::report::VERSION,
            "fragments": hashes,
        }),
    );
    write_json(dir, "report.json", &Value::Object(merged))
}
