use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

use scres::synth::presets::{self, Material};
use scres::synth::{self, Conditions};

fn scres(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scres")).args(args).output().expect("spawn scres")
}

fn ok(args: &[&str]) {
    let o = scres(args);
    assert!(o.status.success(), "scres {args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn pipeline(out: &Path, jobs: &str) {
    let o = out.to_str().unwrap();
    ok(&["simulate", "--preset", "paper-chip", "--seed", "7", "--out", o, "--jobs", jobs]);
    ok(&["fit", "--out", o, "--jobs", jobs]);
    ok(&["compare", "--out", o]);
    ok(&["report", "--out", o]);
}

#[test]
fn pipeline_is_deterministic_across_job_counts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    pipeline(a.path(), "1");
    pipeline(b.path(), "4");
    let ra = std::fs::read(a.path().join("report.json")).unwrap();
    let rb = std::fs::read(b.path().join("report.json")).unwrap();
    assert!(ra == rb, "report.json differs between --jobs 1 and --jobs 4");

    let r: Value = serde_json::from_slice(&ra).unwrap();
    let fits = r["fit"]["fits"].as_array().unwrap();
    assert_eq!(fits.len(), 24);
    for f in fits {
        let q_c = f["result"]["q_c"]["value"].as_f64().unwrap();
        assert!((q_c / presets::Q_C - 1.0).abs() < 0.02, "{}: q_c {q_c}", f["label"]);
    }
    assert_eq!(r["compare"]["significance"], "***");
    assert!(r["compare"]["p_value"].as_f64().unwrap() < 1e-3);
    assert!(r["provenance"]["fragments"].is_object());
}

#[test]
fn written_spectrum_matches_in_memory_simulation() {
    let d = tempfile::tempdir().unwrap();
    let o = d.path().to_str().unwrap();
    ok(&["simulate", "--preset", "paper-chip", "--seed", "11", "--out", o]);
    let on_disk = scres::io::read_trace(&d.path().join("traces/nb_spectrum.csv")).unwrap();

    let chip = presets::paper_chip(Material::Nb, 11);
    let cond = Conditions::new(0.015, -100.0);
    let grid = synth::chip_grid(&chip, &cond, 401, 10.0, 20).unwrap();
    let mem = synth::simulate_chip(&chip, &grid, &cond, 0).unwrap();
    assert_eq!(on_disk.len(), mem.len());
    for k in 0..mem.len() {
        assert_eq!(on_disk.freqs[k].to_bits(), mem.freqs[k].to_bits());
        assert_eq!(on_disk.s21[k].re.to_bits(), mem.s21[k].re.to_bits());
        assert_eq!(on_disk.s21[k].im.to_bits(), mem.s21[k].im.to_bits());
    }
}

#[test]
fn tlsfit_recovers_ler8_nb_row() {
    let d = tempfile::tempdir().unwrap();
    let o = d.path().to_str().unwrap();
    ok(&["simulate", "--preset", "paper-chip", "--seed", "7", "--out", o]);
    ok(&["tlsfit", "--out", o, "--jobs", "4"]);
    let r = json(&d.path().join("tls_report.json"));
    let s = r["sweeps"]
        .as_array()
        .unwrap()
        .iter()
        .find(|s| s["material"] == "Nb" && s["label"] == "LER8")
        .expect("LER8 Nb sweep");
    let row = presets::table_row(8, Material::Nb).unwrap();
    let truth = [
        ("n_c", row.tls.n_c),
        ("beta", row.tls.beta),
        ("f_delta0", row.tls.f_delta0),
        ("q_i_sat", row.tls.q_i_sat),
    ];
    for (k, t) in truth {
        let v = s["result"][k]["value"].as_f64().unwrap();
        let sig = s["result"][k]["sigma"].as_f64().unwrap();
        assert!((v - t).abs() <= 3.0 * sig, "{k}: {v} ± {sig} vs {t}");
    }
    let n_c = s["result"]["n_c"]["value"].as_f64().unwrap();
    assert!((n_c / row.tls.n_c - 1.0).abs() < 0.15);
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(scres(&["fit", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(scres(&["simulate", "--preset", "nope", "--out", "/tmp"]).status.code(), Some(1));

    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("c.toml");
    std::fs::write(&cfg, "noise_sigmaa = 1\n").unwrap();
    let o = scres(&["simulate", "--preset", "paper-chip", "--config", cfg.to_str().unwrap(), "--out", d.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let diag: Value = serde_json::from_slice(o.stderr.trim_ascii()).unwrap();
    assert_eq!(diag["kind"], "usage");
}

fn manifest_with_spectrum(dir: &Path, csv: &str) {
    std::fs::create_dir_all(dir.join("traces")).unwrap();
    std::fs::write(dir.join("traces/s.csv"), csv).unwrap();
    let m = serde_json::json!({
        "dataset_id": "t",
        "chips": [{ "material": "Nb", "designs": [{ "label": "LER1", "l_g": 2.15e-12, "f_sim": 1.6e9 }] }],
        "traces": [{
            "path": "traces/s.csv", "label": "chip", "material": "Nb", "kind": "spectrum",
            "temperature_k": 0.015, "source_power_dbm": -40.0, "attenuation_db": 60.0, "sweep": "up"
        }]
    });
    std::fs::write(dir.join("manifest.json"), m.to_string()).unwrap();
}

#[test]
fn input_errors_exit_2() {
    let d = tempfile::tempdir().unwrap();
    let o = d.path().to_str().unwrap();
    assert_eq!(scres(&["fit", "--out", o]).status.code(), Some(2), "missing manifest");

    manifest_with_spectrum(d.path(), "freq_hz,s21_re,s21_im\n1e9,1,0\n2e9,oops,0\n");
    let out = scres(&["fit", "--out", o]);
    assert_eq!(out.status.code(), Some(2));
    let diag: Value = serde_json::from_slice(out.stderr.trim_ascii()).unwrap();
    assert_eq!(diag["kind"], "parse");
    assert_eq!(diag["line"], 3);
}

#[test]
fn unfittable_data_exits_3() {
    let d = tempfile::tempdir().unwrap();
    let mut csv = String::from("freq_hz,s21_re,s21_im\n");
    for k in 0..400 {
        csv.push_str(&format!("{:e},1,0\n", 1.6e9 + k as f64 * 1e3));
    }
    manifest_with_spectrum(d.path(), &csv);
    let out = scres(&["fit", "--out", d.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}
