//! Python bindings for the `scres` resonator library.
//!
//! Parameter sets are classes; fit results come back as plain dicts.

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use scres::mb::{MBFitOptions, MBPoint};
use scres::nonlinear::SweepDirection;
use scres::synth::{ChipSpec, Conditions, ResonatorSpec};
use scres::tls::TLSPoint;
use scres::{Complex64, ComplexTrace};

create_exception!(scres_py, ScresError, PyException);

fn err(e: scres::Error) -> PyErr {
    ScresError::new_err(e.to_string())
}

fn json_to_py(py: Python<'_>, v: &serde_json::Value) -> PyResult<Py<PyAny>> {
    use serde_json::Value;
    Ok(match v {
        Value::Null => py.None(),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any().unbind(),
        Value::Number(n) => match (n.as_i64(), n.as_f64()) {
            (Some(i), _) => i.into_pyobject(py)?.into_any().unbind(),
            (None, Some(f)) => f.into_pyobject(py)?.into_any().unbind(),
            _ => py.None(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any().unbind(),
        Value::Array(a) => {
            let items = a.iter().map(|x| json_to_py(py, x)).collect::<PyResult<Vec<_>>>()?;
            PyList::new(py, items)?.into_any().unbind()
        }
        Value::Object(o) => {
            let d = PyDict::new(py);
            for (k, x) in o {
                d.set_item(k, json_to_py(py, x)?)?;
            }
            d.into_any().unbind()
        }
    })
}

fn to_dict<T: serde::Serialize>(py: Python<'_>, x: &T) -> PyResult<Py<PyAny>> {
    let v = serde_json::to_value(x).map_err(|e| ScresError::new_err(e.to_string()))?;
    json_to_py(py, &v)
}

fn direction(s: &str) -> PyResult<SweepDirection> {
    match s {
        "up" => Ok(SweepDirection::Up),
        "down" => Ok(SweepDirection::Down),
        other => Err(ScresError::new_err(format!("sweep must be 'up' or 'down', got '{other}'"))),
    }
}

/// Notch-resonator parameters.
#[pyclass(name = "ResonatorParams", from_py_object)]
#[derive(Clone)]
struct PyParams(scres::ResonatorParams);

#[pymethods]
impl PyParams {
    #[new]
    #[pyo3(signature = (f_r, q_i, q_c, phi=0.0, amp=1.0, alpha=0.0, tau=0.0))]
    fn new(f_r: f64, q_i: f64, q_c: f64, phi: f64, amp: f64, alpha: f64, tau: f64) -> PyResult<Self> {
        let p = scres::ResonatorParams::from_qc(f_r, q_i, q_c, phi)
            .map_err(err)?
            .with_environment(amp, alpha, tau);
        p.validate().map_err(err)?;
        Ok(Self(p))
    }

    #[getter]
    fn f_r(&self) -> f64 {
        self.0.f_r
    }
    #[getter]
    fn q_i(&self) -> f64 {
        self.0.q_i
    }
    #[getter]
    fn q_c(&self) -> f64 {
        self.0.q_c()
    }
    #[getter]
    fn q_l(&self) -> f64 {
        self.0.q_l()
    }
    #[getter]
    fn q_e_mag(&self) -> f64 {
        self.0.q_e_mag
    }
    #[getter]
    fn phi(&self) -> f64 {
        self.0.phi
    }
    #[getter]
    fn amp(&self) -> f64 {
        self.0.amp
    }
    #[getter]
    fn alpha(&self) -> f64 {
        self.0.alpha
    }
    #[getter]
    fn tau(&self) -> f64 {
        self.0.tau
    }
    #[getter]
    fn linewidth(&self) -> f64 {
        self.0.linewidth()
    }

    fn __repr__(&self) -> String {
        format!(
            "ResonatorParams(f_r={:e}, q_i={:e}, q_c={:e}, phi={})",
            self.0.f_r,
            self.0.q_i,
            self.0.q_c(),
            self.0.phi
        )
    }
}

/// Superconductor description for Mattis-Bardeen calculations.
#[pyclass(name = "MBMaterial", from_py_object)]
#[derive(Clone)]
struct PyMaterial(scres::mb::MBMaterial);

#[pymethods]
impl PyMaterial {
    #[new]
    fn new(t_c: f64, alpha_k: f64) -> PyResult<Self> {
        scres::mb::MBMaterial::new(t_c, alpha_k).map(Self).map_err(err)
    }
    #[getter]
    fn t_c(&self) -> f64 {
        self.0.t_c
    }
    #[getter]
    fn alpha_k(&self) -> f64 {
        self.0.alpha_k
    }
    /// Gap energy at temperature `t`, J.
    fn gap(&self, t: f64) -> f64 {
        scres::mb::gap_at_temperature(&self.0, t)
    }
    /// `(Δf_r/f_r, 1/Q_i)` at `t` relative to `t_ref`.
    fn observables(&self, t: f64, f_r0: f64, t_ref: f64) -> PyResult<(f64, f64)> {
        let o = scres::mb::mb_observables(&self.0, t, f_r0, t_ref).map_err(err)?;
        Ok((o.delta_fr, o.q_i_inv))
    }
}

/// Two-level-system loss parameters.
#[pyclass(name = "TLSParams", from_py_object)]
#[derive(Clone)]
struct PyTls(scres::tls::TLSParams);

#[pymethods]
impl PyTls {
    #[new]
    fn new(n_c: f64, beta: f64, f_delta0: f64, q_i_sat: f64) -> PyResult<Self> {
        let p = scres::tls::TLSParams {
            n_c,
            beta,
            f_delta0,
            q_i_sat,
        };
        p.validate().map_err(err)?;
        Ok(Self(p))
    }
    /// Loss tangent at photon number `n`.
    fn loss(&self, n: f64, t: f64, f_r: f64) -> f64 {
        scres::tls::tls_loss(n, &self.0, t, f_r)
    }
}

#[pyfunction]
fn s21_notch(freqs: Vec<f64>, params: &PyParams) -> PyResult<Vec<Complex64>> {
    scres::model::s21_notch(&freqs, &params.0).map_err(err)
}

/// Mean photon number at the given device power (dBm).
#[pyfunction]
fn photon_number(params: &PyParams, power_dbm: f64) -> f64 {
    scres::model::photon_number(&params.0, scres::model::dbm_to_watts(power_dbm))
}

/// Noisy single-resonance trace; `sigma` is per quadrature.
#[pyfunction]
#[pyo3(signature = (params, freqs, sigma=1e-3, seed=0))]
fn simulate(params: &PyParams, freqs: Vec<f64>, sigma: f64, seed: u64) -> PyResult<Vec<Complex64>> {
    let mut chip = ChipSpec::new(vec![ResonatorSpec::simple("r", params.0)], seed);
    chip.feedline.amp = params.0.amp;
    chip.feedline.alpha = params.0.alpha;
    chip.feedline.tau = params.0.tau;
    chip.noise.sigma = sigma;
    let t = scres::synth::simulate_trace(&chip, 0, &freqs, &Conditions::new(chip.t_ref, -140.0), 0).map_err(err)?;
    Ok(t.s21)
}

#[pyfunction]
fn fit_resonance(py: Python<'_>, freqs: Vec<f64>, s21: Vec<Complex64>) -> PyResult<Py<PyAny>> {
    let trace = ComplexTrace::new(freqs, s21).map_err(err)?;
    let r = py.detach(|| scres::resfit::fit_resonance(&trace)).map_err(err)?;
    to_dict(py, &r)
}

/// Reads a CSV or Touchstone trace; returns `(freqs, s21)`.
#[pyfunction]
fn read_trace(path: std::path::PathBuf) -> PyResult<(Vec<f64>, Vec<Complex64>)> {
    let t = scres::io::read_trace(&path).map_err(err)?;
    Ok((t.freqs, t.s21))
}

#[pyfunction]
fn fit_mb_sweep(py: Python<'_>, t: Vec<f64>, f_r: Vec<f64>, q_i: Vec<f64>, f_r0: f64) -> PyResult<Py<PyAny>> {
    if t.len() != f_r.len() || t.len() != q_i.len() {
        return Err(ScresError::new_err("t, f_r and q_i must have equal length"));
    }
    let pts: Vec<MBPoint> = (0..t.len()).map(|k| MBPoint { t: t[k], f_r: f_r[k], q_i: q_i[k] }).collect();
    let r = scres::mb::fit_mb_sweep(&pts, f_r0, &MBFitOptions::default()).map_err(err)?;
    to_dict(py, &r)
}

#[pyfunction]
fn fit_tls_sweep(py: Python<'_>, n: Vec<f64>, q_i: Vec<f64>, t: f64, f_r: f64) -> PyResult<Py<PyAny>> {
    if n.len() != q_i.len() {
        return Err(ScresError::new_err("n and q_i must have equal length"));
    }
    let pts: Vec<TLSPoint> = n.iter().zip(&q_i).map(|(&n, &q_i)| TLSPoint { n, q_i }).collect();
    let r = scres::tls::fit_tls_sweep(&pts, t, f_r).map_err(err)?;
    to_dict(py, &r)
}

/// Real roots of the nonlinear detuning cubic.
#[pyfunction]
fn nl_detuning_roots(y0: f64, a: f64) -> Vec<f64> {
    scres::nonlinear::nl_detuning_roots(y0, a)
}

#[pyfunction]
#[pyo3(signature = (freqs, params, a, sweep="up"))]
fn s21_nonlinear(freqs: Vec<f64>, params: &PyParams, a: f64, sweep: &str) -> PyResult<Vec<Complex64>> {
    scres::nonlinear::s21_nonlinear(&freqs, &params.0, a, direction(sweep)?).map_err(err)
}

#[pyfunction]
fn paired_t_test(py: Python<'_>, labels: Vec<String>, group_a: Vec<f64>, group_b: Vec<f64>) -> PyResult<Py<PyAny>> {
    let s = scres::stats::PairedSample::new(labels, group_a, group_b).map_err(err)?;
    let r = scres::stats::paired_t_test(&s).map_err(err)?;
    let d = to_dict(py, &r)?;
    let stars = r.p_value.map(scres::stats::significance_stars).unwrap_or("***");
    d.bind(py).set_item("significance", stars)?;
    Ok(d)
}

#[pymodule]
fn scres_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("ScresError", m.py().get_type::<ScresError>())?;
    m.add("A_CRIT", scres::nonlinear::A_CRIT)?;
    m.add_class::<PyParams>()?;
    m.add_class::<PyMaterial>()?;
    m.add_class::<PyTls>()?;
    m.add_function(wrap_pyfunction!(s21_notch, m)?)?;
    m.add_function(wrap_pyfunction!(photon_number, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(fit_resonance, m)?)?;
    m.add_function(wrap_pyfunction!(read_trace, m)?)?;
    m.add_function(wrap_pyfunction!(fit_mb_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(fit_tls_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(nl_detuning_roots, m)?)?;
    m.add_function(wrap_pyfunction!(s21_nonlinear, m)?)?;
    m.add_function(wrap_pyfunction!(paired_t_test, m)?)?;
    Ok(())
}
