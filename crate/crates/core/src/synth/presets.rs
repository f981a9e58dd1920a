//! Built-in resonator and chip specifications.

use serde::{Deserialize, Serialize};

use super::{ChipSpec, Feedline, ResonatorSpec};
use crate::mb::MBMaterial;
use crate::model::ResonatorParams;
use crate::nonlinear::Geometry;
use crate::tls::TLSParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Material {
    #[serde(rename = "Nb")]
    Nb,
    #[serde(rename = "Nb/Au")]
    NbAu,
}

impl Material {
    pub const ALL: [Material; 2] = [Material::Nb, Material::NbAu];

    pub fn tag(self) -> &'static str {
        match self {
            Material::Nb => "Nb",
            Material::NbAu => "Nb/Au",
        }
    }

    /// File-name friendly tag.
    pub fn slug(self) -> &'static str {
        match self {
            Material::Nb => "nb",
            Material::NbAu => "nbau",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nb" => Some(Material::Nb),
            "nb/au" | "nbau" | "nb-au" => Some(Material::NbAu),
            _ => None,
        }
    }

    /// Mattis-Bardeen constants from the temperature sweeps.
    pub fn mb(self) -> MBMaterial {
        match self {
            Material::Nb => MBMaterial::new(8.7, 0.063),
            Material::NbAu => MBMaterial::new(7.3, 0.103),
        }
        .expect("valid constants")
    }

    /// Mean kinetic inductance from the simulated-vs-measured frequencies, H/sq.
    pub fn l_k(self) -> f64 {
        match self {
            Material::Nb => 0.13e-12,
            Material::NbAu => 0.22e-12,
        }
    }

    /// Mean kinetic fraction reported alongside `l_k`.
    pub fn alpha_k(self) -> f64 {
        match self {
            Material::Nb => 0.057,
            Material::NbAu => 0.094,
        }
    }

    /// Device power range where the nonlinear response was characterised, dBm.
    pub fn nonlinear_powers_dbm(self) -> (f64, f64) {
        match self {
            Material::Nb => (-44.0, -36.0),
            Material::NbAu => (-52.0, -44.0),
        }
    }
}

/// Geometric inductance per square, H/sq.
pub const L_G: f64 = 2.15e-12;

/// Coupling quality factor shared by all preset designs.
pub const Q_C: f64 = 7.9e4;

/// Designs with tabulated power-sweep and nonlinear results.
pub const TABLE_DESIGNS: [u32; 3] = [1, 4, 8];

/// One tabulated resonator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub design: u32,
    pub material: Material,
    /// Hz.
    pub f_r: f64,
    pub tls: TLSParams,
    /// J.
    pub e_star: f64,
    /// A/cm².
    pub j_star: f64,
}

fn row(design: u32, material: Material, f_r_ghz: f64, tls: [f64; 4], e_star: f64, j_star: f64) -> TableRow {
    TableRow {
        design,
        material,
        f_r: f_r_ghz * 1e9,
        tls: TLSParams {
            n_c: tls[0],
            beta: tls[1],
            f_delta0: tls[2],
            q_i_sat: tls[3],
        },
        e_star,
        j_star,
    }
}

/// Power-sweep TLS fits and nonlinear scales for LER1, LER4 and LER8.
pub fn table_rows() -> Vec<TableRow> {
    use Material::*;
    vec![
        row(1, Nb, 1.578422, [1.02e9, 8.46e-2, 2.48e-6, 8.80e5], 7.50e-7, 4.27e8),
        row(1, NbAu, 1.551530, [4.41e5, 3.05e-2, 8.77e-7, 9.64e5], 1.16e-7, 2.10e8),
        row(4, Nb, 1.644296, [7.46e8, 1.14e-1, 1.81e-6, 8.72e5], 7.28e-7, 4.21e8),
        row(4, NbAu, 1.613699, [3.40e6, 4.81e-2, 6.07e-7, 9.99e5], 9.03e-8, 1.85e8),
        row(8, Nb, 1.797254, [6.93e7, 1.15e-1, 1.97e-6, 9.52e5], 5.49e-7, 3.65e8),
        row(8, NbAu, 1.753702, [2.59e6, 4.65e-2, 9.74e-7, 9.91e5], 7.33e-8, 1.67e8),
    ]
}

pub fn table_row(design: u32, material: Material) -> Option<TableRow> {
    table_rows().into_iter().find(|r| r.design == design && r.material == material)
}

/// The LER8 Nb/Au resonator of the single-trace spectrum example (−96 dBm).
pub fn fig1c_params() -> ResonatorParams {
    ResonatorParams::from_qc(1.7537e9, 1.18e6, Q_C, 0.0).expect("valid constants")
}

/// Nominal inductor geometry for the J* conversion: 10 µm × 100 nm strip, 1 mm long.
pub fn nominal_geometry() -> Geometry {
    Geometry {
        area_m2: 10e-6 * 100e-9,
        length_m: 1e-3,
    }
}

// Piecewise-linear in design index through the tabulated designs, extrapolated
// with the end slopes.
fn interp(design: u32, xs: &[f64; 3], ys: &[f64; 3]) -> f64 {
    let x = design as f64;
    let k = if x <= xs[1] { 0 } else { 1 };
    ys[k] + (ys[k + 1] - ys[k]) * (x - xs[k]) / (xs[k + 1] - xs[k])
}

fn interp_clamped_log(design: u32, xs: &[f64; 3], ys: &[f64; 3]) -> f64 {
    let x = (design as f64).clamp(xs[0], xs[2]) as u32;
    let logs = ys.map(f64::ln);
    interp(x, xs, &logs).exp()
}

/// Preset resonator for `design` (1–12) on a chip of `material`.
pub fn paper_resonator(design: u32, material: Material) -> ResonatorSpec {
    let rows: Vec<TableRow> = TABLE_DESIGNS
        .iter()
        .map(|&d| table_row(d, material).expect("tabulated"))
        .collect();
    let xs = [1.0, 4.0, 8.0];
    let pick = |f: &dyn Fn(&TableRow) -> f64| [f(&rows[0]), f(&rows[1]), f(&rows[2])];
    let f_r = interp(design, &xs, &pick(&|r| r.f_r));
    let tls = TLSParams {
        n_c: interp_clamped_log(design, &xs, &pick(&|r| r.tls.n_c)),
        beta: interp_clamped_log(design, &xs, &pick(&|r| r.tls.beta)),
        f_delta0: interp_clamped_log(design, &xs, &pick(&|r| r.tls.f_delta0)),
        q_i_sat: interp_clamped_log(design, &xs, &pick(&|r| r.tls.q_i_sat)),
    };
    let e_star = interp_clamped_log(design, &xs, &pick(&|r| r.e_star));
    let q_i = 1.0 / (tls.f_delta0 + 1.0 / tls.q_i_sat);
    ResonatorSpec {
        label: format!("LER{design}"),
        params: ResonatorParams::from_qc(f_r, q_i, Q_C, 0.0).expect("valid constants"),
        mb: Some(material.mb()),
        tls: Some(tls),
        e_star: Some(e_star),
        tls_shift_coeff: 1.0,
    }
}

/// Simulated (perfect-conductor) frequency consistent with the material's mean `L_k`.
pub fn simulated_frequency(f_meas: f64, material: Material) -> f64 {
    f_meas * (1.0 + material.l_k() / L_G).sqrt()
}

/// Chip seed for `material`, derived from a dataset seed so the two chips draw independent noise.
pub fn material_seed(seed: u64, material: Material) -> u64 {
    use rand::RngCore;
    let idx = Material::ALL.iter().position(|&m| m == material).expect("listed") as u64;
    super::rng_for(seed, u64::MAX - idx).next_u64()
}

/// Twelve-design chip of one material behind a feedline with 30 ns of cable delay.
pub fn paper_chip(material: Material, seed: u64) -> ChipSpec {
    let mut chip = ChipSpec::new(
        (1..=12).map(|d| paper_resonator(d, material)).collect(),
        material_seed(seed, material),
    );
    chip.feedline = Feedline {
        amp: 0.8,
        alpha: 0.4,
        tau: 30e-9,
    };
    chip
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tabulated_designs_reproduce_rows() {
        for r in table_rows() {
            let spec = paper_resonator(r.design, r.material);
            assert!((spec.params.f_r - r.f_r).abs() < 1e-3);
            let t = spec.tls.unwrap();
            assert!((t.n_c / r.tls.n_c - 1.0).abs() < 1e-12);
            assert!((spec.e_star.unwrap() / r.e_star - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn chips_are_well_separated() {
        for m in Material::ALL {
            paper_chip(m, 0).validate().unwrap();
        }
    }

    #[test]
    fn kinetic_fraction_matches_mean_values() {
        for m in Material::ALL {
            let a = m.l_k() / (m.l_k() + L_G);
            assert!((a - m.alpha_k()).abs() < 2e-3, "{a}");
        }
    }
}
