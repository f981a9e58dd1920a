//! Characterization toolkit for superconducting coplanar-waveguide resonators.
//!
//! Fits notch-type S21 traces, models the quasiparticle response with
//! Mattis-Bardeen theory, analyses two-level-system loss and the nonlinear
//! kinetic inductance, and generates synthetic data with known ground truth.

pub mod constants;
pub mod error;
pub mod io;
pub mod lsq;
pub mod mb;
pub mod model;
pub mod nonlinear;
pub mod quad;
pub mod resfit;
pub mod stats;
pub mod synth;
pub mod tls;

pub use error::{Error, Result};
pub use num_complex::Complex64;
pub use model::{ComplexTrace, ResonatorParams};
