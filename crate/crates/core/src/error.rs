use thiserror::Error;

/// Errors raised across the analysis chain.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A model parameter is outside its physical domain.
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParam { field: &'static str, reason: String },

    /// A trace violates its structural invariants.
    #[error("invalid trace: {0}")]
    InvalidTrace(String),

    /// The trace cannot support a fit (too narrow, too few points, ...).
    #[error("unfittable trace: {0}")]
    Unfittable(String),

    /// Points are collinear or otherwise do not define a circle.
    #[error("degenerate geometry: {0}")]
    Geometry(String),

    /// The data cannot identify one or more model parameters.
    #[error("degenerate fit: {0}")]
    Degenerate(String),

    /// Photon energy at or above the pair-breaking threshold.
    #[error("photon energy {hf:.4e} J exceeds pair-breaking threshold 2Δ = {two_gap:.4e} J")]
    PairBreaking { hf: f64, two_gap: f64 },

    /// An input combination that cannot occur physically.
    #[error("unphysical input: {0}")]
    Unphysical(String),

    /// Sweep does not span enough of the model's dynamic range.
    #[error("insufficient span: {0}")]
    InsufficientSpan(String),

    /// Iterative simulation failed to settle.
    #[error("simulation error: {0}")]
    Simulation(String),

    /// Malformed input file.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Filesystem failure.
    #[error("io error: {0}")]
    Io(String),

    /// Missing required configuration.
    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParam {
        field,
        reason: reason.into(),
    }
}
