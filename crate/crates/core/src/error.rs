use nalgebra::Complex;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("case parse error at `{path}` (line {line}, column {column}): {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("duplicate {kind} id \"{id}\"")]
    DuplicateId { kind: &'static str, id: String },

    #[error("{owner} references unknown {kind} \"{id}\"")]
    DanglingReference {
        owner: String,
        kind: &'static str,
        id: String,
    },

    #[error("invalid value: {0}")]
    Invalid(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("heterogeneous droop gains: {0}")]
    HeterogeneousDroop(String),

    #[error("singular eliminated block in Kron reduction (smallest singular value {sigma_min:.3e})")]
    SingularBlock { sigma_min: f64 },

    #[error("operating point outside the ±π/2 angle wedge on {branch} (angle difference {angle:.4} rad)")]
    AngleWedge { branch: String, angle: f64 },

    #[error("weak-grid violation: gamma_l = {gamma_l:.6e} must be positive")]
    WeakGrid { gamma_l: f64 },

    #[error("resolvent (λI + m_p K_ii) singular at λ = {lambda}")]
    ResolventSingular { lambda: Complex<f64> },

    #[error("repeated mode at λ = {lambda}: {count} singular values below tolerance")]
    RepeatedMode { lambda: Complex<f64>, count: usize },

    #[error("λ = {lambda} is not on the spectrum (σ_min/σ_max = {ratio:.3e})")]
    NotOnSpectrum { lambda: Complex<f64>, ratio: f64 },

    #[error("mode tracking ambiguous near λ = {lambda} (eigenvector overlap {overlap:.3}); shrink the step")]
    ModeTracking { lambda: Complex<f64>, overlap: f64 },

    #[error("eigensolver failure: {0}")]
    Eigensolver(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    /// CLI exit status: 1 for input/validation problems, 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::DuplicateId { .. }
            | Error::DanglingReference { .. }
            | Error::Invalid(_)
            | Error::DimensionMismatch(_)
            | Error::HeterogeneousDroop(_)
            | Error::AngleWedge { .. }
            | Error::WeakGrid { .. } => 1,
            _ => 2,
        }
    }
}
