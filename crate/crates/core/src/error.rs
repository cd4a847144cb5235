use num_complex::Complex64;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the numerical pipeline can report.
///
/// Variants fall in two families: malformed input (shapes, flags, model
/// constraints) and failed numerical certificates. [`Error::is_input_error`]
/// tells them apart.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("matrix is {rows}x{cols}, expected square")]
    NonSquare { rows: usize, cols: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("leading coefficient is not the identity")]
    NotMonic,

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid driver: {0}")]
    InvalidDriver(String),

    #[error("invalid grouping: {0}")]
    InvalidGrouping(String),

    #[error("companion matrix is numerically defective (eigenvector condition {cond:.3e})")]
    DefectiveCompanion { cond: f64 },

    #[error("latent roots {first} and {second} coincide within tolerance")]
    DuplicateLatentRoot { first: Complex64, second: Complex64 },

    #[error("latent-vector block {group} is singular (condition {cond:.3e})")]
    SingularGroup { group: usize, cond: f64 },

    #[error("solvent set is not complete: {0}")]
    IncompleteSet(String),

    #[error("right solvent {index} has residual {residual:.3e} above tolerance {tolerance:.3e}")]
    SolventResidual {
        index: usize,
        residual: f64,
        tolerance: f64,
    },

    #[error("block Vandermonde matrix is singular (condition {cond:.3e})")]
    SingularVandermonde { cond: f64 },

    #[error("partial product M_{k} is singular at its solvent")]
    SingularMk { k: usize },

    #[error("A(λ) and B(λ) are not left coprime at latent root {witness}")]
    NotIrreducible { witness: Complex64 },

    #[error("evaluation point {lambda} lies on a pole")]
    PoleHit { lambda: Complex64 },

    #[error("{what}: imaginary part {magnitude:.3e} exceeds tolerance")]
    ImaginaryLeak { what: &'static str, magnitude: f64 },

    #[error("model is not stationary (max real part of latent roots {max_re:.6})")]
    NotStationary { max_re: f64 },

    #[error("Sylvester equation is singular (spectral gap {gap:.3e})")]
    SylvesterSingular { gap: f64 },

    #[error("sampling aliases latent roots {first} and {second}")]
    AliasedSampling { first: Complex64, second: Complex64 },

    #[error("leading sampled coefficient Ψ_p is singular")]
    SingularPsi,

    #[error("matrix is not positive definite: {0}")]
    NotPd(String),

    #[error("innovations algorithm did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("series of length {len} is too short for {max_lag} lags")]
    TooShort { len: usize, max_lag: usize },

    #[error("covariance factorisation failed (min eigenvalue {min_eig:.3e})")]
    CholeskyFail { min_eig: f64 },

    #[error("eigenvalue iteration failed to converge")]
    EigenFailure,

    #[error("internal identity violated: {0}")]
    Identity(String),
}

impl Error {
    /// Stable identifier used in CLI messages.
    pub fn name(&self) -> &'static str {
        match self {
            Error::NonSquare { .. } => "NonSquare",
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::NotMonic => "NotMonic",
            Error::InvalidModel(_) => "InvalidModel",
            Error::InvalidDriver(_) => "InvalidDriver",
            Error::InvalidGrouping(_) => "InvalidGrouping",
            Error::DefectiveCompanion { .. } => "DefectiveCompanion",
            Error::DuplicateLatentRoot { .. } => "DuplicateLatentRoot",
            Error::SingularGroup { .. } => "SingularGroup",
            Error::IncompleteSet(_) => "IncompleteSet",
            Error::SolventResidual { .. } => "SolventResidual",
            Error::SingularVandermonde { .. } => "SingularVandermonde",
            Error::SingularMk { .. } => "SingularM_k",
            Error::NotIrreducible { .. } => "NotIrreducible",
            Error::PoleHit { .. } => "PoleHit",
            Error::ImaginaryLeak { .. } => "ImaginaryLeak",
            Error::NotStationary { .. } => "NotStationary",
            Error::SylvesterSingular { .. } => "SylvesterSingular",
            Error::AliasedSampling { .. } => "AliasedSampling",
            Error::SingularPsi => "SingularPsi",
            Error::NotPd(_) => "NotPD",
            Error::NoConvergence { .. } => "NoConvergence",
            Error::TooShort { .. } => "TooShort",
            Error::CholeskyFail { .. } => "CholeskyFail",
            Error::EigenFailure => "EigenFailure",
            Error::Identity(_) => "Identity",
        }
    }

    /// True for errors caused by malformed input rather than a failed
    /// numerical certificate.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::NonSquare { .. }
                | Error::DimensionMismatch(_)
                | Error::NotMonic
                | Error::InvalidModel(_)
                | Error::InvalidDriver(_)
                | Error::InvalidGrouping(_)
                | Error::TooShort { .. }
        )
    }
}
