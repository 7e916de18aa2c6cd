use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not Hermitian: max |M - M^dagger| = {deviation:e}")]
    NotHermitian { deviation: f64 },

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("integrator diverged: step size underflow at t = {last_t}")]
    Divergence { last_t: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unknown family '{name}' (valid families: {valid})")]
    UnknownFamily { name: String, valid: String },

    #[error("partner operator is singular at eps = {eps}")]
    SingularPartner { eps: f64 },

    #[error("model family '{0}' has no zero-curvature partner")]
    MissingPartner(String),

    #[error("spectrum mismatch: {0}")]
    SpectrumMismatch(String),

    #[error("unsupported: {0}")]
    Unsupported(String),
}
