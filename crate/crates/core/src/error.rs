use thiserror::Error;

/// Errors raised by the simulation, estimation and inference routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("integration step too coarse: dt*omega = {0:.3e} exceeds 0.1")]
    UnstableStep(f64),

    #[error("carrier plus modulation bandwidth {required:.6e} Hz exceeds Nyquist frequency {nyquist:.6e} Hz")]
    Aliasing { required: f64, nyquist: f64 },

    #[error("input is empty")]
    EmptyInput,

    #[error("input too short: need at least {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("frequency grids do not match")]
    GridMismatch,

    #[error("grid half-width {half_width:.6e} Hz is too narrow; need at least {required:.6e} Hz")]
    InsufficientSpan { half_width: f64, required: f64 },

    #[error("grid spacing {df:.6e} Hz does not resolve the linewidth; need df <= {max_df:.6e} Hz")]
    Resolution { df: f64, max_df: f64 },

    #[error("quadrature node gives non-positive intensity 1 + r = {0:.3e}")]
    Domain(f64),

    #[error("model spectrum is non-positive at bin {0}")]
    NonPositiveModel(usize),

    #[error("nuisance parameters are unidentifiable: {0}")]
    Degenerate(String),

    #[error("fit window has {got} bins, need at least {needed}")]
    WindowTooSmall { needed: usize, got: usize },

    #[error("{failed} of {total} ensemble runs did not converge")]
    EnsembleNonConvergence { failed: usize, total: usize },

    #[error("input file not found: {0}")]
    InputNotFound(String),

    #[error("malformed input file {path}: {reason}")]
    MalformedInput { path: String, reason: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Validation-class errors, as opposed to runtime failures.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidConfig(_)
                | Error::UnstableStep(_)
                | Error::Aliasing { .. }
                | Error::EmptyInput
                | Error::TooShort { .. }
                | Error::GridMismatch
                | Error::InsufficientSpan { .. }
                | Error::Resolution { .. }
                | Error::Domain(_)
                | Error::WindowTooSmall { .. }
                | Error::InputNotFound(_)
                | Error::MalformedInput { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
