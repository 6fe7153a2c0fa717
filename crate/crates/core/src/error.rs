use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension {dim}: {reason}")]
    InvalidDimension { dim: usize, reason: &'static str },

    #[error("unknown subsystem label `{0}`")]
    UnknownLabel(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("layout mismatch: {0}")]
    LayoutMismatch(String),

    #[error("invalid layout: {0}")]
    InvalidLayout(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("operator flagged Hermitian deviates by {deviation:e}")]
    NotHermitian { deviation: f64 },

    #[error("invalid value for `{field}`: {reason}")]
    InvalidParams { field: String, reason: String },

    #[error("partial trace needs at least one subsystem to keep")]
    EmptyKeep,

    #[error("integrator stalled at t = {t} us (h = {h:e}): {detail}")]
    Stiffness { t: f64, h: f64, detail: String },

    #[error("density matrix lost positivity (min eigenvalue {min_eigenvalue:e}); tighten the integrator tolerance")]
    Negativity { min_eigenvalue: f64 },

    #[error("post-selection probability {probability:e} is too small to renormalize")]
    DegeneratePostselection { probability: f64 },

    #[error("qubit is not in its ground state (excited population {excited:e})")]
    QubitNotReset { excited: f64 },

    #[error("missing timing: {0}")]
    MissingTiming(String),

    #[error("frame mismatch: {0}")]
    FrameMismatch(String),

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("search window excludes the maximum: {0}")]
    WindowExcludesMaximum(String),

    #[error("config parse error at line {line}, column {column}: {message}")]
    ConfigParse { line: usize, column: usize, message: String },

    #[error("config error at `{path}`: {message}")]
    ConfigField { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn params(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParams { field: field.into(), reason: reason.into() }
    }

    /// True for errors raised by the numerical core rather than by bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Stiffness { .. }
                | Error::Negativity { .. }
                | Error::DegeneratePostselection { .. }
                | Error::WindowExcludesMaximum(_)
        )
    }
}
