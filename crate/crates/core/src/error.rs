use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("unknown weight preset `{0}` (expected constant, cosine_well or quadratic_seam)")]
    UnknownPreset(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("blow-up detected at t = {t} (step {step}): {reason}")]
    BlowupDetected { t: f64, step: usize, reason: String },

    #[error("coarsening factor {factor} does not divide path length {len}")]
    NotDivisible { factor: usize, len: usize },

    #[error("need at least {required} paths, got {got}")]
    TooFewPaths { required: usize, got: usize },

    #[error("inadmissible h: {0}")]
    InadmissibleH(String),

    #[error("invalid validator input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { name, reason: reason.into() }
}
