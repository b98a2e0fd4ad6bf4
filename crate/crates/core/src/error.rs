use thiserror::Error;

/// Errors produced anywhere in the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error("output length {requested} too short, need at least {required} samples")]
    LengthTooShort { requested: usize, required: usize },

    #[error("signal has {len} samples, shorter than one {window}-sample window")]
    SignalTooShort { len: usize, window: usize },

    #[error("window/hop configuration does not satisfy overlap-add reconstruction")]
    NotCola,

    #[error("only {active} active frames in the estimation buffer, need at least {required}")]
    TooFewFrames { active: usize, required: usize },

    #[error("zero input where a nonzero vector or signal is required")]
    ZeroInput,

    #[error("geometric series diverges: reference margin {margin:.4} >= 1")]
    SeriesDivergent { margin: f64 },

    #[error("numerically singular system (condition estimate {condition:.3e})")]
    Singular { condition: f64 },

    #[error("ADMM diverged after {iterations} iterations")]
    Diverged {
        iterations: usize,
        primal_history: Vec<f64>,
    },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Wav(#[from] hound::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SeriesDivergent { .. }
                | Error::Singular { .. }
                | Error::Diverged { .. }
                | Error::TooFewFrames { .. }
                | Error::NotCola
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
