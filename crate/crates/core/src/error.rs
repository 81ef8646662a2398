use std::path::PathBuf;

/// Errors produced anywhere in the simulation pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid speaker layout: {0}")]
    InvalidLayout(String),

    #[error("source direction undefined: source is at the array origin")]
    UndefinedDirection,

    #[error("degenerate speaker layout: {0}")]
    DegenerateLayout(String),

    #[error("listener position is outside the reproduction region: {0}")]
    OutOfRegion(String),

    #[error("sample rate mismatch: expected {expected} Hz, got {found} Hz")]
    RateMismatch { expected: u32, found: u32 },

    #[error("channel count mismatch: expected {expected}, got {found}")]
    ChannelMismatch { expected: usize, found: usize },

    #[error("HRIR set error in {path}: {reason}")]
    HrirLoad { path: PathBuf, reason: String },

    #[error("sphere model series did not converge at {frequency_hz:.1} Hz after {terms} terms")]
    SeriesDivergence { frequency_hz: f64, terms: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("cannot calibrate scene: {0}")]
    CannotCalibrate(String),

    #[error("ill-conditioned noise covariance at {frequency_hz:.1} Hz (condition number {condition:.3e})")]
    IllConditioned { frequency_hz: f64, condition: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("stem mismatch: {0}")]
    StemMismatch(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Wav(#[from] hound::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
