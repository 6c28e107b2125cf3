use crate::linalg::LinalgError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("noise covariance is singular or not positive definite (min eigenvalue {min:.3e})")]
    SingularNoiseCovariance { min: f64 },
    #[error("scenario produced an invalid {matrix} matrix: {reason}")]
    ScenarioInvalid { matrix: &'static str, reason: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("reference sensor transfer function vanishes in bin {bin}")]
    DegenerateReference { bin: usize },
    #[error("phase-adjusted covariance needs frame metadata (block shift, FFT size, bin indices)")]
    MissingFrameMeta,
    #[error("conditional information matrix is singular; bins without excitation: {bins:?}")]
    RankDeficient { bins: Vec<usize> },
    #[error("no frames supplied")]
    EmptyFrames,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("audio: {0}")]
    Audio(#[from] hound::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("audio too short: need {needed} samples, have {available}")]
    InsufficientAudio { needed: usize, available: usize },
    #[error("unsupported sample rate {found} Hz (expected {expected} Hz)")]
    SampleRate { expected: u32, found: u32 },
}

pub type Result<T> = std::result::Result<T, Error>;
