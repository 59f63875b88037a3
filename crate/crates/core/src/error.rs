use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("insufficient samples: {got} < frame length {need}")]
    InsufficientSamples { got: usize, need: usize },
    #[error("channel length mismatch")]
    ChannelMismatch,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("zero distance between source and microphone")]
    ZeroDistance,
    #[error("negative frequency: {0}")]
    NegativeFrequency(f64),
    #[error("empty band {0}")]
    EmptyBand(usize),
    #[error("target SNR unbounded (A* = {0} must be < 1)")]
    TargetUnbounded(f64),
    #[error("noise covariance singular at bin {0}")]
    NoiseCovarianceSingular(usize),
    #[error("alpha {0} outside [0, 1]")]
    AlphaOutOfRange(f64),
    #[error("negative subband SNR: {0}")]
    NegativeSnr(f64),
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("wav: {0}")]
    Wav(#[from] hound::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
