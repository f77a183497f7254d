use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("insufficient data: need at least {needed} points, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("sample rate {sample_rate} Hz is below {factor}x the {band_hz} Hz band of interest")]
    Aliasing {
        sample_rate: f64,
        band_hz: f64,
        factor: f64,
    },

    #[error("current {current_a} A exceeds the {limit_a} A limit")]
    OverCurrent { current_a: f64, limit_a: f64 },

    #[error("calibration line {line}: {message}")]
    Calibration { line: usize, message: String },

    #[error("link lost {lost} of {sent} packets")]
    PacketLoss { sent: usize, lost: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
