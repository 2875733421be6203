use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A stem or database render fell below the silence threshold.
    #[error("silent stem (instrument {instrument:?}, rms {rms:.3e})")]
    SilentStem { instrument: Option<u32>, rms: f64 },

    #[error("silent input (rms {rms:.3e})")]
    SilentInput { rms: f64 },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("malformed data: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("wav: {0}")]
    Wav(#[from] hound::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}
