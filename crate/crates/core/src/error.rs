use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    /// Input statistics make the operation undefined (e.g. normalizing a constant tensor).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("time {0} outside (0, 1]")]
    TimeDomain(f64),

    #[error("config error: {0}")]
    Config(String),

    /// A report disagrees with the raw files it was built from.
    #[error("audit failed: {0}")]
    Audit(String),

    /// Failure talking to an out-of-process verifier. `raw` carries the offending payload.
    #[error("verifier transport error: {message} (raw: {raw:?})")]
    Transport { message: String, raw: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn transport(message: impl Into<String>, raw: impl Into<String>) -> Self {
        Error::Transport {
            message: message.into(),
            raw: raw.into(),
        }
    }
}
