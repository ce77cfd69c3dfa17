use thiserror::Error;

/// Errors produced by the bounds library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain where a quantity is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid configuration or argument combination.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A problem with the supplied data, optionally tied to a 1-based data row.
    #[error("data error{}: {msg}", row.map(|r| format!(" at row {r}")).unwrap_or_default())]
    Data { row: Option<usize>, msg: String },

    /// ATT is undefined when the sample has no treated units.
    #[error("ATT undefined: no treated observations")]
    AttUndefined,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data { row: None, msg: msg.into() }
    }

    pub(crate) fn data_at(row: usize, msg: impl Into<String>) -> Self {
        Error::Data { row: Some(row), msg: msg.into() }
    }

    /// True for errors caused by the data rather than the configuration.
    pub fn is_data_error(&self) -> bool {
        matches!(self, Error::Data { .. } | Error::AttUndefined | Error::Csv(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
