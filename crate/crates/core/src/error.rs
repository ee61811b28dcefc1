use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("missing mandatory column `{0}`")]
    MissingColumn(String),

    #[error("row {row}: column `{column}` holds non-numeric value {value:?}")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },

    #[error("row {row}: {message}")]
    BadRow { row: usize, message: String },

    #[error("invalid timestamp {value:?}: {reason}")]
    Timestamp { value: String, reason: String },

    #[error("unknown county `{0}`")]
    UnknownCounty(String),

    #[error("unknown feature `{0}`")]
    UnknownFeature(String),

    #[error("feature `{0}` has zero variance")]
    ZeroVariance(String),

    #[error("county `{county}`: column `{column}` is entirely missing")]
    AllMissing { county: String, column: String },

    #[error("{0}")]
    Invalid(String),

    #[error("not enough data: {0}")]
    InsufficientData(String),

    #[error("nothing left to model: {0}")]
    Empty(String),

    #[error("optimizer: {0}")]
    Optim(#[from] crate::optim::OptimError),

    #[error("model: {0}")]
    Model(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
