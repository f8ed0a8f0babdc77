use thiserror::Error;

use crate::data::Group;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no records")]
    NoRecords,

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("row {row}, column `{column}`: {message}")]
    InvalidValue {
        row: usize,
        column: String,
        message: String,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("group {0} is empty")]
    EmptyGroup(Group),

    #[error("no threshold rule for group {0}")]
    MissingPolicy(Group),

    #[error("only one outcome class present{0}")]
    SingleClass(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),
}

impl Error {
    /// Input problems (malformed files, bad arguments) as opposed to data
    /// that parses but cannot support the requested computation.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::NoRecords
                | Error::MissingColumn(_)
                | Error::InvalidValue { .. }
                | Error::Csv(_)
                | Error::Io(_)
                | Error::Json(_)
                | Error::InvalidArgument(_)
                | Error::MissingPolicy(_)
        )
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn degenerate(msg: impl Into<String>) -> Self {
        Error::Degenerate(msg.into())
    }
}
