use chrono::NaiveDate;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("missing input: {0}")]
    MissingInput(String),

    #[error("no dates survive cleaning")]
    EmptyDataset,

    #[error("missing reading for meter `{meter}` on {date}")]
    MissingReading { meter: String, date: NaiveDate },

    #[error("date {date} outside the encodable year range starting {first_year}")]
    YearOutOfRange { date: NaiveDate, first_year: i32 },

    #[error("series too short: need at least {needed} values, got {got}")]
    SeriesTooShort { needed: usize, got: usize },

    #[error("date misalignment: {0}")]
    Misaligned(String),

    #[error("non-finite value in `{0}`")]
    NonFinite(String),

    #[error("backward called before forward")]
    NoForwardPass,

    #[error("checkpoint architecture mismatch: expected {expected}, found {found}")]
    ArchitectureMismatch { expected: String, found: String },

    #[error("insufficient class counts: {0}")]
    ClassCount(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
