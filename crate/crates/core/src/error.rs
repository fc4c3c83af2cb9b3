use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("filter design error: {0}")]
    Design(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("training protocol error: {0}")]
    Protocol(String),

    #[error("numeric failure at grid point {grid_point}: {message}")]
    Numeric { grid_point: String, message: String },

    #[error("contract error: {0}")]
    Contract(String),

    #[error("metric error: {0}")]
    Metric(String),

    #[error("statistics error: {0}")]
    Statistics(String),

    #[error("audit error: {0}")]
    Audit(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Coarse grouping used by the CLI to map failures onto exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Analysis,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) => ErrorClass::Usage,
            Error::Parse { .. }
            | Error::Schema(_)
            | Error::Domain(_)
            | Error::Data(_)
            | Error::Design(_)
            | Error::Io(_)
            | Error::Json(_)
            | Error::Csv(_) => ErrorClass::Data,
            Error::Protocol(_)
            | Error::Numeric { .. }
            | Error::Contract(_)
            | Error::Metric(_)
            | Error::Statistics(_)
            | Error::Audit(_) => ErrorClass::Analysis,
        }
    }
}
