use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("numeric error at step {step}: {what}")]
    Numeric { step: usize, what: String },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("missing values (sentinel -1) for dates: {}", .0.join(", "))]
    MissingValues(Vec<String>),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("linear algebra error: {0}")]
    LinAlg(String),

    #[error("initialization error: {0}")]
    Init(String),

    #[error("layout violation: nonzero weight at ({row}, {col}) outside the reservoir layout")]
    LayoutViolation { row: usize, col: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("load error: {0}")]
    Load(String),

    #[error("serialization error: {0}")]
    Serialize(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn numeric(step: usize, what: impl Into<String>) -> Self {
        Error::Numeric {
            step,
            what: what.into(),
        }
    }

    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serialize(e.to_string())
    }
}
