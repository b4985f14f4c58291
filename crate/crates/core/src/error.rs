use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty dataset")]
    Empty,

    #[error("expected header `score,label`, found `{0}`")]
    Header(String),

    #[error("malformed row at line {line}: {message}")]
    MalformedRow { line: u64, message: String },

    #[error("score out of range at line {line}")]
    ScoreOutOfRange { line: u64 },

    #[error("label not in {{0,1}} at line {line}")]
    InvalidLabel { line: u64 },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    /// A numeric argument outside the domain of the function it was passed to.
    #[error("{0}")]
    Domain(String),

    #[error("{0}")]
    NotApplicable(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Errors caused by the content of user-provided data, as opposed to
    /// programming or configuration mistakes.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Empty
                | Error::Header(_)
                | Error::MalformedRow { .. }
                | Error::ScoreOutOfRange { .. }
                | Error::InvalidLabel { .. }
                | Error::InvalidDataset(_)
                | Error::Io(_)
                | Error::Csv(_)
        )
    }
}

macro_rules! ensure_domain {
    ($cond:expr, $($arg:tt)+) => {
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !($cond) {
            return Err($crate::error::Error::Domain(format!($($arg)+)));
        }
    };
}
pub(crate) use ensure_domain;
