use chrono::NaiveDate;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse classification used by callers that must map failures to exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// The caller violated a documented precondition.
    Usage,
    /// The input data cannot support the requested computation.
    Data,
    /// A numerical or logic failure inside the library.
    Internal,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("series is empty after dropping non-finite values")]
    EmptySeries,

    #[error("duplicate observation date {0}")]
    DuplicateDate(NaiveDate),

    #[error("{path}:{line}: {msg}")]
    Malformed {
        path: String,
        line: u64,
        msg: String,
    },

    #[error("month {month} has {got} usable difference(s), need at least {need}")]
    InsufficientMonthData { month: u8, got: usize, need: usize },

    #[error("month {month}: estimated scale is zero (constant differences); consider the homogeneous scale fallback")]
    ZeroScale { month: u8 },

    #[error("no scale estimate for month {month}, which carries observations")]
    MissingMonthScale { month: u8 },

    #[error("design matrix is rank deficient near column {0}")]
    RankDeficient(usize),

    #[error("station {0} has no row in the metadata log")]
    UnknownStation(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidInput(_) => ErrorClass::Usage,
            Error::EmptySeries
            | Error::DuplicateDate(_)
            | Error::Malformed { .. }
            | Error::InsufficientMonthData { .. }
            | Error::ZeroScale { .. }
            | Error::MissingMonthScale { .. }
            | Error::UnknownStation(_)
            | Error::Io(_)
            | Error::Csv(_)
            | Error::Json(_) => ErrorClass::Data,
            Error::RankDeficient(_) => ErrorClass::Internal,
        }
    }
}
