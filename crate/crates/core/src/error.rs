use thiserror::Error;

use crate::dataset::ValidationReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input header lacks a required column.
    #[error("missing column `{0}` in header")]
    Schema(String),

    /// A data row could not be parsed or holds a value outside its domain.
    /// `row` is 1-based and counts data rows only.
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    /// The dataset violates an assumption required by the statistic.
    #[error("assumption violated: {}", .0.summary())]
    Assumption(Box<ValidationReport>),

    #[error("assumption violated: {0}")]
    AssumptionAt(String),

    /// A censoring survival estimate reached zero inside the integration range.
    #[error("censoring support exhausted at t = {0}")]
    SupportExhausted(f64),

    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),

    #[error("unsupported model: {0}")]
    Unsupported(String),

    #[error("{excluded} of {total} replicates excluded (limit 5%)")]
    TooManyExclusions { excluded: usize, total: usize },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by data that breaks the statistic's assumptions,
    /// as opposed to malformed input or bad configuration.
    pub fn is_assumption_violation(&self) -> bool {
        matches!(
            self,
            Error::Assumption(_)
                | Error::AssumptionAt(_)
                | Error::SupportExhausted(_)
                | Error::DegenerateVariance(_)
                | Error::InsufficientData(_)
        )
    }
}
