use alloc::string::String;

/// Errors raised by panel construction, factor extraction and GMM estimation.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("missing cell: individual `{individual}`, period `{period}`")]
    MissingCell { individual: String, period: String },

    #[error("duplicate cell: individual `{individual}`, period `{period}`")]
    DuplicateCell { individual: String, period: String },

    #[error("non-numeric value `{value}` in column `{column}` (line {line})")]
    NonNumericValue {
        column: String,
        value: String,
        line: usize,
    },

    #[error("panel has {found} periods, at least {required} are required")]
    TooFewPeriods { found: usize, required: usize },

    #[error("panel has {found} individuals, at least 2 are required")]
    TooFewIndividuals { found: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("lag order {h} exceeds the maximum {max} for this panel")]
    LagTooLarge { h: usize, max: usize },

    #[error("factor count {k} exceeds the maximum {max}")]
    KTooLarge { k: usize, max: usize },

    #[error("rank-deficient GMM design (condition number {condition_number:e})")]
    RankDeficientDesign { condition_number: f64 },

    #[error("no convergence after {iterations} outer iterations")]
    NonConvergence { iterations: usize },

    #[error("forecast horizon {horizon} needs {horizon} future regressor periods, {supplied} supplied")]
    MissingFutureRegressors { horizon: usize, supplied: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    /// True for failures of the numerical procedure itself (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::RankDeficientDesign { .. } | Error::NonConvergence { .. }
        )
    }

    /// Short, stable identifier used in machine-readable diagnostics.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::MissingCell { .. } => "MissingCell",
            Error::DuplicateCell { .. } => "DuplicateCell",
            Error::NonNumericValue { .. } => "NonNumericValue",
            Error::TooFewPeriods { .. } => "TooFewPeriods",
            Error::TooFewIndividuals { .. } => "TooFewIndividuals",
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::LagTooLarge { .. } => "LagTooLarge",
            Error::KTooLarge { .. } => "KTooLarge",
            Error::RankDeficientDesign { .. } => "RankDeficientDesign",
            Error::NonConvergence { .. } => "NonConvergence",
            Error::MissingFutureRegressors { .. } => "MissingFutureRegressors",
            Error::InvalidConfig(_) => "InvalidConfig",
        }
    }
}

pub type Result<T> = core::result::Result<T, Error>;
