use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grade {grade} for item `{item}` (expected 0..={max})")]
    InvalidGrade { item: String, grade: i64, max: usize },

    #[error("invalid category code {code} for item `{item}` (subject {subject}, time {time}); item has {n_categories} categories")]
    InvalidCategory {
        item: String,
        subject: String,
        time: usize,
        code: i64,
        n_categories: usize,
    },

    #[error("duplicate observation for subject {subject} at time {time}")]
    DuplicateObservation { subject: String, time: usize },

    #[error("missing observation for subject {subject} at time {time} (set allow_missing to accept gaps)")]
    MissingObservation { subject: String, time: usize },

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("invalid model specification: {0}")]
    InvalidSpec(String),

    #[error("model mismatch: {0}")]
    ModelMismatch(String),

    #[error("missing covariate `{name}` for subject {subject} at time {time}")]
    MissingCovariate { name: String, subject: String, time: usize },

    #[error("non-finite linear predictor in link function")]
    NumericOverflow,

    #[error("observed data has zero probability under the model (subject {subject})")]
    ZeroLikelihood { subject: String },

    #[error("M-step failed at EM iteration {em_iter}, Newton iteration {newton_iter}: {message}")]
    MStepFailure {
        em_iter: usize,
        newton_iter: usize,
        message: String,
    },

    #[error("fit failed: {0}")]
    FitFailure(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the estimation procedure itself, as opposed to
    /// malformed inputs.
    pub fn is_fit_failure(&self) -> bool {
        matches!(
            self,
            Error::MStepFailure { .. } | Error::FitFailure(_) | Error::ZeroLikelihood { .. }
        )
    }
}
