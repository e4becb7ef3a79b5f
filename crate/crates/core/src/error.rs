use thiserror::Error;

/// Errors produced by the projection engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: column `{0}` not found")]
    MissingColumn(String),

    #[error(
        "parse error at row {row}, column `{column}`: cannot read `{value}` as a finite number"
    )]
    Parse {
        row: usize,
        column: String,
        value: String,
    },

    #[error("rank error: {0}")]
    Rank(String),

    #[error("design is rank deficient at column `{column}` (pivot {pivot:.3e} below threshold {threshold:.3e})")]
    RankDeficient {
        column: String,
        pivot: f64,
        threshold: f64,
    },

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("unknown control `{0}`")]
    UnknownControl(String),

    #[error("insufficient draws: need at least {needed}, have {have}")]
    InsufficientDraws { needed: usize, have: usize },

    #[error("sampler diverged at iteration {iteration}: {what} = {value:.3e}")]
    Divergence {
        iteration: usize,
        what: &'static str,
        value: f64,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("stepwise path error: every candidate at step {step} is rank deficient")]
    Path { step: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Whether the failure comes from the numbers rather than the input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Rank(_)
                | Error::RankDeficient { .. }
                | Error::Divergence { .. }
                | Error::Numerical(_)
                | Error::Path { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
