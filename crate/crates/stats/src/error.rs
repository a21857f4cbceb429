use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("need at least {need} values, got {have}")]
    TooFewValues { have: usize, need: usize },
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("input is constant")]
    ConstantInput,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("column `{0}` is constant")]
    ConstantColumn(String),
    #[error("paired differences have zero variance")]
    ZeroVarianceDifferences,
    #[error("design matrix is rank deficient")]
    RankDeficient,
    #[error("need more than {need} rows, got {have}")]
    TooFewRows { have: usize, need: usize },
    #[error("every mixture restart collapsed a component")]
    DegenerateComponent,
    #[error("p-value {0} outside [0, 1]")]
    InvalidProbability(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, StatsError>;

pub(crate) fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(StatsError::NonFinite(i)),
        None => Ok(()),
    }
}

pub(crate) fn require_len(values: &[f64], need: usize) -> Result<()> {
    if values.len() < need {
        Err(StatsError::TooFewValues { have: values.len(), need })
    } else {
        Ok(())
    }
}
