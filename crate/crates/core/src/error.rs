use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("kernel row for state {state}, action {action} sums to {sum}")]
    NonStochasticRow { state: usize, action: usize, sum: f64 },

    #[error("negative transition probability {value} at state {state}, action {action}")]
    NegativeProbability { state: usize, action: usize, value: f64 },

    #[error("negative reward {value} at state {state}, action {action}")]
    NegativeReward { state: usize, action: usize, value: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid budget k={k} for n={n} arms")]
    InvalidBudget { k: usize, n: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("no positive beta gives cv={cv} for alpha={alpha}")]
    InfeasibleCv { alpha: f64, cv: f64 },

    #[error("instance too large for the exact oracle: {0}")]
    InstanceTooLarge(String),

    #[error("malformed solution: {0}")]
    MalformedSolution(String),
}
