use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("model error: {0}")]
    Model(String),
    #[error("state space too large: {needed} raw configurations exceeds budget {budget}")]
    Budget { needed: u128, budget: u128 },
    #[error("configuration is not a member of the state space")]
    NotInSpace,
    #[error("distributions live on different state spaces")]
    SpaceMismatch,
    #[error("constraint error: {0}")]
    Constraint(String),
    #[error("invalid parameter: {0}")]
    Invalid(String),
    #[error("order violation at step {step}, site {site}: top chain fell below bottom chain")]
    OrderViolation { step: u64, site: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
