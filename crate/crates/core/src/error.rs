use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("rank-deficient fit: {0}")]
    RankDeficient(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("no design option fits within budget {budget}")]
    BudgetInfeasible { budget: f64 },

    #[error("model validity: {0}")]
    ModelValidity(String),

    #[error("SGD diverged: non-finite loss at update {update}")]
    Divergence { update: u64 },

    #[error("step size too large: eta*L/2 = {0} must be < 1")]
    StepSize(f64),

    #[error("target epsilon {epsilon} is at or below the noise floor sigma {sigma}")]
    UnreachableTarget { epsilon: f64, sigma: f64 },

    #[error("degenerate bound: {0}")]
    Degenerate(String),

    #[error("sigma = 0: the noisy bound is undefined, use gd_limit")]
    NoiseFree,
}

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Input,
    Model,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Input(_) | Error::RankDeficient(_) | Error::Config(_) | Error::BudgetInfeasible { .. } => {
                ErrorClass::Input
            }
            Error::ModelValidity(_)
            | Error::Divergence { .. }
            | Error::StepSize(_)
            | Error::UnreachableTarget { .. }
            | Error::Degenerate(_)
            | Error::NoiseFree => ErrorClass::Model,
        }
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }
}
