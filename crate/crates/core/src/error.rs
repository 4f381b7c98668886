use thiserror::Error;

/// Errors produced by model construction, simulation and analysis.
#[derive(Debug, Error)]
pub enum Error {
    #[error("best arm is not unique: maximum mean {mean} is attained by arms {first} and {second}")]
    NonUniqueBestArm { mean: f64, first: usize, second: usize },

    #[error("explore probability must be positive; with mu = 0 no agent ever discovers an arm")]
    ZeroExplore,

    #[error("{field} out of range: {reason}")]
    OutOfRange { field: &'static str, reason: String },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("transition empties class {class}, which is already zero")]
    NegativeCount { class: usize },

    #[error("eta undefined: best arm has neither birth nor death rate in this state")]
    UndefinedEta,

    #[error("coupling coin has HEAD probability {0} > 1")]
    InvalidCoin(f64),

    #[error("point is off the simplex (deviation {0:e})")]
    OffSimplex(f64),

    #[error("integration left the simplex even with step {0:e}")]
    StepTooLarge(f64),

    #[error("second-best arm mean is zero; the bound requires p2 > 0")]
    SecondBestZero,

    #[error("eps' = {eps} outside admissible window (0, {upper:e})")]
    EpsOutOfWindow { eps: f64, upper: f64 },

    #[error("coupling dominance violated in trial {trial}: W - W_hat = {margin}")]
    DominanceViolated { trial: u64, margin: i64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors that signal a broken invariant rather than bad input.
    pub fn is_invariant_violation(&self) -> bool {
        matches!(
            self,
            Error::NegativeCount { .. }
                | Error::InvalidCoin(_)
                | Error::OffSimplex(_)
                | Error::StepTooLarge(_)
                | Error::DominanceViolated { .. }
                | Error::UndefinedEta
        )
    }

    pub(crate) fn out_of_range(field: &'static str, reason: impl Into<String>) -> Self {
        Error::OutOfRange {
            field,
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
