use alloc::string::String;

/// Errors raised by model construction, evaluation and fitting.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch for {what}: expected {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("unknown covariate column `{0}`")]
    UnknownColumn(String),

    #[error("non-finite {what} at t = {t}")]
    NonFinite { t: usize, what: &'static str },

    #[error("{polynomial} polynomial has a root inside the unit circle (min modulus {min_modulus:.6})")]
    RootCondition {
        polynomial: &'static str,
        min_modulus: f64,
    },

    #[error("singular information matrix (condition number {condition:e})")]
    SingularInformation { condition: f64 },

    #[error("cannot initialize NB component: {0}")]
    Degenerate(String),

    #[error("EM observed log-likelihood decreased by {decrease:e} at iteration {iteration}")]
    EmMonotonicity { iteration: usize, decrease: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    /// True for failures of the numerics (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. }
                | Error::SingularInformation { .. }
                | Error::EmMonotonicity { .. }
                | Error::Numerical(_)
        )
    }
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
