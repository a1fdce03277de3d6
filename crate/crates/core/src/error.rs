use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite input: {0}")]
    NonFiniteInput(&'static str),

    #[error("inertia matrix is singular or ill-conditioned (condition estimate {condition:e})")]
    SingularInertia { condition: f64 },

    #[error("equilibrium solver did not converge after {iterations} iterations (residual {residual:e} N·m, best q = {best:?})")]
    NoConvergence {
        best: [f64; 3],
        residual: f64,
        iterations: usize,
    },

    #[error("state became non-finite at t = {t} s (q = {q:?}, qdot = {qdot:?})")]
    NonFiniteState { t: f64, q: [f64; 3], qdot: [f64; 3] },

    #[error("adaptive step underflow at t = {t} s: proposed h = {h:e} below h_min = {h_min:e}")]
    StepUnderflow { t: f64, h: f64, h_min: f64 },

    #[error("invalid value for `{key}`: {constraint}")]
    Validation { key: String, constraint: String },

    #[error("{0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn validation(key: impl Into<String>, constraint: impl Into<String>) -> Self {
        Error::Validation {
            key: key.into(),
            constraint: constraint.into(),
        }
    }
}
