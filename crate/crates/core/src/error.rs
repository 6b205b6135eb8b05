use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("normalized coordinate {axis}={value} outside [0, 1]")]
    OutsideUnitSquare { axis: &'static str, value: f64 },

    #[error("angle {axis}={value} rad outside bounds [{min}, {max}]")]
    OutsideBounds {
        axis: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("observations {first} and {second} share the same input but noise variance is zero")]
    DuplicateInputs { first: usize, second: usize },

    #[error("matrix is not positive definite (last jitter tried: {jitter:e})")]
    NotPositiveDefinite { jitter: f64 },

    #[error("no hyperparameter candidate could be factorized")]
    NoViableHyperparameters,

    #[error("campaign failed at iteration {iteration}: {source}")]
    Campaign {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
