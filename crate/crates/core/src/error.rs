use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// `ln` or `sqrt` received a non-positive argument while propagating derivatives.
    #[error("domain error during derivative propagation: {0}")]
    Domain(String),

    #[error("integration failed: non-finite state at step {step}")]
    Integration { step: usize },

    #[error("non-finite input to {0}")]
    NonFinite(&'static str),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("point outside bounds: {0}")]
    OutOfBounds(String),

    #[error("model `{model}` evaluation failed: {source}")]
    Model {
        model: String,
        #[source]
        source: Box<Error>,
    },

    #[error("rounded exponent matrix is singular (det = {det:e}); use unrounded coordinates")]
    SingularRounded { det: f64 },

    #[error("optimisation failed: {0}")]
    Optimization(String),

    #[error("no profile grid node passes the {level} threshold at df = {df}; widen the grid")]
    EmptyCrossingSet { df: u32, level: f64 },

    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },

    #[error("no published data realisation for `{0}`; generate a seeded synthetic dataset instead")]
    NoPublishedData(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Failures caused by the numbers rather than by the request.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Domain(_)
                | Error::Integration { .. }
                | Error::NonFinite(_)
                | Error::Model { .. }
                | Error::SingularRounded { .. }
                | Error::Optimization(_)
                | Error::EmptyCrossingSet { .. }
        )
    }
}
