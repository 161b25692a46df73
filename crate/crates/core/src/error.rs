use thiserror::Error;

/// Errors produced anywhere in the simulation stack.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("singular input: {0}")]
    SingularInput(String),

    #[error("index {index} out of range for {len} emitters")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("resource limit: {what} requires {requested}, budget is {budget}")]
    ResourceLimit {
        what: String,
        requested: usize,
        budget: usize,
    },

    #[error("no convergence in {context} after {iterations} iterations (residual {residual:e})")]
    Convergence {
        context: String,
        iterations: usize,
        residual: f64,
    },

    #[error("step size underflow at t = {time} (h = {step:e}); the problem is stiff at these tolerances, try loosening rel_tol/abs_tol")]
    Stiffness { time: f64, step: f64 },

    #[error("integration failure: {0}")]
    IntegrationFailure(String),

    #[error("correlation undefined: intensity {0:e} is below the numeric floor")]
    UndefinedCorrelation(f64),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
}

impl Error {
    /// Stable snake_case name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid_argument",
            Error::SingularInput(_) => "singular_input",
            Error::IndexOutOfRange { .. } => "index_out_of_range",
            Error::ResourceLimit { .. } => "resource_limit",
            Error::Convergence { .. } => "convergence",
            Error::Stiffness { .. } => "stiffness",
            Error::IntegrationFailure(_) => "integration_failure",
            Error::UndefinedCorrelation(_) => "undefined_correlation",
            Error::Numeric(_) => "numeric",
            Error::UnknownPreset(_) => "unknown_preset",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
