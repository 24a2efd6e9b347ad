use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A geometric or structural precondition was not met.
    #[error("precondition violated: {0}")]
    SpecViolation(String),

    /// A scalar parameter lies outside its admissible range.
    #[error("domain error: {0}")]
    DomainError(String),

    #[error("numerical overflow in {0}")]
    NumericalOverflow(String),

    #[error("field amplitude {max_abs:.3e} exceeds the nonlinearity radius {radius:.3e}")]
    RadiusExceeded { max_abs: f64, radius: f64 },

    #[error("interior system is numerically singular (pivot ratio {pivot_ratio:.3e})")]
    SingularSystem { pivot_ratio: f64 },

    #[error("barrier verification failed: min M·phi = {achieved:.4} < {required:.4}")]
    BarrierFailure { achieved: f64, required: f64 },

    #[error(
        "Picard iteration failed to contract ({reason}) after {iterations} iterations at amplitude {amplitude:.3e}; try amplitude {suggested:.3e}"
    )]
    ContractionFailure {
        reason: String,
        iterations: usize,
        amplitude: f64,
        suggested: f64,
    },

    #[error("finite-difference stencil too coarse for order {order}: error estimate {estimate:.3e} vs value {value:.3e}")]
    StencilTooCoarse { order: usize, estimate: f64, value: f64 },

    #[error("first linearization is not positive in the domain (min = {min:.3e})")]
    PositivityFailure { min: f64 },

    #[error("basis mismatch: {0}")]
    BasisMismatch(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) => 1,
            Error::SpecViolation(_)
            | Error::DomainError(_)
            | Error::Config(_)
            | Error::Parse(_)
            | Error::BasisMismatch(_) => 2,
            Error::NumericalOverflow(_)
            | Error::RadiusExceeded { .. }
            | Error::SingularSystem { .. }
            | Error::BarrierFailure { .. }
            | Error::ContractionFailure { .. }
            | Error::StencilTooCoarse { .. }
            | Error::PositivityFailure { .. } => 3,
        }
    }

    /// Short class name used in reports.
    pub fn class(&self) -> &'static str {
        match self {
            Error::SpecViolation(_) => "SpecViolation",
            Error::DomainError(_) => "DomainError",
            Error::NumericalOverflow(_) => "NumericalOverflow",
            Error::RadiusExceeded { .. } => "RadiusExceeded",
            Error::SingularSystem { .. } => "SingularSystem",
            Error::BarrierFailure { .. } => "BarrierFailure",
            Error::ContractionFailure { .. } => "ContractionFailure",
            Error::StencilTooCoarse { .. } => "StencilTooCoarse",
            Error::PositivityFailure { .. } => "PositivityFailure",
            Error::BasisMismatch(_) => "BasisMismatch",
            Error::Config(_) => "ConfigError",
            Error::Parse(_) => "ParseError",
            Error::Io(_) => "IoError",
        }
    }
}
