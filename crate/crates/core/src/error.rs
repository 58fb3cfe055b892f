use thiserror::Error;

/// Errors produced anywhere in the library.
///
/// Each variant maps onto a process exit code through [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter `{key}`: {reason}")]
    InvalidParameter { key: String, reason: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("singular assembly: {0}")]
    SingularAssembly(String),

    #[error("linear solver did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    LinearSolver { iterations: usize, residual: f64 },

    #[error("quadrature did not converge (estimated error {estimate:.3e}); use the near-field expansion")]
    Quadrature { estimate: f64 },

    #[error("multiplier bracket failure: {0}")]
    Bracket(String),

    #[error("initial guess not resolved: {0}")]
    Unresolved(String),

    #[error("empty support")]
    EmptySupport,

    #[error("support escapes the local window: {0}")]
    WindowEscape(String),

    #[error("sweep failed: {0}")]
    Sweep(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn param(key: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            key: key.to_string(),
            reason: reason.into(),
        }
    }

    /// Exit code for the command line tool: 0 ok, 2 config, 3 non-convergence, 4 validation.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidDomain(_)
            | Error::InvalidGrid(_)
            | Error::InvalidParameter { .. }
            | Error::Config(_)
            | Error::Unresolved(_) => 2,
            Error::LinearSolver { .. }
            | Error::Quadrature { .. }
            | Error::Bracket(_)
            | Error::Sweep(_)
            | Error::SingularAssembly(_) => 3,
            Error::Validation(_) => 4,
            Error::EmptySupport
            | Error::WindowEscape(_)
            | Error::DegenerateFit(_)
            | Error::Io(_) => 1,
        }
    }

    /// Short machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidDomain(_) => "invalid_domain",
            Error::InvalidGrid(_) => "invalid_grid",
            Error::InvalidParameter { .. } => "invalid_parameter",
            Error::Config(_) => "config",
            Error::SingularAssembly(_) => "singular_assembly",
            Error::LinearSolver { .. } => "linear_nonconvergence",
            Error::Quadrature { .. } => "quadrature_nonconvergence",
            Error::Bracket(_) => "bracket_failure",
            Error::Unresolved(_) => "unresolved_initial_guess",
            Error::EmptySupport => "empty_support",
            Error::WindowEscape(_) => "window_escape",
            Error::Sweep(_) => "sweep_failed",
            Error::DegenerateFit(_) => "degenerate_fit",
            Error::Validation(_) => "validation_failed",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
