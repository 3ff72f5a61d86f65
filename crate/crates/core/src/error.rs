use std::path::PathBuf;

use thiserror::Error;

use crate::network::MlpParams;

/// Errors raised anywhere in the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside its valid domain.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// Two operands have incompatible shapes or dimensions.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// The operation is not defined for the given manifold variant.
    #[error("unsupported manifold: {0}")]
    UnsupportedSpec(String),

    /// An iterative solver stopped before meeting its tolerance.
    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    /// The exact transport solver ended with an infeasible or unbounded basis.
    #[error("transport solver failed: {0}")]
    Solver(String),

    /// Training produced a non-finite loss. Carries the last finite parameters.
    #[error("training diverged at iteration {iteration}")]
    Divergence {
        iteration: usize,
        checkpoint: Box<MlpParams>,
    },

    /// An error raised inside a training iteration.
    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("unknown preset `{name}`; registered presets: {}", registered.join(", "))]
    UnknownPreset { name: String, registered: Vec<String> },

    #[error("malformed input in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by invalid user input rather than runtime failure.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Parameter(_)
            | Error::Shape(_)
            | Error::UnsupportedSpec(_)
            | Error::UnknownPreset { .. }
            | Error::Parse { .. }
            | Error::Json(_) => true,
            Error::AtIteration { source, .. } => source.is_validation(),
            _ => false,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
