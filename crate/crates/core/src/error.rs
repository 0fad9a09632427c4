use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse failure classes. The CLI maps each to its own exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numerical,
    AssumptionViolation,
}

impl ErrorClass {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Config => 2,
            ErrorClass::Data => 3,
            ErrorClass::Numerical => 4,
            ErrorClass::AssumptionViolation => 5,
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid node index {index} (graph has {node_count} nodes)")]
    InvalidNode { index: usize, node_count: usize },

    #[error("graph error: {0}")]
    Graph(String),

    #[error("invalid model: {0}")]
    Model(String),

    #[error("unstable model: spectral radius {radius:.6} exceeds 1 - {margin}")]
    Unstable { radius: f64, margin: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("singular matrix at frequency {omega:.6} (step {step})")]
    Singular { omega: f64, step: usize },

    #[error("assumption violated: {0}")]
    AssumptionViolation(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) | Error::Parse(_) => ErrorClass::Config,
            Error::Io { .. } | Error::Data(_) => ErrorClass::Data,
            Error::InvalidNode { .. } | Error::Graph(_) | Error::Model(_) => ErrorClass::Config,
            Error::Unstable { .. } | Error::Numerical(_) | Error::Singular { .. } => {
                ErrorClass::Numerical
            }
            Error::AssumptionViolation(_) => ErrorClass::AssumptionViolation,
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
