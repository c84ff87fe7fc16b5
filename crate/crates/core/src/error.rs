use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Caller supplied something that violates an operation's precondition.
    #[error("invalid input: {0}")]
    Input(String),

    #[error("graph error at node `{node}`: {message}")]
    Graph { node: String, message: String },

    #[error("parse error at {path}: {message}")]
    Parse { path: String, message: String },

    #[error("validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),

    /// A metric has no defined value (e.g. no class carries ground truth).
    #[error("undefined result: {0}")]
    Undefined(String),

    #[error("adapter failed at iteration {iteration}: {source}")]
    Adapter {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn parse(path: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: msg.into(),
        }
    }

    /// Short machine-readable category used by the CLI diagnostics.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Input(_) => "input",
            Error::Graph { .. } => "graph",
            Error::Parse { .. } | Error::Json(_) => "parse",
            Error::Validation(_) => "validation",
            Error::Undefined(_) => "undefined",
            Error::Adapter { .. } => "adapter",
            Error::Internal(_) => "internal",
            Error::Io(_) => "io",
        }
    }

    /// Whether the error stems from bad inputs rather than a fault in the toolkit.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::Internal(_) | Error::Adapter { .. })
    }
}
