use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// `M * tau_p < K`: the stacked system has fewer equations than unknowns.
    #[error("underdetermined system: M*tau_p = {equations} < K = {unknowns}")]
    Underdetermined { equations: usize, unknowns: usize },

    #[error("system Gram matrix is singular (non-positive pivot at {pivot}) even after regularization")]
    Singular { pivot: usize },

    #[error("invalid channel: {0}")]
    InvalidChannel(String),

    #[error("config error at `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },

    #[error("campaign failed: all {0} trials failed")]
    AllTrialsFailed(usize),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, err: impl std::fmt::Display) -> Self {
        Error::Io {
            path: path.into(),
            message: err.to_string(),
        }
    }

    /// True for errors caused by bad user input (CLI exit code 2).
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Config { .. } | Error::Parse { .. } | Error::Io { .. } | Error::InvalidArgument(_)
        )
    }
}
