use thiserror::Error;

/// Errors produced by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    /// A coordinate outside the domain of a map or grid.
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid or unsupported configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// Array length does not match the grid it is used with.
    #[error("shape error: expected {expected} values, got {got}")]
    Shape { expected: usize, got: usize },

    /// Multi-domain layout is inconsistent.
    #[error("layout error: {0}")]
    Layout(String),

    /// Config file problem, located at a line of the source text.
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    /// A run stopped early: non-finite values or norm blow-up.
    #[error("run unstable: {0}")]
    Unstable(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn config_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}
