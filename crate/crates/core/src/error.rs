use thiserror::Error;

/// Errors raised anywhere in the pipeline.
///
/// Every variant maps onto one of the CLI exit codes via [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    /// Shapes, hyperparameters or flags that cannot work together.
    #[error("configuration error: {0}")]
    Config(String),
    /// An API was driven in the wrong order or with a foreign tape.
    #[error("usage error: {0}")]
    Usage(String),
    /// Malformed or invariant-violating input data.
    #[error("data error{}: {message}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    Data { line: Option<usize>, message: String },
    /// NaN/inf appeared in a forward value, a loss or a gradient.
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data { line: None, message: msg.into() }
    }

    pub fn data_at(line: usize, msg: impl Into<String>) -> Self {
        Error::Data { line: Some(line), message: msg.into() }
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    /// 0 success, 1 usage/config, 2 data, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Usage(_) => 1,
            Error::Data { .. } | Error::Io(_) => 2,
            Error::Numerical(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
