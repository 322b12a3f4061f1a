use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the library can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("unreadable or malformed data: {0}")]
    Format(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("incompatible Randers data at cell ({x}, {y}): margin {margin:.3e}")]
    Incompatible { x: usize, y: usize, margin: f64 },
    #[error("target unreachable: {0}")]
    Unreachable(String),
    #[error("backtracking failed: {0}")]
    Backtrack(String),
    #[error("topology error: {0}")]
    Topology(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("initialization failed: {0}")]
    Init(String),
    #[error("configuration error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// True for errors caused by the caller's data rather than by a solver.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_) | Error::Format(_) | Error::Io(_) | Error::Config(_)
        )
    }
}
