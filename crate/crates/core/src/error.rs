use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An input lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// Confidence radius requested for a rule that was never played in the cell.
    #[error("confidence undefined: rule {rule} has no observations in cell {cell}")]
    UndefinedConfidence { cell: u64, rule: usize },

    #[error("oracle unavailable: {0}")]
    UnsupportedOracle(String),

    #[error("input error: {0}")]
    Input(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("tuning failed: {0}")]
    Tuning(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
