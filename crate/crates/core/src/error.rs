use thiserror::Error;

/// Errors raised across the navigation stack.
///
/// Variants are grouped by category; [`NavError::category`] gives the short
/// tag printed by the CLI on failure.
#[derive(Debug, Error)]
pub enum NavError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("no tasks satisfy the {0} tier after {1} rejections")]
    UnsatisfiableTier(String, usize),
    #[error("no path: {0}")]
    NoPath(String),
    #[error("internal inconsistency: {0}")]
    Inconsistency(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("degenerate dataset: {0}")]
    DatasetDegenerate(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl NavError {
    pub fn category(&self) -> &'static str {
        match self {
            NavError::InvalidInput(_) => "input",
            NavError::UnsatisfiableTier(..) => "task",
            NavError::NoPath(_) => "plan",
            NavError::Inconsistency(_) => "internal",
            NavError::Numerical(_) => "numerical",
            NavError::DatasetDegenerate(_) => "dataset",
            NavError::Config(_) => "config",
            NavError::Parse(_) => "parse",
            NavError::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, NavError>;
