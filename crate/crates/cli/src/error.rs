use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Unreadable or malformed input.
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid scenario:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) | CliError::Usage(_) => 2,
            CliError::Validation(_) => 3,
            CliError::Io(_) => 1,
        }
    }

    pub(crate) fn with_context(self, context: &str) -> Self {
        match self {
            CliError::Parse(msg) if !msg.starts_with(context) => {
                CliError::Parse(format!("{context}: {msg}"))
            }
            other => other,
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        if !e.is_io_error() {
            return CliError::Parse(e.to_string());
        }
        match e.into_kind() {
            csv::ErrorKind::Io(io) => CliError::Io(io),
            _ => unreachable!("is_io_error implies ErrorKind::Io"),
        }
    }
}
