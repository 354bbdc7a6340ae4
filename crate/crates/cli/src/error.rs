use std::process::ExitCode;

/// Failure of a command, carrying its process exit status.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags or configuration. Exit status 2.
    #[error("{0}")]
    Usage(String),
    /// Missing, malformed or inconsistent input data. Exit status 3.
    #[error("{0}")]
    Data(String),
    /// Non-finite values during training. Exit status 4.
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.code())
    }
}

impl From<wlk::Error> for CliError {
    fn from(e: wlk::Error) -> Self {
        match e {
            wlk::Error::Numeric(_) => CliError::Numeric(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
