use std::fmt;

/// Failure of a command, mapped to the process exit code.
#[derive(Debug)]
pub enum RunError {
    InvalidConfig(String),
    Numerical(String),
    Io(String),
}

impl RunError {
    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::InvalidConfig(_) => 2,
            RunError::Numerical(_) => 3,
            RunError::Io(_) => 1,
        }
    }
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::InvalidConfig(m) => write!(f, "invalid configuration: {m}"),
            RunError::Numerical(m) => write!(f, "numerical failure: {m}"),
            RunError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<radapt_core::Error> for RunError {
    fn from(e: radapt_core::Error) -> Self {
        match e {
            radapt_core::Error::InvalidArgument(m) => RunError::InvalidConfig(m.to_string()),
            radapt_core::Error::NumericalFailure(m) => RunError::Numerical(m.to_string()),
        }
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e.to_string())
    }
}

impl From<csv::Error> for RunError {
    fn from(e: csv::Error) -> Self {
        RunError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, RunError>;
