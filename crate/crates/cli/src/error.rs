use std::fmt;

use sensi::SensiError;

/// A failure with the process exit code it maps to.
#[derive(Debug)]
pub enum CliError {
    /// Unreadable or inconsistent input: exit 2.
    Malformed(String),
    /// Constant response: exit 3.
    Degenerate(String),
    /// The estimators could not produce a value: exit 4.
    Estimation(String),
    /// Anything else, such as an unwritable output directory: exit 1.
    Other(String),
}

impl CliError {
    pub fn malformed(msg: impl Into<String>) -> Self {
        CliError::Malformed(msg.into())
    }

    /// Same category, new message.
    pub fn with_message(self, msg: String) -> Self {
        match self {
            CliError::Malformed(_) => CliError::Malformed(msg),
            CliError::Degenerate(_) => CliError::Degenerate(msg),
            CliError::Estimation(_) => CliError::Estimation(msg),
            CliError::Other(_) => CliError::Other(msg),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Other(_) => 1,
            CliError::Malformed(_) => 2,
            CliError::Degenerate(_) => 3,
            CliError::Estimation(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Malformed(m) => write!(f, "malformed input: {m}"),
            CliError::Degenerate(m) => write!(f, "degenerate data: {m}"),
            CliError::Estimation(m) => write!(f, "estimation failed: {m}"),
            CliError::Other(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

impl From<SensiError> for CliError {
    fn from(e: SensiError) -> Self {
        let msg = e.to_string();
        match e.root() {
            SensiError::DegenerateOutput => CliError::Degenerate(msg),
            SensiError::NoLocalData { .. }
            | SensiError::NoFeasibleBandwidth { .. }
            | SensiError::EmptyGrid
            | SensiError::InvalidGrid(_) => CliError::Estimation(msg),
            _ => CliError::Malformed(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Other(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
