use std::fmt;
use std::process::ExitCode;

/// Failure of a command, split by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad configuration or input content.
    Invalid(String),
    /// A file could not be read or written.
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            Self::Invalid(_) => ExitCode::from(1),
            Self::Io(_) => ExitCode::from(2),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Invalid(m) => write!(f, "invalid input: {m}"),
            Self::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<oblique_forest::Error> for CliError {
    fn from(e: oblique_forest::Error) -> Self {
        use oblique_forest::Error as E;
        match e {
            E::Io(io) => Self::Io(io.to_string()),
            E::Json(j) if j.is_io() => Self::Io(j.to_string()),
            E::Csv(c) if c.is_io_error() => Self::Io(c.to_string()),
            other => Self::Invalid(other.to_string()),
        }
    }
}
