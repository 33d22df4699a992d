use mlr_core::MlrError;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, unreadable or malformed inputs.
    Usage(String),
    /// The data ran out before the work finished.
    Insufficient(String),
    /// A result violated something the pipeline guarantees.
    Invariant(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Insufficient(_) => 3,
            CliError::Invariant(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Insufficient(m) | CliError::Invariant(m) => f.write_str(m),
        }
    }
}

impl From<MlrError> for CliError {
    fn from(e: MlrError) -> Self {
        match e {
            MlrError::Exhausted { .. } => CliError::Insufficient(e.to_string()),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Usage(format!("I/O error: {e}"))
    }
}
