use std::fmt;

/// Every failure the pipeline can report, with a stable code for scripts.
#[derive(Debug)]
pub enum CliError {
    Core(wasserfair::Error),
    Config(String),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn code(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.code(),
            CliError::Config(_) => "config",
        }
    }

    /// Process exit status: 2 for configuration mistakes, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Config(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for CliError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            CliError::Core(e) => Some(e),
            CliError::Config(_) => None,
        }
    }
}

impl From<wasserfair::Error> for CliError {
    fn from(e: wasserfair::Error) -> Self {
        CliError::Core(e)
    }
}

pub(crate) fn io(path: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::Core(wasserfair::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}
