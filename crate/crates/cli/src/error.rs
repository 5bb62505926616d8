use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("config parse error at `{path}` (line {line}, column {column}): {message}")]
    Parse { path: String, line: usize, column: usize, message: String },
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Domain(#[from] infowelfare::Error),
    #[error("{0}")]
    Output(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.display().to_string(), source }
    }

    /// Library errors raised while reading the config are config errors.
    pub fn config(e: infowelfare::Error) -> Self {
        Self::Config(e.to_string())
    }

    pub fn located(self, at: &str) -> Self {
        match self {
            Self::Domain(infowelfare::Error::InvalidParameters(m)) => Self::Config(format!("{at}: {m}")),
            Self::Config(m) => Self::Config(format!("{at}: {m}")),
            other => other,
        }
    }

    /// 1 for assumption or inclusion failures, 2 for usage and input problems.
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Domain(_) => 1,
            _ => 2,
        }
    }
}
