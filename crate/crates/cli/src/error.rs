use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad or inconsistent configuration. Exit status 1.
    #[error("config error: {0}")]
    Config(String),
    /// Anything that fails while running a command. Exit status 2.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl From<irslab::Error> for CliError {
    fn from(e: irslab::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(format!("I/O error: {e}"))
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
