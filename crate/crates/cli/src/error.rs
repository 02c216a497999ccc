use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("config line {line}: {message}")]
    ConfigLine { line: usize, message: String },
    #[error("output directory {0} is not empty (use --force to overwrite)")]
    OutputExists(String),
    #[error(transparent)]
    Core(#[from] damic_core::Error),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(damic_core::Error::Io(e))
    }
}

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_IO: u8 = 3;
pub const EXIT_DIVERGENCE: u8 = 4;
pub const EXIT_OTHER: u8 = 1;

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use damic_core::Error as E;
        match self {
            CliError::Config(_) | CliError::ConfigLine { .. } | CliError::OutputExists(_) => EXIT_CONFIG,
            CliError::Core(E::Input(_) | E::Shape { .. }) => EXIT_CONFIG,
            CliError::Core(E::Io(_) | E::Format { .. } | E::Consistency(_)) => EXIT_IO,
            CliError::Core(E::Divergence(_)) => EXIT_DIVERGENCE,
            CliError::Core(E::State(_)) => EXIT_OTHER,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
