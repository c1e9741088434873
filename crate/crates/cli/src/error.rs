use confocal_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(CoreError),
    #[error(transparent)]
    Core(CoreError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::InvalidAperture(_)
            | CoreError::InvalidGrid(_)
            | CoreError::GridTooLarge { .. }
            | CoreError::InvalidGeometry(_)
            | CoreError::ShiftNotOnGrid { .. }
            | CoreError::ShiftOutOfRange { .. }
            | CoreError::DepthOutOfRange { .. }
            | CoreError::InvalidPolicy(_) => CliError::Config(e.to_string()),
            CoreError::NoNullFound { .. }
            | CoreError::DegenerateMask(_)
            | CoreError::SingularOutOfFocus { .. }
            | CoreError::EmptySubspace
            | CoreError::GridMismatch(_) => CliError::Numerical(e),
            CoreError::Format(_) | CoreError::Io(_) => CliError::Core(e),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Core(_) | CliError::Io(_) => 1,
        }
    }
}
