use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("infeasible budget: {0}")]
    Infeasible(String),
    #[error("corrupt bundle: {0}")]
    Bundle(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Core(spot_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Infeasible(_) => 3,
            CliError::Bundle(_) => 4,
            CliError::Io(_) | CliError::Core(_) => 1,
        }
    }
}

impl From<spot_core::Error> for CliError {
    fn from(e: spot_core::Error) -> Self {
        use spot_core::Error as E;
        match e {
            E::InvalidBounds(_) | E::InvalidControl(_) | E::DimensionMismatch { .. } => CliError::Config(e.to_string()),
            E::InfeasibleBudget { .. } => CliError::Infeasible(e.to_string()),
            other => CliError::Core(other),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
