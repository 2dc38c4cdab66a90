use thiserror::Error;

/// Exit-code classes: validation failures exit 1, runtime failures exit 2.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CliError {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("runtime error: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl From<caedp::Error> for CliError {
    fn from(e: caedp::Error) -> Self {
        use caedp::Error as E;
        match e {
            E::InvalidConfig(_) | E::InvalidDataset(_) | E::Csv { .. } => {
                CliError::Validation(e.to_string())
            }
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}
