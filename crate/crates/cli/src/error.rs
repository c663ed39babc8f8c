use std::fmt;

/// Failures mapped onto process exit codes: validation problems exit with 1,
/// numerical or domain failures and output errors exit with 2.
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Numerical(String),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Numerical(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "validation error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<beamlab_core::Error> for CliError {
    fn from(e: beamlab_core::Error) -> Self {
        use beamlab_core::Error as E;
        match e {
            E::Validation(m) => CliError::Validation(m),
            E::Numerical(m) => CliError::Numerical(m),
            E::Domain(m) => CliError::Numerical(format!("domain error: {m}")),
            E::NotAdmissible(m) => CliError::Numerical(format!("no admissible pair: {m}")),
            E::Io(m) => CliError::Numerical(format!("io: {m}")),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Numerical(format!("io: {e}"))
    }
}
