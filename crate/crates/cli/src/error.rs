//! Error-to-exit-code mapping. The codes are part of the CLI contract:
//!
//! | code | meaning                              |
//! |------|--------------------------------------|
//! | 0    | success                              |
//! | 2    | usage or config-file error           |
//! | 3    | physical-validity error              |
//! | 4    | I/O failure                          |
//! | 5    | numerical failure (step size, norms) |
//! | 6    | no data to analyze                   |

use bundle_core::Error as CoreError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitCode {
    Usage = 2,
    Validation = 3,
    Io = 4,
    Numerical = 5,
    NoData = 6,
}

#[derive(Debug)]
pub struct CliError {
    pub code: ExitCode,
    pub message: String,
}

impl CliError {
    pub fn new(code: ExitCode, message: impl Into<String>) -> CliError {
        CliError {
            code,
            message: message.into(),
        }
    }

    pub fn io(e: std::io::Error) -> CliError {
        CliError::new(ExitCode::Io, e.to_string())
    }

    pub fn core(e: CoreError) -> CliError {
        let code = match &e {
            CoreError::CapacityExceeded { .. }
            | CoreError::DimensionMismatch { .. }
            | CoreError::EmitterOutOfRange { .. }
            | CoreError::InvalidConfig(_)
            | CoreError::InvalidPlan(_)
            | CoreError::InvalidWindows(_) => ExitCode::Validation,
            CoreError::StepSize(_)
            | CoreError::Numerical(_)
            | CoreError::Calibration(_)
            | CoreError::Eigen => ExitCode::Numerical,
            CoreError::UndefinedEstimate(_)
            | CoreError::NoData(_)
            | CoreError::MissingSnapshot(_) => ExitCode::NoData,
            CoreError::MalformedLog { .. } => ExitCode::Usage,
        };
        CliError::new(code, e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> CliError {
        CliError::io(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl std::error::Error for CliError {}
