use std::path::{Path, PathBuf};

use finger_dyn_core::calibration::FitReport;
use finger_dyn_core::Error as CoreError;
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_SIMULATION: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;
pub const EXIT_CHECK_FAILED: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{}parse error at `{key}`: {message}", file_prefix(file))]
    Parse {
        file: Option<PathBuf>,
        key: String,
        message: String,
    },

    #[error("parse error: {0}")]
    BadData(String),

    #[error("invalid value for `{key}`: {constraint}")]
    Validation { key: String, constraint: String },

    #[error("simulation failed: {0}")]
    Simulation(CoreError),

    #[error("calibration did not converge: {0}")]
    NotConverged(Box<FitReport>),

    #[error("validation failed: {0}")]
    ChecksFailed(String),
}

fn file_prefix(file: &Option<PathBuf>) -> String {
    file.as_ref().map(|f| format!("{}: ", f.display())).unwrap_or_default()
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } | CliError::Parse { .. } | CliError::BadData(_) | CliError::Validation { .. } => {
                EXIT_CONFIG
            }
            CliError::Simulation(_) => EXIT_SIMULATION,
            CliError::NotConverged(_) => EXIT_NOT_CONVERGED,
            CliError::ChecksFailed(_) => EXIT_CHECK_FAILED,
        }
    }

    pub(crate) fn in_file(self, path: &Path) -> Self {
        match self {
            CliError::Parse { key, message, .. } => CliError::Parse {
                file: Some(path.to_path_buf()),
                key,
                message,
            },
            other => other,
        }
    }

    pub(crate) fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
        move |source| CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Validation { key, constraint } => CliError::Validation { key, constraint },
            CoreError::Parse(message) => CliError::BadData(message),
            CoreError::Io(source) => CliError::Io {
                path: PathBuf::new(),
                source,
            },
            other => CliError::Simulation(other),
        }
    }
}
