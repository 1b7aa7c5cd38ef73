//! Error type shared by every subcommand, carrying the process exit-code
//! contract: 0 success, 2 input or validation failure, 3 output I/O failure,
//! 4 numerical failure.

use std::path::Path;

use mona_core::dynamic_points::DynamicPointsError;
use mona_core::geometry::GeometryError;
use mona_core::object_filter::ObjectFilterError;
use mona_core::scene::SceneError;
use mona_core::traj_eval::TrajEvalError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad inputs: unreadable or malformed files, out-of-range parameters,
    /// mismatched artifacts. Exit code 2.
    #[error("{0}")]
    Validation(String),
    /// Failure writing outputs. Exit code 3.
    #[error("{0}")]
    Io(String),
    /// The math gave up: solver divergence or a degenerate decomposition.
    /// Exit code 4.
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Io(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }

    /// Input file that cannot be read or parsed.
    pub fn input(path: &Path, detail: impl std::fmt::Display) -> CliError {
        CliError::Validation(format!("{}: {detail}", path.display()))
    }

    /// Output file or directory that cannot be written.
    pub fn output(path: &Path, detail: impl std::fmt::Display) -> CliError {
        CliError::Io(format!("{}: {detail}", path.display()))
    }
}

impl From<SceneError> for CliError {
    fn from(e: SceneError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<GeometryError> for CliError {
    fn from(e: GeometryError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<ObjectFilterError> for CliError {
    fn from(e: ObjectFilterError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<DynamicPointsError> for CliError {
    fn from(e: DynamicPointsError) -> Self {
        match e {
            DynamicPointsError::NotPositiveDefinite => CliError::Numerical(e.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<TrajEvalError> for CliError {
    fn from(e: TrajEvalError) -> Self {
        match e {
            TrajEvalError::SolverDiverged { .. } | TrajEvalError::DegenerateConfiguration { .. } => {
                CliError::Numerical(e.to_string())
            }
            other => CliError::Validation(other.to_string()),
        }
    }
}
