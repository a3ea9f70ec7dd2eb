use std::path::PathBuf;

use thiserror::Error;

/// Exit statuses: 1 other failure, 2 invalid input, 3 gap closure or
/// singular path, 4 estimator not converged, 5 certificate or check failed.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid input: {0}")]
    Validation(String),
    #[error(transparent)]
    Core(#[from] topoidx::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("certification failed: {0}")]
    Certification(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use topoidx::Error as E;
        match self {
            CliError::Validation(_) => 2,
            CliError::Core(e) => match e {
                E::InvalidArgument(_)
                | E::InvalidLattice(_)
                | E::FiberParity { .. }
                | E::OddDimension(_)
                | E::EvenDimension(_)
                | E::UnsupportedClass(_)
                | E::LatticeMismatch(_)
                | E::NotChiral(_)
                | E::NotFlat(_) => 2,
                E::GapClosed { .. } | E::SingularPath { .. } | E::NotInvertible { .. } => 3,
                E::NotConverged(_) => 4,
                _ => 1,
            },
            CliError::Io { .. } | CliError::Json(_) => 1,
            CliError::Certification(_) => 5,
        }
    }
}
