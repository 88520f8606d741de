//! Config files, loss histories, VTK export and run directories.

pub mod artifacts;
pub mod config;
pub mod history;
pub mod vtk;

use std::path::PathBuf;

use thiserror::Error;

use crate::mesh::{MeshError, MesherError};
use crate::problem::SolveError;

pub use artifacts::{run_solvers, write_artifacts, RunOutcome, RunSummary};
pub use config::{MaterialConfig, RunConfig, SchemaError, SolverChoice};
pub use history::{read_history, write_history};
pub use vtk::{write_vtk, FieldBundle, NamedArray};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("config error at {0}")]
    Schema(#[from] SchemaError),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Mesher(#[from] MesherError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("invalid field bundle: {0}")]
    Bundle(String),
    #[error("malformed history: {0}")]
    History(String),
}

impl RunError {
    /// 1 for bad input, 2 for solver failures, 3 for mesher failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Schema(_) | RunError::Io { .. } | RunError::Mesh(_) | RunError::History(_) => 1,
            RunError::Solve(_) | RunError::Bundle(_) => 2,
            RunError::Mesher(_) => 3,
        }
    }
}
