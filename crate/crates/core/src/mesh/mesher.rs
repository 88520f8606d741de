//! Meshing `.geo` scripts through an external gmsh executable.

use std::io::ErrorKind;
use std::path::PathBuf;
use std::process::Command;

use thiserror::Error;

use super::{parse_msh, Mesh, MeshError};

/// Environment variable naming the gmsh executable.
pub const GMSH_BIN_ENV: &str = "LMDEM_GMSH_BIN";

#[derive(Debug, Clone, PartialEq)]
pub struct GeoRequest {
    pub geo_text: String,
    /// Global characteristic length, passed to gmsh as `-clscale`.
    pub characteristic_length: f64,
    pub dim: usize,
}

#[derive(Debug, Error)]
pub enum MesherError {
    #[error("mesher executable `{0}` not found")]
    MesherNotFound(PathBuf),
    #[error("mesher failed:\n{diagnostics}")]
    MesherFailure {
        /// Combined stdout and stderr of the mesher, verbatim.
        diagnostics: String,
        /// Kept on disk for inspection.
        workdir: PathBuf,
    },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

/// Handle on a gmsh-compatible executable.
#[derive(Debug, Clone, PartialEq)]
pub struct GmshMesher {
    pub bin: PathBuf,
}

impl Default for GmshMesher {
    fn default() -> Self {
        Self::from_env()
    }
}

impl GmshMesher {
    pub fn new(bin: impl Into<PathBuf>) -> Self {
        Self { bin: bin.into() }
    }

    /// Reads `LMDEM_GMSH_BIN`, falling back to `gmsh` on the `PATH`.
    pub fn from_env() -> Self {
        let bin = std::env::var_os(GMSH_BIN_ENV)
            .filter(|v| !v.is_empty())
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("gmsh"));
        Self { bin }
    }
}

/// Writes the script to a fresh temporary directory, runs
/// `gmsh -<dim> -clscale <l_c> -format msh2 -o out.msh in.geo` and parses the
/// result. The directory is removed on success and kept on failure.
pub fn mesh_from_geo(req: &GeoRequest, mesher: &GmshMesher) -> Result<Mesh, MesherError> {
    if !(req.characteristic_length > 0.0) || !req.characteristic_length.is_finite() {
        return Err(MesherError::InvalidRequest(format!(
            "characteristic length must be positive, got {}",
            req.characteristic_length
        )));
    }
    if req.dim != 2 && req.dim != 3 {
        return Err(MesherError::InvalidRequest(format!("dimension must be 2 or 3, got {}", req.dim)));
    }
    let dir = tempfile::Builder::new().prefix("dem-mesh-").tempdir()?;
    let geo = dir.path().join("in.geo");
    let out = dir.path().join("out.msh");
    std::fs::write(&geo, &req.geo_text)?;

    let result = Command::new(&mesher.bin)
        .arg(format!("-{}", req.dim))
        .arg("-clscale")
        .arg(format!("{}", req.characteristic_length))
        .arg("-format")
        .arg("msh2")
        .arg("-o")
        .arg(&out)
        .arg(&geo)
        .current_dir(dir.path())
        .output();
    let output = match result {
        Ok(o) => o,
        Err(e) if e.kind() == ErrorKind::NotFound => {
            return Err(MesherError::MesherNotFound(mesher.bin.clone()))
        }
        Err(e) => return Err(e.into()),
    };

    let mut diagnostics = String::from_utf8_lossy(&output.stdout).into_owned();
    diagnostics.push_str(&String::from_utf8_lossy(&output.stderr));
    // gmsh may exit 0 after reporting errors.
    let reported_error = diagnostics.lines().any(|l| l.trim_start().starts_with("Error"));
    if !output.status.success() || reported_error || !out.exists() {
        if !output.status.success() && !reported_error {
            diagnostics.push_str(&format!("\nmesher exited with {}", output.status));
        }
        return Err(MesherError::MesherFailure {
            diagnostics,
            workdir: dir.keep(),
        });
    }
    let bytes = std::fs::read(&out)?;
    match parse_msh(&bytes) {
        Ok(mesh) => Ok(mesh),
        Err(e) => {
            // Keep the output around so the bad mesh can be inspected.
            let _ = dir.keep();
            Err(e.into())
        }
    }
}
