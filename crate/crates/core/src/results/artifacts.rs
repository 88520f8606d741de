//! Running the configured solvers and writing a run directory:
//! `history.csv`, `result.vtk`, `model.bin`, `fields.json`, `summary.json`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::SolverChoice;
use super::history::write_history;
use super::vtk::{write_vtk, FieldBundle, NamedArray};
use super::RunError;
use crate::dem::{train, TrainControl};
use crate::fem::fem_solve;
use crate::mesh::Mesh;
use crate::nn::write_checkpoint;
use crate::problem::{relative_difference, DemProblem, FieldKind, SolveError, SolveResult, SolverKind, StopReason};

pub const HISTORY_FILE: &str = "history.csv";
pub const VTK_FILE: &str = "result.vtk";
pub const MODEL_FILE: &str = "model.bin";
pub const FIELDS_FILE: &str = "fields.json";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Clone, Default)]
pub struct RunOutcome {
    pub dem: Option<SolveResult>,
    pub fem: Option<SolveResult>,
}

impl RunOutcome {
    /// Relative L2 difference of the DEM and FEM nodal magnitudes.
    pub fn difference(&self) -> Option<f64> {
        match (&self.dem, &self.fem) {
            (Some(d), Some(f)) => Some(relative_difference(&d.magnitude(), &f.magnitude())),
            _ => None,
        }
    }

    pub fn results(&self) -> impl Iterator<Item = &SolveResult> {
        self.fem.iter().chain(self.dem.iter())
    }
}

/// FEM first (it is fast and cannot be aborted), then DEM.
pub fn run_solvers(problem: &DemProblem, choice: SolverChoice, control: &TrainControl) -> Result<RunOutcome, SolveError> {
    let mut outcome = RunOutcome::default();
    if choice.runs_fem() {
        outcome.fem = Some(fem_solve(problem)?);
    }
    if choice.runs_dem() {
        outcome.dem = Some(train(problem, control)?);
    }
    Ok(outcome)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSummary {
    pub solver: SolverKind,
    pub final_loss: f64,
    pub epochs: usize,
    pub stop_reason: StopReason,
    pub wall_time_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub particular_mse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub nodes: usize,
    pub elements: usize,
    pub solvers: Vec<SolverSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relative_difference: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldData {
    pub components: usize,
    pub values: Vec<f64>,
}

/// Nodal fields plus the mesh they live on, for clients that render
/// without a VTK reader.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldsFile {
    pub dim: usize,
    /// Three coordinates per node.
    pub points: Vec<f64>,
    /// Node indices of each volume element.
    pub cells: Vec<Vec<usize>>,
    pub fields: BTreeMap<String, FieldData>,
}

impl FieldsFile {
    pub fn new(mesh: &Mesh, arrays: &[NamedArray]) -> Self {
        Self {
            dim: mesh.dim,
            points: mesh.nodes.iter().flatten().copied().collect(),
            cells: mesh
                .elements
                .iter()
                .filter(|e| e.kind.is_volume(mesh.dim))
                .map(|e| e.nodes.clone())
                .collect(),
            fields: arrays
                .iter()
                .map(|a| {
                    (
                        a.name.clone(),
                        FieldData {
                            components: a.components,
                            values: a.values.clone(),
                        },
                    )
                })
                .collect(),
        }
    }
}

fn solver_name(kind: SolverKind) -> &'static str {
    match kind {
        SolverKind::Dem => "dem",
        SolverKind::Fem => "fem",
    }
}

/// `{solver}_u`, `{solver}_u_magnitude`, then `{solver}_flux` with
/// `{solver}_flux_magnitude`, or `{solver}_stress` with `{solver}_von_mises`.
pub fn nodal_arrays(result: &SolveResult) -> Vec<NamedArray> {
    let s = solver_name(result.solver);
    let f = &result.fields;
    let (field, magnitude) = match f.kind {
        FieldKind::Flux => ("flux", "flux_magnitude"),
        FieldKind::Stress => ("stress", "von_mises"),
    };
    vec![
        NamedArray::new(format!("{s}_u"), result.components, result.solution.clone()),
        NamedArray::new(format!("{s}_u_magnitude"), 1, result.magnitude()),
        NamedArray::new(format!("{s}_{field}"), f.components, f.nodal.clone()),
        NamedArray::new(format!("{s}_{magnitude}"), 1, f.magnitude.clone()),
    ]
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), RunError> {
    let file = File::create(path).map_err(io_err(path))?;
    serde_json::to_writer_pretty(BufWriter::new(file), value).map_err(|e| RunError::Io {
        path: path.to_path_buf(),
        source: e.into(),
    })
}

pub fn summarize(mesh: &Mesh, outcome: &RunOutcome) -> RunSummary {
    RunSummary {
        nodes: mesh.node_count(),
        elements: mesh.elements.iter().filter(|e| e.kind.is_volume(mesh.dim)).count(),
        solvers: outcome
            .results()
            .map(|r| SolverSummary {
                solver: r.solver,
                final_loss: r.final_loss,
                epochs: r.history.len(),
                stop_reason: r.stop_reason,
                wall_time_s: r.wall_time.as_secs_f64(),
                particular_mse: r.particular_mse,
            })
            .collect(),
        relative_difference: outcome.difference(),
    }
}

/// Writes every artifact the outcome has into `dir` (created if missing)
/// and returns the paths written. `history.csv` and `model.bin` need a DEM
/// result.
pub fn write_artifacts(dir: &Path, mesh: &Mesh, outcome: &RunOutcome) -> Result<Vec<PathBuf>, RunError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();

    if let Some(dem) = &outcome.dem {
        let path = dir.join(HISTORY_FILE);
        write_history(&dem.history, &path)?;
        written.push(path);
        if let Some(nets) = &dem.networks {
            let path = dir.join(MODEL_FILE);
            let file = File::create(&path).map_err(io_err(&path))?;
            let mut params = Vec::new();
            params.extend(nets.particular.iter());
            params.push(&nets.free);
            write_checkpoint(BufWriter::new(file), &params).map_err(crate::problem::SolveError::from)?;
            written.push(path);
        }
    }

    let arrays: Vec<NamedArray> = outcome.results().flat_map(nodal_arrays).collect();
    let mut bundle = FieldBundle::new(mesh);
    bundle.point_data = arrays.clone();
    let path = dir.join(VTK_FILE);
    write_vtk(&bundle, &path)?;
    written.push(path);

    let path = dir.join(FIELDS_FILE);
    write_json(&path, &FieldsFile::new(mesh, &arrays))?;
    written.push(path);

    let path = dir.join(SUMMARY_FILE);
    write_json(&path, &summarize(mesh, outcome))?;
    written.push(path);
    Ok(written)
}
