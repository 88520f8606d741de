//! Geometry conversations: one chat per session, each turn asking for a
//! `.geo` script and feeding mesher errors back until it meshes.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;
use uuid::Uuid;

use dem_core::mesh::{mesh_from_geo, GeoRequest, GmshMesher, Mesh, MesherError, GAMMA_T, GAMMA_U, OMEGA};

use crate::llm::{extract_fenced_block, BackendError, ChatBackend, Message};

pub const SYSTEM_PROMPT: &str = include_str!("../assets/geo_system_prompt.txt");
/// Corrective turns allowed after the first attempt.
pub const DEFAULT_RETRY_BUDGET: usize = 3;

#[derive(Debug, Error)]
pub enum TurnError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    /// Only when the budget is zero; otherwise a missing block is fed back
    /// like a mesher error.
    #[error("the reply contained no fenced .geo block")]
    NoGeoBlock,
    #[error("no usable geometry after {attempts} attempts; last problem:\n{last_diagnostics}")]
    RetriesExhausted { attempts: usize, last_diagnostics: String },
    /// The mesher itself is unusable; retrying cannot help.
    #[error(transparent)]
    Mesher(MesherError),
}

#[derive(Debug, Clone)]
pub struct ChatSession {
    pub id: Uuid,
    /// System prompt first, then alternating user and assistant turns.
    pub history: Vec<Message>,
    pub last_geo: Option<String>,
    pub last_mesh: Option<Mesh>,
    pub retry_budget: usize,
}

impl Default for ChatSession {
    fn default() -> Self {
        Self::new()
    }
}

impl ChatSession {
    pub fn new() -> Self {
        Self {
            id: Uuid::new_v4(),
            history: vec![Message::system(SYSTEM_PROMPT)],
            last_geo: None,
            last_mesh: None,
            retry_budget: DEFAULT_RETRY_BUDGET,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GeoTurn {
    pub geo_text: String,
    pub mesh: Mesh,
    pub attempts: usize,
}

/// Why an attempt's reply was rejected, as sent back to the model.
fn check_groups(mesh: &Mesh) -> Result<(), String> {
    let missing: Vec<&str> = [OMEGA, GAMMA_U, GAMMA_T]
        .into_iter()
        .filter(|g| mesh.group(g).is_empty())
        .collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(format!(
            "The mesh is missing the physical group(s) {}. Define Omega, Gamma_u and Gamma_t exactly as instructed.",
            missing.join(", ")
        ))
    }
}

/// One user request. Sends the history to the backend, meshes the first
/// fenced block of the reply, and on failure appends the diagnostic as a
/// user turn and asks again, up to `session.retry_budget` times. The
/// session keeps the whole exchange, failed attempts included.
pub fn llm_geo_turn(
    session: &mut ChatSession,
    backend: &dyn ChatBackend,
    mesher: &GmshMesher,
    user_msg: &str,
    dim: usize,
    lc: f64,
) -> Result<GeoTurn, TurnError> {
    session.history.push(Message::user(format!(
        "{user_msg}\n\n(Target: a {dim}D mesh with characteristic length {lc}.)"
    )));
    let mut last_diagnostics = String::new();
    for attempt in 1..=session.retry_budget + 1 {
        let reply = backend.complete(&session.history)?;
        session.history.push(Message::assistant(reply.clone()));

        let problem = match extract_fenced_block(&reply) {
            None if session.retry_budget == 0 => return Err(TurnError::NoGeoBlock),
            None => "Your reply did not contain a fenced ``` code block with the .geo script. Reply with the complete script in one fenced block.".to_string(),
            Some(geo) => {
                let req = GeoRequest {
                    geo_text: geo.clone(),
                    characteristic_length: lc,
                    dim,
                };
                match mesh_from_geo(&req, mesher) {
                    Ok(mesh) => match check_groups(&mesh) {
                        Ok(()) => {
                            session.last_geo = Some(geo.clone());
                            session.last_mesh = Some(mesh.clone());
                            return Ok(GeoTurn {
                                geo_text: geo,
                                mesh,
                                attempts: attempt,
                            });
                        }
                        Err(msg) => msg,
                    },
                    Err(MesherError::MesherFailure { diagnostics, .. }) => {
                        format!("Gmsh failed on this script with:\n{diagnostics}\nFix the script.")
                    }
                    Err(MesherError::Mesh(e)) => format!("Gmsh produced a mesh that could not be used: {e}. Fix the script."),
                    Err(e) => return Err(TurnError::Mesher(e)),
                }
            }
        };
        last_diagnostics = problem.clone();
        if attempt <= session.retry_budget {
            session.history.push(Message::user(problem));
        }
    }
    Err(TurnError::RetriesExhausted {
        attempts: session.retry_budget + 1,
        last_diagnostics,
    })
}

/// Mesh metadata for rendering: coordinates, volume cells and the boundary
/// facets of each group.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeshView {
    pub dim: usize,
    pub nodes: usize,
    pub elements: usize,
    /// Three coordinates per node.
    pub points: Vec<f64>,
    pub cells: Vec<Vec<usize>>,
    /// Element counts per physical group.
    pub groups: BTreeMap<String, usize>,
    /// Node lists of the boundary elements of each group.
    pub boundaries: BTreeMap<String, Vec<Vec<usize>>>,
}

impl MeshView {
    pub fn new(mesh: &Mesh) -> Self {
        let dim = mesh.dim;
        let cells: Vec<Vec<usize>> = mesh
            .elements
            .iter()
            .filter(|e| e.kind.is_volume(dim))
            .map(|e| e.nodes.clone())
            .collect();
        let boundaries = mesh
            .groups
            .iter()
            .filter(|(name, _)| name.as_str() != OMEGA)
            .map(|(name, elems)| {
                let facets = elems
                    .iter()
                    .map(|&i| &mesh.elements[i])
                    .filter(|e| e.kind.is_boundary(dim))
                    .map(|e| e.nodes.clone())
                    .collect();
                (name.clone(), facets)
            })
            .collect();
        Self {
            dim,
            nodes: mesh.node_count(),
            elements: cells.len(),
            points: mesh.nodes.iter().flatten().copied().collect(),
            cells,
            groups: mesh.groups.iter().map(|(k, v)| (k.clone(), v.len())).collect(),
            boundaries,
        }
    }
}
