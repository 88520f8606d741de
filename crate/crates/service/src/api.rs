//! HTTP interface: geometry chat sessions, solver jobs and their results.
//! Bodies are JSON; `/jobs/{id}/vtk` streams the legacy VTK file.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};
use uuid::Uuid;

use dem_core::expr::models;
use dem_core::mesh::GmshMesher;
use dem_core::results::artifacts::{FieldsFile, FIELDS_FILE, SUMMARY_FILE, VTK_FILE};
use dem_core::results::{MaterialConfig, RunConfig};

use crate::jobs::{JobError, JobManager};
use crate::llm::ChatBackend;
use crate::session::{llm_geo_turn, ChatSession, MeshView, TurnError, DEFAULT_RETRY_BUDGET};

pub struct AppState {
    pub jobs: JobManager,
    pub sessions: Mutex<HashMap<Uuid, Arc<Mutex<ChatSession>>>>,
    pub backend: Arc<dyn ChatBackend>,
    pub mesher: GmshMesher,
}

impl AppState {
    pub fn new(jobs: JobManager, backend: Arc<dyn ChatBackend>, mesher: GmshMesher) -> Self {
        Self {
            jobs,
            sessions: Mutex::default(),
            backend,
            mesher,
        }
    }

    fn session(&self, id: Uuid) -> Result<Arc<Mutex<ChatSession>>, ApiError> {
        self.sessions
            .lock()
            .unwrap()
            .get(&id)
            .cloned()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown session {id}")))
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: Value,
}

impl ApiError {
    fn new(status: StatusCode, message: impl std::fmt::Display) -> Self {
        Self {
            status,
            body: json!({ "error": message.to_string() }),
        }
    }

    fn with(mut self, key: &str, value: Value) -> Self {
        self.body[key] = value;
        self
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<JobError> for ApiError {
    fn from(e: JobError) -> Self {
        let status = match e {
            JobError::NotFound(_) => StatusCode::NOT_FOUND,
            JobError::InvalidTransition { .. } => StatusCode::CONFLICT,
            JobError::Io { .. } => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e)
    }
}

impl From<TurnError> for ApiError {
    fn from(e: TurnError) -> Self {
        match &e {
            TurnError::Backend(b) => ApiError::new(StatusCode::BAD_GATEWAY, &e).with("status", json!(b.status())),
            TurnError::RetriesExhausted {
                attempts,
                last_diagnostics,
            } => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, &e)
                .with("attempts", json!(attempts))
                .with("diagnostics", json!(last_diagnostics)),
            TurnError::NoGeoBlock => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, &e),
            TurnError::Mesher(_) => ApiError::new(StatusCode::SERVICE_UNAVAILABLE, &e),
        }
    }
}

type ApiResult<T> = Result<T, ApiError>;
type Shared = State<Arc<AppState>>;

fn parse_id(raw: &str) -> ApiResult<Uuid> {
    Uuid::parse_str(raw).map_err(|_| ApiError::new(StatusCode::NOT_FOUND, format!("unknown id {raw}")))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/defaults", get(defaults))
        .route("/sessions", post(new_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/turn", post(turn))
        .route("/sessions/{id}/mesh", get(session_mesh))
        .route("/jobs", post(submit_job).get(list_jobs))
        .route("/jobs/{id}", get(job_status))
        .route("/jobs/{id}/history", get(job_history))
        .route("/jobs/{id}/field", get(job_field))
        .route("/jobs/{id}/summary", get(job_summary))
        .route("/jobs/{id}/abort", post(abort_job))
        .route("/jobs/{id}/vtk", get(job_vtk))
        .with_state(state)
}

/// Every default the configuration panels show, from the same structs the
/// config parser uses.
pub fn defaults_json() -> Value {
    let mut config = serde_json::to_value(RunConfig::new("", MaterialConfig::Poisson {})).expect("serializes");
    config["geometry"].as_object_mut().unwrap().remove("msh");
    let mut materials = serde_json::Map::new();
    for model in [
        "poisson",
        "screened_poisson",
        "linear_elastic",
        "neo_hookean",
        "neo_hookean_isochoric",
        "isihara",
        "gent_thomas",
    ] {
        let m: MaterialConfig = serde_json::from_value(json!({ "model": model })).expect("material defaults");
        materials.insert(model.into(), serde_json::to_value(m).unwrap());
    }
    materials.insert("custom".into(), json!({ "model": "custom", "energy": models::NEO_HOOKEAN }));
    json!({
        "config": config,
        "materials": materials,
        "dirichlet_methods": ["hard", "smooth", "penalty"],
        "activations": ["tanh", "silu", "gelu"],
        "solvers": ["dem", "fem", "both"],
        "retry_budget": DEFAULT_RETRY_BUDGET,
        "energy_models": {
            "neo_hookean": models::NEO_HOOKEAN,
            "isihara": models::ISIHARA,
            "gent_thomas": models::GENT_THOMAS,
        },
    })
}

async fn defaults() -> Json<Value> {
    Json(defaults_json())
}

async fn new_session(State(state): Shared) -> (StatusCode, Json<Value>) {
    let session = ChatSession::new();
    let id = session.id;
    state.sessions.lock().unwrap().insert(id, Arc::new(Mutex::new(session)));
    (StatusCode::CREATED, Json(json!({ "id": id })))
}

async fn get_session(State(state): Shared, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let session = state.session(parse_id(&id)?)?;
    let s = session.lock().unwrap();
    Ok(Json(json!({
        "id": s.id,
        "history": s.history,
        "geo_text": s.last_geo,
        "retry_budget": s.retry_budget,
    })))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TurnRequest {
    message: String,
    #[serde(default = "default_dim")]
    dim: usize,
    #[serde(default = "default_lc")]
    lc: f64,
}

fn default_dim() -> usize {
    2
}

fn default_lc() -> f64 {
    0.1
}

async fn turn(State(state): Shared, Path(id): Path<String>, Json(req): Json<TurnRequest>) -> ApiResult<Json<Value>> {
    let session = state.session(parse_id(&id)?)?;
    let st = state.clone();
    let result = tokio::task::spawn_blocking(move || {
        let mut s = session.lock().unwrap();
        llm_geo_turn(&mut s, st.backend.as_ref(), &st.mesher, &req.message, req.dim, req.lc)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e))??;
    let view = MeshView::new(&result.mesh);
    Ok(Json(json!({
        "geo_text": result.geo_text,
        "attempts": result.attempts,
        "mesh": { "dim": view.dim, "nodes": view.nodes, "elements": view.elements, "groups": view.groups },
    })))
}

async fn session_mesh(State(state): Shared, Path(id): Path<String>) -> ApiResult<Json<MeshView>> {
    let session = state.session(parse_id(&id)?)?;
    let s = session.lock().unwrap();
    s.last_mesh
        .as_ref()
        .map(|m| Json(MeshView::new(m)))
        .ok_or_else(|| ApiError::new(StatusCode::CONFLICT, "the session has no mesh yet"))
}

async fn submit_job(State(state): Shared, Json(body): Json<Value>) -> ApiResult<(StatusCode, Json<Value>)> {
    let config = RunConfig::from_json_value(body)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, &e).with("path", json!(e.path)))?;
    let id = state.jobs.submit(config)?;
    Ok((StatusCode::ACCEPTED, Json(json!({ "id": id }))))
}

async fn list_jobs(State(state): Shared) -> Json<Value> {
    Json(json!(state.jobs.list()))
}

async fn job_status(State(state): Shared, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    Ok(Json(json!(state.jobs.status(parse_id(&id)?)?)))
}

async fn job_history(State(state): Shared, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let loss = state.jobs.history(parse_id(&id)?)?;
    Ok(Json(json!({ "loss": loss })))
}

/// Reads an artifact of a job, 409 while it does not exist yet.
fn artifact(state: &AppState, id: &str, name: &str) -> ApiResult<Vec<u8>> {
    let id = parse_id(id)?;
    let dir = state.jobs.dir(id)?;
    std::fs::read(dir.join(name)).map_err(|_| {
        let st = state.jobs.status(id).map(|s| s.state);
        ApiError::new(StatusCode::CONFLICT, format!("`{name}` is not available (job is {st:?})"))
    })
}

#[derive(Deserialize)]
struct FieldQuery {
    name: Option<String>,
}

async fn job_field(State(state): Shared, Path(id): Path<String>, Query(q): Query<FieldQuery>) -> ApiResult<Json<Value>> {
    let bytes = artifact(&state, &id, FIELDS_FILE)?;
    let fields: FieldsFile =
        serde_json::from_slice(&bytes).map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e))?;
    let names: Vec<&String> = fields.fields.keys().collect();
    let Some(name) = q.name else {
        return Ok(Json(json!({ "names": names })));
    };
    let Some(data) = fields.fields.get(&name) else {
        return Err(ApiError::new(StatusCode::NOT_FOUND, format!("unknown field `{name}`")).with("names", json!(names)));
    };
    Ok(Json(json!({
        "name": name,
        "components": data.components,
        "values": data.values,
        "dim": fields.dim,
        "points": fields.points,
        "cells": fields.cells,
    })))
}

async fn job_summary(State(state): Shared, Path(id): Path<String>) -> ApiResult<Response> {
    let bytes = artifact(&state, &id, SUMMARY_FILE)?;
    Ok(([(header::CONTENT_TYPE, "application/json")], bytes).into_response())
}

async fn abort_job(State(state): Shared, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let id = parse_id(&id)?;
    let state_now = state.jobs.abort(id)?;
    Ok(Json(json!({ "id": id, "state": state_now })))
}

async fn job_vtk(State(state): Shared, Path(id): Path<String>) -> ApiResult<Response> {
    let bytes = artifact(&state, &id, VTK_FILE)?;
    Ok((
        [
            (header::CONTENT_TYPE, "application/octet-stream"),
            (header::CONTENT_DISPOSITION, "attachment; filename=\"result.vtk\""),
        ],
        bytes,
    )
        .into_response())
}

/// Serves until the process is stopped.
pub async fn serve(state: Arc<AppState>, listener: tokio::net::TcpListener) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}
