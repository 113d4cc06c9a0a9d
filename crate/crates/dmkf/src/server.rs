//! JSON API under `/api`.
//!
//! Readers take a cheap clone of the current workspace and never wait for a
//! commit. Commits are serialized by one writer lock, build the next
//! workspace on the side, persist the snapshot file and only then publish
//! the new state and acknowledge.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, RwLock};

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get};
use axum::{Json, Router};
use dmkf_core::mapping::{active_mappings, unit_id, Clock, MappingRecord, SourceModel};
use dmkf_core::model::{enumerate_elements, ElementRef, Phase, RelationKind, Stereotype};
use dmkf_core::repository::{EdgeFilter, QueryFilter};
use dmkf_core::validate::{count_by_severity, validate_plan};
use serde::{Deserialize, Deserializer, Serialize};
use serde_json::{json, Value};
use tokio::sync::Mutex;

use crate::engine;
use crate::workspace::{Failure, Workspace};

pub const PAGE_SIZE: usize = 50;

pub struct AppState {
    current: RwLock<Arc<Workspace>>,
    writer: Mutex<()>,
    clock: Clock,
}

impl AppState {
    pub fn new(workspace: Workspace, clock: Clock) -> Self {
        AppState {
            current: RwLock::new(Arc::new(workspace)),
            writer: Mutex::new(()),
            clock,
        }
    }

    fn snapshot(&self) -> Arc<Workspace> {
        self.current.read().expect("state lock").clone()
    }

    /// Runs `change` on a copy of the workspace, saves it and publishes it.
    async fn write<T>(
        &self,
        change: impl FnOnce(&mut Workspace, Clock) -> Result<T, Failure>,
    ) -> Result<T, ApiError> {
        let _guard = self.writer.lock().await;
        let mut next = (*self.snapshot()).clone();
        let value = change(&mut next, self.clock.clone())?;
        next.save()?;
        *self.current.write().expect("state lock") = Arc::new(next);
        Ok(value)
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    failure: Failure,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            failure: Failure::new("MalformedRequest", message),
        }
    }
}

fn status_of(class: &str) -> StatusCode {
    match class {
        "UnknownElement" | "UnknownConcept" | "UnknownPlan" | "NotMapped" => StatusCode::NOT_FOUND,
        "CandidateViolation" | "SupersessionConflict" | "StaleSession" | "RegistryMismatch" => {
            StatusCode::CONFLICT
        }
        "Io" | "IntegrityViolation" | "SnapshotError" => StatusCode::INTERNAL_SERVER_ERROR,
        _ => StatusCode::BAD_REQUEST,
    }
}

impl From<Failure> for ApiError {
    fn from(failure: Failure) -> Self {
        ApiError {
            status: status_of(failure.class),
            failure,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({
            "error_class": self.failure.class,
            "message": self.failure.message,
        });
        if let Some(element) = self.failure.element {
            body["element"] = Value::String(element);
        }
        (self.status, Json(body)).into_response()
    }
}

type ApiResult = Result<Json<Value>, ApiError>;
type Params = Result<Query<HashMap<String, String>>, QueryRejection>;

fn params(q: Params) -> Result<HashMap<String, String>, ApiError> {
    q.map(|Query(m)| m)
        .map_err(|e| ApiError::bad_request(e.body_text()))
}

fn opt<T: std::str::FromStr>(p: &HashMap<String, String>, key: &str) -> Result<Option<T>, ApiError>
where
    T::Err: std::fmt::Display,
{
    p.get(key)
        .filter(|v| !v.is_empty())
        .map(|v| {
            v.parse()
                .map_err(|e: T::Err| ApiError::bad_request(format!("{key}: {e}")))
        })
        .transpose()
}

fn page_of<T: Serialize>(items: Vec<T>, p: &HashMap<String, String>) -> ApiResult {
    let page: usize = opt(p, "page")?.unwrap_or(1);
    if page == 0 {
        return Err(ApiError::bad_request("page: pages start at 1"));
    }
    let total = items.len();
    let items: Vec<T> = items
        .into_iter()
        .skip((page - 1) * PAGE_SIZE)
        .take(PAGE_SIZE)
        .collect();
    Ok(Json(json!({
        "total": total,
        "page": page,
        "page_size": PAGE_SIZE,
        "items": items,
    })))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/plans", get(plans))
        .route("/api/elements", get(elements))
        .route("/api/candidates", get(candidates))
        .route("/api/registry/concepts", get(concepts))
        .route("/api/mappings", get(mappings).post(commit))
        .route("/api/mappings/{*path}", delete(retract))
        .route("/api/repository/units", get(units))
        .route("/api/repository/edges", get(edges))
        .route("/api/diagnostics", get(diagnostics))
        .with_state(state)
}

pub async fn serve(workspace: Workspace, bind: SocketAddr) -> std::io::Result<()> {
    let state = Arc::new(AppState::new(workspace, Clock::System));
    let listener = tokio::net::TcpListener::bind(bind).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

async fn plans(State(state): State<Arc<AppState>>) -> ApiResult {
    let ws = state.snapshot();
    let active = active_mappings(ws.snapshot.mappings());
    let rows: Vec<Value> = ws
        .plans
        .iter()
        .map(|p| {
            let mappable: Vec<_> = enumerate_elements(p)
                .into_iter()
                .filter(|e| e.stereotype.is_some())
                .collect();
            let mapped = mappable
                .iter()
                .filter(|e| active.contains_key(&e.element))
                .count();
            json!({
                "plan_id": p.plan_id,
                "title": p.title,
                "phases": p.phases.keys().collect::<Vec<_>>(),
                "elements": mappable.len(),
                "mapped": mapped,
            })
        })
        .collect();
    Ok(Json(Value::Array(rows)))
}

#[derive(Serialize)]
struct MappingView<'a> {
    index: usize,
    concept: &'a str,
    mapper: &'a str,
    timestamp: String,
}

async fn elements(State(state): State<Arc<AppState>>, q: Params) -> ApiResult {
    let p = params(q)?;
    let plan: Option<String> = opt(&p, "plan")?;
    let phase: Option<Phase> = opt(&p, "phase")?;
    let stereotype: Option<Stereotype> = opt(&p, "stereotype")?;
    let unmapped: bool = opt(&p, "unmapped")?.unwrap_or(false);
    let ws = state.snapshot();
    if let Some(id) = &plan {
        if ws.plan(id).is_none() {
            return Err(Failure::new("UnknownPlan", format!("no loaded plan `{id}`")).into());
        }
    }
    let active = active_mappings(ws.snapshot.mappings());
    let mut rows = Vec::new();
    for entry in ws
        .plans
        .iter()
        .filter(|pl| plan.as_ref().is_none_or(|id| &pl.plan_id == id))
        .flat_map(enumerate_elements)
    {
        let Some(st) = entry.stereotype else { continue };
        if phase.is_some_and(|ph| entry.element.phase != ph) || stereotype.is_some_and(|s| s != st)
        {
            continue;
        }
        let mapping = active.get(&entry.element).map(|(i, r)| MappingView {
            index: *i,
            concept: r.concept_name.as_deref().unwrap_or_default(),
            mapper: &r.mapper,
            timestamp: r.timestamp.to_rfc3339(),
        });
        if unmapped && mapping.is_some() {
            continue;
        }
        rows.push(json!({
            "path": entry.element,
            "kind": entry.element.kind,
            "name": entry.element.element_id,
            "stereotype": st,
            "description": entry.description,
            "mapping": mapping,
        }));
    }
    page_of(rows, &p)
}

fn element_param(p: &HashMap<String, String>) -> Result<ElementRef, ApiError> {
    let raw = p
        .get("element")
        .ok_or_else(|| ApiError::bad_request("element: missing parameter"))?;
    raw.parse()
        .map_err(|e| ApiError::bad_request(format!("element: {e}")))
}

async fn candidates(State(state): State<Arc<AppState>>, q: Params) -> ApiResult {
    let p = params(q)?;
    let element = element_param(&p)?;
    let ranked: bool = opt(&p, "ranked")?.unwrap_or(false);
    let ws = state.snapshot();
    let rows = engine::candidates(&ws, &element, ranked)?;
    Ok(Json(json!({
        "element": element,
        "stereotype": element.stereotype(),
        "phase": element.phase,
        "candidates": rows,
    })))
}

async fn concepts(State(state): State<Arc<AppState>>, q: Params) -> ApiResult {
    let p = params(q)?;
    let phase: Option<Phase> = opt(&p, "phase")?;
    let stereotype: Option<Stereotype> = opt(&p, "stereotype")?;
    let ws = state.snapshot();
    let rows: Vec<_> = ws
        .registry
        .concepts()
        .iter()
        .filter(|c| {
            phase.is_none_or(|ph| c.phase == ph)
                && stereotype.is_none_or(|s| c.stereotypes.contains(&s))
        })
        .collect();
    Ok(Json(json!(rows)))
}

async fn mappings(State(state): State<Arc<AppState>>, q: Params) -> ApiResult {
    let p = params(q)?;
    let plan: Option<String> = opt(&p, "plan")?;
    let ws = state.snapshot();
    let rows: Vec<Value> = ws
        .snapshot
        .mappings()
        .iter()
        .enumerate()
        .filter(|(_, r)| plan.as_ref().is_none_or(|id| &r.element.plan_id == id))
        .map(|(i, r)| record_json(i, r))
        .collect();
    page_of(rows, &p)
}

fn record_json(index: usize, r: &MappingRecord) -> Value {
    json!({
        "index": index,
        "element": r.element,
        "stereotype": r.stereotype,
        "concept": r.concept_name,
        "concept_phase": r.concept_phase,
        "mapper": r.mapper,
        "timestamp": r.timestamp.to_rfc3339(),
        "supersedes": r.supersedes,
    })
}

/// Distinguishes an absent field from an explicit `null`.
fn present<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Option<usize>>, D::Error> {
    Option::<usize>::deserialize(d).map(Some)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CommitBody {
    element: String,
    concept: String,
    #[serde(default)]
    mapper: Option<String>,
    /// Index of the record the client believes is current, or null for an
    /// unmapped element.
    #[serde(default, deserialize_with = "present")]
    supersedes: Option<Option<usize>>,
}

/// The mapper named in the body, else the bearer token.
fn mapper(headers: &HeaderMap, body: Option<String>) -> Result<String, ApiError> {
    let bearer = headers
        .get(axum::http::header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(str::to_string);
    body.filter(|m| !m.trim().is_empty())
        .or(bearer)
        .ok_or_else(|| ApiError::bad_request("mapper: give a mapper field or a bearer token"))
}

async fn commit(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    body: Result<Json<CommitBody>, JsonRejection>,
) -> Result<(StatusCode, Json<Value>), ApiError> {
    let Json(body) = body.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let element: ElementRef = body
        .element
        .parse()
        .map_err(|e| ApiError::bad_request(format!("element: {e}")))?;
    let who = mapper(&headers, body.mapper)?;
    let (index, record) = state
        .write(|ws, clock| ws.commit(&element, &body.concept, &who, body.supersedes, clock))
        .await?;
    Ok((StatusCode::CREATED, Json(record_json(index, &record))))
}

async fn retract(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    Path(path): Path<String>,
) -> ApiResult {
    let element: ElementRef = path
        .trim_start_matches('/')
        .parse()
        .map_err(|e| ApiError::bad_request(format!("element: {e}")))?;
    let who = mapper(&headers, None).unwrap_or_else(|_| "api".to_string());
    let (index, record) = state
        .write(|ws, clock| ws.retract(&element, &who, clock))
        .await?;
    Ok(Json(record_json(index, &record)))
}

async fn units(State(state): State<Arc<AppState>>, q: Params) -> ApiResult {
    let p = params(q)?;
    let filter = QueryFilter {
        phase: opt(&p, "phase")?,
        concept_name: opt(&p, "concept")?,
        plan_id: opt(&p, "plan")?,
        source_model: opt::<SourceModel>(&p, "source_model")?,
    };
    let ws = state.snapshot();
    let rows = ws.snapshot.query(&filter).map_err(Failure::from)?;
    page_of(rows, &p)
}

async fn edges(State(state): State<Arc<AppState>>, q: Params) -> ApiResult {
    let p = params(q)?;
    let relation: Option<RelationKind> = opt(&p, "relation")?;
    let unit = p
        .get("unit")
        .filter(|u| !u.is_empty())
        .map(|u| match u.parse::<ElementRef>() {
            Ok(path) => unit_id(&path),
            Err(_) => u.clone(),
        });
    let ws = state.snapshot();
    let rows = ws.snapshot.query_edges(&EdgeFilter { relation, unit });
    page_of(rows, &p)
}

async fn diagnostics(State(state): State<Arc<AppState>>, q: Params) -> ApiResult {
    let p = params(q)?;
    let ws = state.snapshot();
    let selected: Vec<_> = match p.get("plan") {
        Some(id) => vec![ws
            .plan(id)
            .ok_or_else(|| Failure::new("UnknownPlan", format!("no loaded plan `{id}`")))?],
        None => ws.plans.iter().collect(),
    };
    let diagnostics: Vec<_> = selected.into_iter().flat_map(validate_plan).collect();
    let (errors, warnings) = count_by_severity(&diagnostics);
    Ok(Json(json!({
        "errors": errors,
        "warnings": warnings,
        "diagnostics": diagnostics,
    })))
}
