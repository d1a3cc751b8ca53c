//! HTTP API for drafting bug reports against analyzed apps.
//!
//! All state lives in the [`Store`]; the router keeps only per-draft locks,
//! so a restarted service picks up every draft where it was left. Mutating
//! endpoints honor an `Idempotency-Key` header: a retried request with the
//! same key gets the recorded response instead of being applied twice.

use std::collections::HashMap;
use std::future::Future;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use stepwise_core::model::{Action, ActionKind, ComponentKey, GridCell, ShotAddress};
use stepwise_core::reporting::{self, FieldError, ReportError, ReportFormat};
use stepwise_core::store::StoreError;
use stepwise_core::suggestion::{self, Orientation, StepComponent, SuggestError};
use stepwise_core::{ReportDraft, ReportHeader, ReproStep, Store};
use tower_http::cors::CorsLayer;

pub const IDEMPOTENCY_HEADER: &str = "idempotency-key";

/// Error body: `{"error": code, "message": text, "fields": [...]}`.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    fields: Vec<FieldError>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
            fields: Vec::new(),
        }
    }

    fn validation(fields: Vec<FieldError>) -> Self {
        let message = fields
            .iter()
            .map(|f| format!("{}: {}", f.field, f.message))
            .collect::<Vec<_>>()
            .join("; ");
        ApiError {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            code: "validation",
            message,
            fields,
        }
    }

    fn field(field: &str, message: impl Into<String>) -> Self {
        Self::validation(vec![FieldError {
            field: field.into(),
            message: message.into(),
        }])
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad-request", message)
    }

    fn internal(e: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({
            "error": self.code,
            "message": self.message,
            "fields": self.fields,
        });
        (self.status, Json(body)).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::NotFound { .. } | StoreError::InvalidId(_) => {
                ApiError::new(StatusCode::NOT_FOUND, "not-found", e.to_string())
            }
            StoreError::Io { .. } | StoreError::Corrupt { .. } => ApiError::internal(e),
        }
    }
}

impl From<SuggestError> for ApiError {
    fn from(e: SuggestError) -> Self {
        let code = match &e {
            SuggestError::StepNotFound(_) => {
                return ApiError::new(StatusCode::NOT_FOUND, "not-found", e.to_string())
            }
            SuggestError::EmptyGraph => return ApiError::internal(e),
            SuggestError::Sequencing { .. } => "sequencing",
            SuggestError::StaleSuggestion { .. } => "stale-suggestion",
            SuggestError::UnknownState(_) => "unknown-state",
            SuggestError::ShotMismatch(_) => "shot-mismatch",
        };
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, code, e.to_string())
    }
}

impl From<ReportError> for ApiError {
    fn from(e: ReportError) -> Self {
        match e {
            ReportError::Validation(fields) => ApiError::validation(fields),
            ReportError::UnknownFormat(_) => ApiError::field("format", e.to_string()),
            ReportError::StaleStep { .. } => {
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "stale-suggestion", e.to_string())
            }
            ReportError::NotReplayable(_) | ReportError::Serde(_) => ApiError::internal(e),
        }
    }
}

type ApiResult = Result<Response, ApiError>;

struct ServiceState {
    store: Arc<Store>,
    locks: Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>,
}

impl ServiceState {
    fn lock_for(&self, name: &str) -> Arc<tokio::sync::Mutex<()>> {
        let mut locks = self.locks.lock().unwrap_or_else(|p| p.into_inner());
        Arc::clone(locks.entry(name.to_string()).or_default())
    }
}

type Shared = Arc<ServiceState>;

pub fn router(store: Arc<Store>) -> Router {
    let state = Arc::new(ServiceState {
        store,
        locks: Mutex::new(HashMap::new()),
    });
    Router::new()
        .route("/api/apps", get(list_apps))
        .route("/api/apps/{app}/{version}/vocabulary", get(vocabulary))
        .route("/api/reports", post(create_draft))
        .route("/api/reports/{id}", get(get_report))
        .route("/api/reports/{id}/steps", get(get_draft).post(add_step))
        .route("/api/reports/{id}/steps/{n}", delete(remove_step))
        .route("/api/reports/{id}/suggest", get(suggest))
        .route("/api/reports/{id}/finalize", post(finalize))
        .route("/api/shots/{address}", get(get_shot))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

#[derive(Serialize, Deserialize)]
struct Recorded {
    status: u16,
    body: Value,
}

/// Runs `op` once per idempotency token; the lock named `lock` must cover
/// every mutation of the resource `op` touches.
async fn idempotent<F, Fut>(state: &ServiceState, lock: &str, scope: &str, headers: &HeaderMap, op: F) -> ApiResult
where
    F: FnOnce() -> Fut,
    Fut: Future<Output = Result<(StatusCode, Value), ApiError>>,
{
    let token = match headers.get(IDEMPOTENCY_HEADER) {
        None => None,
        Some(v) => Some(
            v.to_str()
                .map_err(|_| ApiError::bad_request("idempotency key must be visible ASCII"))?
                .to_string(),
        ),
    };
    let guard = state.lock_for(lock);
    let _held = guard.lock().await;
    if let Some(token) = &token {
        let prior = state.store.idempotent_response(scope, token).map_err(|e| match e {
            StoreError::InvalidId(bad) if &bad == token => ApiError::bad_request(
                "idempotency key may only contain letters, digits, '-', '_' and '.'",
            ),
            other => other.into(),
        })?;
        if let Some(bytes) = prior {
            let rec: Recorded = serde_json::from_slice(&bytes).map_err(ApiError::internal)?;
            let status = StatusCode::from_u16(rec.status).map_err(ApiError::internal)?;
            return Ok((status, Json(rec.body)).into_response());
        }
    }
    let (status, body) = op().await?;
    if let Some(token) = &token {
        let rec = serde_json::to_vec(&Recorded {
            status: status.as_u16(),
            body: body.clone(),
        })
        .map_err(ApiError::internal)?;
        state.store.record_idempotent_response(scope, token, &rec)?;
    }
    Ok((status, Json(body)).into_response())
}

fn parse_body(bytes: &Bytes) -> Result<Value, ApiError> {
    let value: Value = serde_json::from_slice(bytes).map_err(|e| ApiError::field("body", e.to_string()))?;
    if !value.is_object() {
        return Err(ApiError::field("body", "expected a JSON object"));
    }
    Ok(value)
}

fn draft_json(draft: &ReportDraft) -> Value {
    serde_json::to_value(draft).expect("drafts serialize")
}

async fn list_apps(State(state): State<Shared>) -> ApiResult {
    let apps: Vec<Value> = state
        .store
        .list_apps()?
        .into_iter()
        .map(|(app_id, version)| json!({ "app_id": app_id, "version": version }))
        .collect();
    Ok(Json(json!({ "apps": apps })).into_response())
}

async fn vocabulary(State(state): State<Shared>, Path((app, version)): Path<(String, String)>) -> ApiResult {
    let model = state.store.load_static_model(&app, &version)?;
    let types = suggestion::manual_entry_vocabulary(&model);
    Ok(Json(json!({
        "component_types": types,
        "locations": GridCell::ALL.iter().map(|c| c.to_string()).collect::<Vec<_>>(),
    }))
    .into_response())
}

fn header_from(body: &Value) -> Result<(String, String, ReportHeader), ApiError> {
    let mut problems = Vec::new();
    let mut text = |name: &str, required: bool| -> String {
        match body.get(name) {
            Some(Value::String(s)) if !required || !s.trim().is_empty() => s.clone(),
            None | Some(Value::Null) if !required => String::new(),
            Some(Value::String(_)) | None | Some(Value::Null) => {
                problems.push(FieldError {
                    field: name.into(),
                    message: "required".into(),
                });
                String::new()
            }
            Some(_) => {
                problems.push(FieldError {
                    field: name.into(),
                    message: "must be a string".into(),
                });
                String::new()
            }
        }
    };
    let app_id = text("app_id", true);
    let version = text("version", true);
    let reporter_name = text("reporter_name", true);
    let device = text("device", true);
    let orientation = text("orientation", true);
    let title = text("title", true);
    let description = text("description", false);
    let orientation = match orientation.parse::<Orientation>() {
        Ok(o) => Some(o),
        Err(message) => {
            if !orientation.is_empty() {
                problems.push(FieldError {
                    field: "orientation".into(),
                    message,
                });
            }
            None
        }
    };
    if !problems.is_empty() {
        return Err(ApiError::validation(problems));
    }
    let header = ReportHeader {
        reporter_name,
        device,
        orientation: orientation.expect("validated above"),
        title,
        description,
    };
    Ok((app_id, version, header))
}

async fn create_draft(State(state): State<Shared>, headers: HeaderMap, body: Bytes) -> ApiResult {
    let store = Arc::clone(&state.store);
    idempotent(&state, "create", "create", &headers, || async move {
        let (app_id, version, header) = header_from(&parse_body(&body)?)?;
        let graph = store.load_graph(&app_id, &version)?;
        let draft = ReportDraft::new(store.next_draft_id()?, &graph, header)?;
        store.save_draft(&draft)?;
        Ok((StatusCode::CREATED, json!({ "draft_id": draft.draft_id })))
    })
    .await
}

async fn get_draft(State(state): State<Shared>, Path(id): Path<String>) -> ApiResult {
    let draft = state.store.load_draft(&id)?;
    Ok(Json(draft_json(&draft)).into_response())
}

fn ensure_open(draft: &ReportDraft) -> Result<(), ApiError> {
    match &draft.finalized_as {
        Some(report) => Err(ApiError::new(
            StatusCode::CONFLICT,
            "already-finalized",
            format!("draft {} was finalized as {report}", draft.draft_id),
        )),
        None => Ok(()),
    }
}

#[derive(Deserialize)]
struct StepRequest {
    #[serde(default)]
    step_num: Option<u32>,
    action: Action,
    component: StepComponent,
    #[serde(default)]
    notes: String,
}

async fn add_step(State(state): State<Shared>, Path(id): Path<String>, headers: HeaderMap, body: Bytes) -> ApiResult {
    let store = Arc::clone(&state.store);
    let scope = format!("{id}.steps");
    let lock = id.clone();
    idempotent(&state, &lock, &scope, &headers, || async move {
        let request: StepRequest =
            serde_json::from_slice(&body).map_err(|e| ApiError::field("body", e.to_string()))?;
        let draft = store.load_draft(&id)?;
        ensure_open(&draft)?;
        let graph = store.load_graph(&draft.app_id, &draft.app_version)?;
        let step = ReproStep {
            step_num: request.step_num.unwrap_or(draft.steps.len() as u32 + 1),
            action: request.action,
            component: request.component,
            activity_name: String::new(),
            notes: request.notes,
        };
        let next = suggestion::record_step(&graph, &draft, step)?;
        store.save_draft(&next)?;
        Ok((StatusCode::OK, draft_json(&next)))
    })
    .await
}

async fn remove_step(
    State(state): State<Shared>,
    Path((id, n)): Path<(String, u32)>,
    headers: HeaderMap,
) -> ApiResult {
    let store = Arc::clone(&state.store);
    let scope = format!("{id}.delete");
    let lock = id.clone();
    idempotent(&state, &lock, &scope, &headers, || async move {
        let draft = store.load_draft(&id)?;
        ensure_open(&draft)?;
        let graph = store.load_graph(&draft.app_id, &draft.app_version)?;
        let next = suggestion::delete_step(&graph, &draft, n)?;
        store.save_draft(&next)?;
        Ok((StatusCode::OK, draft_json(&next)))
    })
    .await
}

#[derive(Deserialize)]
struct SuggestQuery {
    kind: Option<String>,
    action: Option<String>,
    component: Option<String>,
}

fn parse_param<T: std::str::FromStr<Err = String>>(name: &str, value: Option<&String>) -> Result<T, ApiError> {
    value
        .ok_or_else(|| ApiError::field(name, "required"))?
        .parse()
        .map_err(|e: String| ApiError::field(name, e))
}

async fn suggest(State(state): State<Shared>, Path(id): Path<String>, Query(q): Query<SuggestQuery>) -> ApiResult {
    let draft = state.store.load_draft(&id)?;
    let graph = state.store.load_graph(&draft.app_id, &draft.app_version)?;
    let belief = &draft.belief;
    let body = match q.kind.as_deref() {
        Some("actions") => json!({ "actions": suggestion::suggest_actions(&graph, belief) }),
        Some("components") => {
            let kind: ActionKind = parse_param("action", q.action.as_ref())?;
            let list: Vec<Value> = suggestion::suggest_components(&graph, belief, kind)
                .into_iter()
                .map(|c| {
                    let d = &c.descriptor;
                    json!({
                        "key": d.key(),
                        "label": c.label,
                        "component_type": d.component_type,
                        "text": d.text,
                        "relative_location": d.relative_location,
                        "activity_name": d.activity_name,
                        "crop": c.crop_address,
                        "states": c.states,
                    })
                })
                .collect();
            json!({ "components": list })
        }
        Some("shots") => {
            let kind: ActionKind = parse_param("action", q.action.as_ref())?;
            let key: ComponentKey = parse_param("component", q.component.as_ref())?;
            let shots: Vec<Value> = suggestion::candidate_screenshots(&graph, belief, kind, &key)?
                .into_iter()
                .map(|s| json!({ "state": s.state, "shot": s.address() }))
                .collect();
            json!({ "shots": shots })
        }
        Some(other) => return Err(ApiError::field("kind", format!("unknown kind {other:?}"))),
        None => return Err(ApiError::field("kind", "required")),
    };
    Ok(Json(body).into_response())
}

async fn finalize(State(state): State<Shared>, Path(id): Path<String>, headers: HeaderMap) -> ApiResult {
    let store = Arc::clone(&state.store);
    let scope = format!("{id}.finalize");
    let lock = id.clone();
    idempotent(&state, &lock, &scope, &headers, || async move {
        let mut draft = store.load_draft(&id)?;
        ensure_open(&draft)?;
        let graph = store.load_graph(&draft.app_id, &draft.app_version)?;
        let model = store.load_static_model(&draft.app_id, &draft.app_version)?;
        // validate before spending an id
        reporting::finalize(&draft, &graph, &model, "pending", chrono::Utc::now())?;
        let report_id = store.next_report_id(&draft.app_id)?;
        let report = reporting::finalize(&draft, &graph, &model, report_id.clone(), chrono::Utc::now())?;
        store.save_report(&report)?;
        draft.finalized_as = Some(report_id.clone());
        store.save_draft(&draft)?;
        Ok((StatusCode::CREATED, json!({ "report_id": report_id })))
    })
    .await
}

#[derive(Deserialize)]
struct FormatQuery {
    format: Option<String>,
}

async fn get_report(State(state): State<Shared>, Path(id): Path<String>, Query(q): Query<FormatQuery>) -> ApiResult {
    let format: ReportFormat = q.format.as_deref().unwrap_or("structured").parse()?;
    let report = state.store.load_report(&id)?;
    let content_type = match format {
        ReportFormat::Structured => "application/json",
        ReportFormat::WebPage => "text/html; charset=utf-8",
    };
    Ok(([(header::CONTENT_TYPE, content_type)], reporting::render(&report, format)).into_response())
}

async fn get_shot(State(state): State<Shared>, Path(address): Path<String>) -> ApiResult {
    let name = address.strip_suffix(".svg").unwrap_or(&address);
    let addr = ShotAddress::parse(name)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "not-found", format!("no shot {address:?}")))?;
    let bytes = state.store.get_shot(&addr)?;
    Ok((
        [
            (header::CONTENT_TYPE, "image/svg+xml"),
            (header::CACHE_CONTROL, "public, max-age=31536000, immutable"),
        ],
        bytes,
    )
        .into_response())
}
