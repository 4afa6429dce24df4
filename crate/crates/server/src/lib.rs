//! HTTP interface of the experiment controller: catalogs, runs, live
//! summaries, and the probe/effector/store endpoints of the simulated web
//! store. Every payload is JSON.

use std::path::PathBuf;
use std::sync::Arc;

use abpipe_core::control::{ControlError, Controller};
use abpipe_core::sim::{Effector, Probe, StoreError, StoreRequest};
use abpipe_core::traffic::SimClock;
use abpipe_core::Variant;
use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};

#[derive(Clone)]
pub struct AppState {
    pub controller: Controller,
    /// Catalog directory used when a load request names none.
    pub specs_dir: Option<PathBuf>,
}

pub fn app(state: AppState) -> Router {
    Router::new()
        .route("/catalogs/load", post(load_catalogs))
        .route("/catalogs/report", get(validation_report))
        .route("/pipelines", get(pipelines))
        .route("/runs", get(list_runs).post(start_run))
        .route("/runs/{id}/status", get(run_status))
        .route("/runs/{id}/summary", get(run_summary))
        .route("/runs/{id}/results", get(run_results))
        .route("/runs/{id}/abort", post(abort_run))
        .route("/probe/{ab}/history/{variant}", get(probe_history))
        .route("/effector/{ab}/routing", post(set_routing))
        .route("/effector/{ab}/clear", post(clear_history))
        .route("/effector/setup/{name}/deploy", post(deploy_setup))
        .route("/effector/setup/{name}/remove", post(remove_setup))
        .route("/store/purchase", post(purchase))
        .with_state(Arc::new(state))
}

pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self { status, message: message.into() }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

impl From<ControlError> for ApiError {
    fn from(e: ControlError) -> Self {
        let status = match &e {
            ControlError::UnknownRun(_) | ControlError::UnknownPipeline(_) => StatusCode::NOT_FOUND,
            ControlError::InvalidPipeline { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            ControlError::RunActive(_) | ControlError::InvalidTransition { .. } => StatusCode::CONFLICT,
            ControlError::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.to_string())
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        use abpipe_core::router::RouterError;
        let status = match &e {
            StoreError::NoActiveSetup => StatusCode::SERVICE_UNAVAILABLE,
            StoreError::AlreadyActive(_) | StoreError::NotActive(_) => StatusCode::CONFLICT,
            StoreError::UnknownSetup(_)
            | StoreError::UnknownVariantModel(_)
            | StoreError::Router(RouterError::UnknownComponent(_)) => StatusCode::NOT_FOUND,
            StoreError::Router(RouterError::HistoryFull { .. }) => StatusCode::INSUFFICIENT_STORAGE,
            _ => StatusCode::BAD_REQUEST,
        };
        ApiError::new(status, e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::new(e.status(), e.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> Self {
        ApiError::new(e.status(), e.body_text())
    }
}

type ApiResult = Result<Json<Value>, ApiError>;

fn to_json<T: serde::Serialize>(value: T) -> ApiResult {
    serde_json::to_value(value)
        .map(Json)
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))
}

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct LoadRequest {
    directory: Option<PathBuf>,
}

async fn load_catalogs(
    State(s): State<Arc<AppState>>,
    body: Result<Option<Json<LoadRequest>>, JsonRejection>,
) -> ApiResult {
    let request = body?.map(|Json(b)| b).unwrap_or_default();
    let dir = request
        .directory
        .or_else(|| s.specs_dir.clone())
        .ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "no catalog directory given or configured"))?;
    let controller = s.controller.clone();
    let report = tokio::task::spawn_blocking(move || controller.load_catalogs(&dir))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.to_string()))?;
    to_json(report)
}

async fn validation_report(State(s): State<Arc<AppState>>) -> ApiResult {
    to_json(s.controller.validation_report())
}

async fn pipelines(State(s): State<Arc<AppState>>) -> ApiResult {
    to_json(s.controller.pipelines())
}

async fn list_runs(State(s): State<Arc<AppState>>) -> ApiResult {
    to_json(s.controller.runs())
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
enum ClockChoice {
    #[default]
    Virtual,
    Realtime,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct StartRequest {
    pipeline_id: String,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    clock: ClockChoice,
    /// Simulated seconds per wall second for the realtime clock.
    time_scale: Option<f64>,
}

async fn start_run(
    State(s): State<Arc<AppState>>,
    req: Result<Json<StartRequest>, JsonRejection>,
) -> Result<Response, ApiError> {
    let Json(req) = req?;
    let clock = match req.clock {
        ClockChoice::Virtual => SimClock::virtual_time(),
        ClockChoice::Realtime => SimClock::realtime(req.time_scale.unwrap_or(1.0))
            .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e))?,
    };
    let run_id = s.controller.start_run(&req.pipeline_id, req.seed, clock)?;
    Ok((StatusCode::CREATED, Json(json!({ "runId": run_id }))).into_response())
}

async fn run_status(State(s): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult {
    to_json(s.controller.get_status(&id)?)
}

async fn run_summary(State(s): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult {
    to_json(s.controller.get_live_summary(&id)?)
}

async fn run_results(State(s): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult {
    to_json(s.controller.get_results(&id)?)
}

async fn abort_run(State(s): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult {
    let controller = s.controller.clone();
    let record = tokio::task::spawn_blocking(move || controller.abort_run(&id))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    to_json(record)
}

#[derive(Debug, Default, Deserialize)]
struct SinceQuery {
    #[serde(default)]
    since: usize,
}

fn parse_variant(v: &str) -> Result<Variant, ApiError> {
    v.parse::<Variant>().map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.to_string()))
}

async fn probe_history(
    State(s): State<Arc<AppState>>,
    Path((ab, variant)): Path<(String, String)>,
    query: Result<Query<SinceQuery>, QueryRejection>,
) -> ApiResult {
    let Query(q) = query?;
    let variant = parse_variant(&variant)?;
    to_json(s.controller.store().request_history(&ab, variant, q.since)?)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RoutingRequest {
    a: u32,
    b: u32,
}

async fn set_routing(
    State(s): State<Arc<AppState>>,
    Path(ab): Path<String>,
    req: Result<Json<RoutingRequest>, JsonRejection>,
) -> ApiResult {
    let Json(req) = req?;
    s.controller.store().set_ab_routing(&ab, req.a, req.b)?;
    Ok(Json(json!({ "abName": ab, "a": req.a, "b": req.b })))
}

async fn clear_history(State(s): State<Arc<AppState>>, Path(ab): Path<String>) -> ApiResult {
    s.controller.store().clear_ab_component_history(&ab)?;
    Ok(Json(json!({ "abName": ab, "cleared": true })))
}

async fn deploy_setup(State(s): State<Arc<AppState>>, Path(name): Path<String>) -> ApiResult {
    s.controller.store().deploy_setup(&name)?;
    Ok(Json(json!({ "setup": name, "active": true })))
}

async fn remove_setup(State(s): State<Arc<AppState>>, Path(name): Path<String>) -> ApiResult {
    s.controller.store().remove_setup(&name)?;
    Ok(Json(json!({ "setup": name, "active": false })))
}

async fn purchase(State(s): State<Arc<AppState>>, req: Result<Json<StoreRequest>, JsonRejection>) -> ApiResult {
    let Json(req) = req?;
    to_json(s.controller.store().handle_purchase(req)?)
}
