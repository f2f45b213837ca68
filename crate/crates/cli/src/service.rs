//! HTTP front end. Flows are validated on submit, runs execute on the
//! blocking pool, and status reads never wait on a run.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};

use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use flowforge_core::agent::{catalog_from_csv, run_agent, AgentConfig, AgentState, ScriptedLm};
use flowforge_core::components::io::{write_csv_to, VectorMode};
use flowforge_core::executor::TaskEvent;
use flowforge_core::sql::Catalog;
use flowforge_core::{
    build_plan, parse_flow, sequential_plan, serialize_flow, CostModel, Engine, ExecError, ExecutionContext,
    ExecutionPlan, Field, Flow, FlowError, PlanMode, Registry, RunId, RunRecord, Store, StoreConfig,
    ValidationIssue,
};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::Config;

// ---- errors -----------------------------------------------------------

#[derive(Debug)]
pub enum ApiError {
    NotFound(String),
    Conflict(String),
    BadRequest(String),
    Invalid(Vec<ValidationIssue>),
    Unprocessable(String),
    Internal(String),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, body) = match self {
            ApiError::NotFound(m) => (StatusCode::NOT_FOUND, json!({ "error": m })),
            ApiError::Conflict(m) => (StatusCode::CONFLICT, json!({ "error": m })),
            ApiError::BadRequest(m) => (StatusCode::BAD_REQUEST, json!({ "error": m })),
            ApiError::Invalid(issues) => (StatusCode::UNPROCESSABLE_ENTITY, json!({ "issues": issues })),
            ApiError::Unprocessable(m) => (StatusCode::UNPROCESSABLE_ENTITY, json!({ "error": m })),
            ApiError::Internal(m) => (StatusCode::INTERNAL_SERVER_ERROR, json!({ "error": m })),
        };
        (status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

// ---- run status ---------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunState {
    Queued,
    Running,
    Finished,
    Failed,
}

impl RunState {
    pub fn is_terminal(self) -> bool {
        matches!(self, RunState::Finished | RunState::Failed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeState {
    Pending,
    Running,
    Ok,
    Failed,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStatus {
    pub run_id: String,
    pub flow_id: String,
    pub state: RunState,
    pub mode: PlanMode,
    pub workers: usize,
    pub nodes: BTreeMap<String, NodeState>,
    /// Full record with per-task and per-wave timings, once terminal.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub record: Option<RunRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failed_node: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

struct RunSlot {
    status: Mutex<RunStatus>,
    ctx: Arc<ExecutionContext>,
}

impl RunSlot {
    fn update(&self, f: impl FnOnce(&mut RunStatus)) {
        let mut st = lock(&self.status);
        // terminal states are immutable
        if !st.state.is_terminal() {
            f(&mut st)
        }
    }
}

struct Session {
    catalog: Catalog,
    lm: Option<ScriptedLm>,
    config: AgentConfig,
}

// ---- state --------------------------------------------------------------

pub struct AppState {
    engine: Engine,
    config: Config,
    flows: Mutex<BTreeMap<String, Arc<Flow>>>,
    runs: Mutex<BTreeMap<String, Arc<RunSlot>>>,
    sessions: Mutex<BTreeMap<String, Arc<Session>>>,
    next_id: AtomicU64,
}

impl AppState {
    pub fn new(config: Config) -> anyhow::Result<Arc<AppState>> {
        let store = Store::new(StoreConfig::new(config.memory_budget_bytes, &config.spill_dir))?;
        let engine = Engine::new(Arc::new(store), Arc::new(Registry::standard()), &config.data_dir);
        Ok(Arc::new(AppState {
            engine,
            config,
            flows: Mutex::default(),
            runs: Mutex::default(),
            sessions: Mutex::default(),
            next_id: AtomicU64::new(1),
        }))
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    fn fresh_id(&self, prefix: &str) -> String {
        format!("{prefix}{}", self.next_id.fetch_add(1, Ordering::Relaxed))
    }

    fn flow(&self, id: &str) -> ApiResult<Arc<Flow>> {
        lock(&self.flows).get(id).cloned().ok_or_else(|| ApiError::NotFound(format!("unknown flow `{id}`")))
    }

    fn run(&self, id: &str) -> ApiResult<Arc<RunSlot>> {
        lock(&self.runs).get(id).cloned().ok_or_else(|| ApiError::NotFound(format!("unknown run `{id}`")))
    }

    fn registry(&self) -> &Registry {
        self.engine.registry()
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/components", get(components))
        .route("/flows", post(submit_flow).get(list_flows))
        .route("/flows/{id}", get(get_flow))
        .route("/flows/{id}/plan", post(plan_flow))
        .route("/flows/{id}/runs", post(start_run))
        .route("/runs/{id}", get(run_status).delete(release_run))
        .route("/runs/{id}/results", get(list_results))
        .route("/runs/{id}/results/{node}", get(results))
        .route("/agent/sessions", post(create_session))
        .route("/agent/sessions/{id}/ask", post(ask))
        .with_state(state)
}

// ---- flows --------------------------------------------------------------

async fn components(State(app): State<Arc<AppState>>) -> Json<serde_json::Value> {
    Json(json!({ "components": app.registry().manifest() }))
}

async fn submit_flow(State(app): State<Arc<AppState>>, body: String) -> ApiResult<(StatusCode, Json<serde_json::Value>)> {
    let flow = parse_flow(&body, app.registry()).map_err(|e| match e {
        FlowError::Issues(issues) => ApiError::Invalid(issues),
        other => ApiError::Unprocessable(other.to_string()),
    })?;
    let issues = flowforge_core::validate(&flow, app.registry());
    if !issues.is_empty() {
        return Err(ApiError::Invalid(issues));
    }
    let id = app.fresh_id("f");
    lock(&app.flows).insert(id.clone(), Arc::new(flow));
    Ok((StatusCode::CREATED, Json(json!({ "flow_id": id }))))
}

async fn list_flows(State(app): State<Arc<AppState>>) -> Json<serde_json::Value> {
    let flows: Vec<_> = lock(&app.flows).iter().map(|(id, f)| json!({ "flow_id": id, "name": f.name })).collect();
    Json(json!({ "flows": flows }))
}

async fn get_flow(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Response> {
    let flow = app.flow(&id)?;
    Ok(([(header::CONTENT_TYPE, "application/json")], serialize_flow(&flow)).into_response())
}

#[derive(Debug, Default, Deserialize)]
struct ModeQuery {
    mode: Option<PlanMode>,
}

fn make_plan(app: &AppState, flow: &Flow, mode: PlanMode) -> ApiResult<ExecutionPlan> {
    let plan = match mode {
        PlanMode::Optimized => build_plan(flow, app.registry(), &CostModel::unit()),
        PlanMode::Sequential => sequential_plan(flow),
    };
    plan.map_err(|e| ApiError::Unprocessable(e.to_string()))
}

async fn plan_flow(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<ModeQuery>,
) -> ApiResult<Json<ExecutionPlan>> {
    let flow = app.flow(&id)?;
    Ok(Json(make_plan(&app, &flow, q.mode.unwrap_or(PlanMode::Optimized))?))
}

// ---- runs ---------------------------------------------------------------

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunRequest {
    workers: Option<usize>,
    mode: Option<PlanMode>,
    run_id: Option<String>,
    memory_budget_bytes: Option<u64>,
}

async fn start_run(
    State(app): State<Arc<AppState>>,
    Path(flow_id): Path<String>,
    body: Option<Json<RunRequest>>,
) -> ApiResult<(StatusCode, Json<serde_json::Value>)> {
    let req = body.map(|Json(r)| r).unwrap_or_default();
    let flow = app.flow(&flow_id)?;
    let mode = req.mode.unwrap_or(PlanMode::Optimized);
    let workers = req.workers.unwrap_or(app.config.workers);
    let plan = make_plan(&app, &flow, mode)?;
    let run_id = req.run_id.unwrap_or_else(|| app.fresh_id("r"));

    let slot = {
        let mut runs = lock(&app.runs);
        if runs.contains_key(&run_id) {
            return Err(ApiError::Conflict(format!("run `{run_id}` already exists")));
        }
        let ctx = app
            .engine
            .create_context(RunId::new(&run_id), workers, req.memory_budget_bytes)
            .map_err(|e| match e {
                ExecError::Conflict(_) => ApiError::Conflict(e.to_string()),
                ExecError::ZeroWorkers => ApiError::BadRequest(e.to_string()),
                other => ApiError::Internal(other.to_string()),
            })?;
        let status = RunStatus {
            run_id: run_id.clone(),
            flow_id: flow_id.clone(),
            state: RunState::Queued,
            mode,
            workers,
            nodes: flow.nodes.iter().map(|n| (n.id.clone(), NodeState::Pending)).collect(),
            record: None,
            failed_node: None,
            error: None,
        };
        let slot = Arc::new(RunSlot { status: Mutex::new(status), ctx: Arc::new(ctx) });
        runs.insert(run_id.clone(), slot.clone());
        slot
    };

    tokio::task::spawn_blocking(move || {
        slot.update(|s| s.state = RunState::Running);
        let progress = |e: TaskEvent| {
            slot.update(|s| {
                let (node, state) = match e {
                    TaskEvent::Started { node } => (node, NodeState::Running),
                    TaskEvent::Finished { node, ok } => (node, if ok { NodeState::Ok } else { NodeState::Failed }),
                    TaskEvent::Skipped { node } => (node, NodeState::Skipped),
                };
                s.nodes.insert(node, state);
            })
        };
        let outcome = slot.ctx.run_plan(&flow, &plan, Some(&progress));
        slot.update(|s| match outcome {
            Ok(record) => {
                s.state = if record.failed_node.is_some() { RunState::Failed } else { RunState::Finished };
                s.failed_node = record.failed_node.clone();
                s.error = record.error.clone();
                s.record = Some(record);
            }
            Err(e) => {
                s.state = RunState::Failed;
                s.error = Some(e.to_string());
            }
        });
    });
    Ok((StatusCode::ACCEPTED, Json(json!({ "run_id": run_id }))))
}

async fn run_status(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<RunStatus>> {
    let slot = app.run(&id)?;
    let status = lock(&slot.status).clone();
    Ok(Json(status))
}

async fn release_run(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<serde_json::Value>> {
    let slot = app.run(&id)?;
    if !lock(&slot.status).state.is_terminal() {
        return Err(ApiError::Conflict(format!("run `{id}` is still executing")));
    }
    lock(&app.runs).remove(&id);
    let summary = slot.ctx.release();
    Ok(Json(json!({ "run_id": id, "entries_dropped": summary.entries_dropped })))
}

fn finished_ctx(app: &AppState, id: &str) -> ApiResult<Arc<ExecutionContext>> {
    let slot = app.run(id)?;
    let state = lock(&slot.status).state;
    match state {
        RunState::Finished => Ok(slot.ctx.clone()),
        RunState::Failed => Err(ApiError::Conflict(format!("run `{id}` failed; it has no results"))),
        _ => Err(ApiError::Conflict(format!("run `{id}` has not finished"))),
    }
}

async fn list_results(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<serde_json::Value>> {
    let ctx = finished_ctx(&app, &id)?;
    let names: Vec<String> = ctx.catalog().map_err(|e| ApiError::Internal(e.to_string()))?.into_keys().collect();
    Ok(Json(json!({ "run_id": id, "tables": names })))
}

#[derive(Debug, Default, Deserialize)]
struct PageQuery {
    limit: Option<usize>,
    page_token: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ResultPage {
    pub run_id: String,
    pub table: String,
    pub columns: Vec<Field>,
    pub total_rows: usize,
    pub offset: usize,
    pub rows: Vec<serde_json::Value>,
    /// Pass back as `page_token` for the next page; absent on the last page.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub next_page_token: Option<String>,
}

async fn results(
    State(app): State<Arc<AppState>>,
    Path((id, node)): Path<(String, String)>,
    Query(q): Query<PageQuery>,
    headers: HeaderMap,
) -> ApiResult<Response> {
    let ctx = finished_ctx(&app, &id)?;
    let frame = ctx.table(&node).map_err(|e| match e {
        ExecError::UnknownTable(_) => ApiError::NotFound(format!("run `{id}` has no result `{node}`")),
        other => ApiError::Internal(other.to_string()),
    })?;
    let wants_csv = headers
        .get(header::ACCEPT)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.contains("text/csv"));
    if wants_csv {
        let mut buf = Vec::new();
        write_csv_to(&frame, &mut buf, VectorMode::Stringify, None).map_err(|e| ApiError::Internal(e.to_string()))?;
        return Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], buf).into_response());
    }
    let offset = match &q.page_token {
        Some(t) => t.parse::<usize>().map_err(|_| ApiError::BadRequest(format!("bad page token `{t}`")))?,
        None => 0,
    };
    let limit = q.limit.unwrap_or(app.config.page_size).clamp(1, app.config.page_size.max(1000));
    let total = frame.row_count();
    let rows = frame.to_json_rows(offset, limit);
    let next = offset.saturating_add(limit);
    let page = ResultPage {
        run_id: id,
        table: node,
        columns: frame.fields().to_vec(),
        total_rows: total,
        offset,
        rows,
        next_page_token: (next < total).then(|| next.to_string()),
    };
    Ok(Json(page).into_response())
}

// ---- agent --------------------------------------------------------------

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SessionRequest {
    /// Table name to csv path, relative to the data directory.
    #[serde(default)]
    tables: BTreeMap<String, String>,
    /// Also expose every table of a finished run.
    run_id: Option<String>,
    /// Scripted model rules, `{"rules": [{"when", "reply"}, ...]}`.
    script: Option<serde_json::Value>,
    max_steps: Option<usize>,
    top_k: Option<usize>,
}

async fn create_session(
    State(app): State<Arc<AppState>>,
    Json(req): Json<SessionRequest>,
) -> ApiResult<(StatusCode, Json<serde_json::Value>)> {
    let paths: Vec<(String, std::path::PathBuf)> =
        req.tables.iter().map(|(k, v)| (k.clone(), app.config.data_dir.join(v))).collect();
    let mut catalog = catalog_from_csv(&paths).map_err(|e| ApiError::Unprocessable(e.to_string()))?;
    if let Some(run) = &req.run_id {
        let ctx = finished_ctx(&app, run)?;
        let tables = ctx.sql_catalog().map_err(|e| ApiError::Internal(e.to_string()))?;
        for name in tables.names() {
            if catalog.get(&name).is_none() {
                catalog.insert(&name, tables.get(&name).expect("listed").clone());
            }
        }
    }
    if catalog.is_empty() {
        return Err(ApiError::Unprocessable("a session needs at least one table".into()));
    }
    let lm = match &req.script {
        Some(doc) => Some(ScriptedLm::from_json(&doc.to_string()).map_err(|e| ApiError::Unprocessable(e.to_string()))?),
        None => None,
    };
    let defaults = AgentConfig::default();
    let config = AgentConfig {
        max_steps: req.max_steps.unwrap_or(defaults.max_steps),
        top_k: req.top_k.unwrap_or(defaults.top_k),
        ..defaults
    };
    let id = app.fresh_id("s");
    let tables = catalog.names();
    lock(&app.sessions).insert(id.clone(), Arc::new(Session { catalog, lm, config }));
    Ok((StatusCode::CREATED, Json(json!({ "session_id": id, "tables": tables }))))
}

#[derive(Debug, Deserialize)]
struct AskRequest {
    question: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AskResponse {
    pub answer: String,
    pub transcript: AgentState,
}

async fn ask(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    Json(req): Json<AskRequest>,
) -> ApiResult<Json<AskResponse>> {
    let session = lock(&app.sessions)
        .get(&id)
        .cloned()
        .ok_or_else(|| ApiError::NotFound(format!("unknown session `{id}`")))?;
    if session.lm.is_none() {
        return Err(ApiError::Unprocessable("session has no language model; create it with a `script`".into()));
    }
    let out = tokio::task::spawn_blocking(move || {
        let lm = session.lm.as_ref().expect("checked above");
        run_agent(&req.question, &session.catalog, lm, &session.config)
    })
    .await
    .map_err(|e| ApiError::Internal(e.to_string()))?
    .map_err(|e| ApiError::Unprocessable(e.to_string()))?;
    Ok(Json(AskResponse { answer: out.answer, transcript: out.state }))
}

pub async fn serve(config: Config) -> anyhow::Result<()> {
    let addr = std::net::SocketAddr::from(([0, 0, 0, 0], config.port));
    let state = AppState::new(config)?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(%addr, "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
