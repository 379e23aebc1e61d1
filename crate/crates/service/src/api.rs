//! JSON over HTTP.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use axum::body::{to_bytes, Body, Bytes};
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use setexpand::evaluation::{load_gold, EvalConfig, GoldClassSpec};
use setexpand::pipeline::Stage;
use setexpand::{ContextType, Error, GroupId};

use crate::config::apply_overrides;
use crate::workspace::{CorpusFormat, ExpandRequest, Project, ServiceError, Workspace};

pub const IDEMPOTENCY_HEADER: &str = "idempotency-key";
const MAX_CACHED_BODY: usize = 64 * 1024 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Running,
    Ready,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageState {
    Pending,
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageProgress {
    pub stage: String,
    pub state: StageState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobView {
    pub job_id: String,
    pub project_id: String,
    pub state: JobState,
    pub stages: Vec<StageProgress>,
    pub failed_stage: Option<String>,
    pub error: Option<String>,
    pub elapsed_secs: f64,
}

struct Job {
    view: JobView,
    started: Instant,
    finished: Option<f64>,
}

fn all_stages() -> Vec<Stage> {
    let mut v = vec![Stage::Terms, Stage::Grouping, Stage::Indexing, Stage::Contexts];
    v.extend(ContextType::ALL.iter().map(|t| Stage::Embedding(*t)));
    v.push(Stage::Mlp);
    v
}

type Cached = (StatusCode, Option<HeaderValue>, Bytes);
type Slot = Arc<tokio::sync::Mutex<Option<Cached>>>;

pub struct AppState {
    pub workspace: Workspace,
    jobs: Mutex<HashMap<String, Arc<Mutex<Job>>>>,
    next_job: AtomicU64,
    idempotent: Mutex<HashMap<(Method, String, String), Slot>>,
}

impl AppState {
    pub fn new(workspace: Workspace) -> Arc<Self> {
        Arc::new(AppState {
            workspace,
            jobs: Mutex::new(HashMap::new()),
            next_job: AtomicU64::new(1),
            idempotent: Mutex::new(HashMap::new()),
        })
    }
}

type Shared = Arc<AppState>;

pub struct ApiError(ServiceError);

impl<E: Into<ServiceError>> From<E> for ApiError {
    fn from(e: E) -> Self {
        ApiError(e.into())
    }
}

fn core_status(e: &Error) -> StatusCode {
    match e {
        Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => StatusCode::NOT_FOUND,
        Error::Io { source, .. } if source.kind() == std::io::ErrorKind::PermissionDenied => StatusCode::BAD_REQUEST,
        Error::Io { .. } => StatusCode::INTERNAL_SERVER_ERROR,
        Error::Parse { .. } | Error::InvalidTree { .. } | Error::Format(_) | Error::Config(_) | Error::Shape { .. } => {
            StatusCode::BAD_REQUEST
        }
        Error::UnknownTerm(_) | Error::MissingTerm(_) | Error::NotFound(_) => StatusCode::NOT_FOUND,
        Error::Conflict(_) => StatusCode::CONFLICT,
        Error::EmptyCorpus
        | Error::EmptyNormalization(_)
        | Error::EmptyGroup(_)
        | Error::InsufficientData(_)
        | Error::Divergence { .. }
        | Error::NoSignal
        | Error::DegenerateLabels
        | Error::UndefinedMetric(_) => StatusCode::UNPROCESSABLE_ENTITY,
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self.0 {
            ServiceError::Core(e) => core_status(e),
            ServiceError::Stage { error, .. } => core_status(error),
            ServiceError::NotReady(_) | ServiceError::Busy(_) => StatusCode::CONFLICT,
            ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::BadRequest(_) => StatusCode::BAD_REQUEST,
        };
        (status, Json(json!({ "error": self.0.to_string() }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Runs blocking project work off the async executor.
async fn blocking<T, F>(f: F) -> ApiResult<T>
where
    F: FnOnce() -> Result<T, ServiceError> + Send + 'static,
    T: Send + 'static,
{
    match tokio::task::spawn_blocking(f).await {
        Ok(r) => r.map_err(ApiError),
        Err(e) => Err(ApiError(ServiceError::Core(Error::Io {
            path: PathBuf::new(),
            source: std::io::Error::other(e.to_string()),
        }))),
    }
}

fn project(state: &Shared, id: &str) -> ApiResult<Arc<Project>> {
    Ok(state.workspace.project(id)?)
}

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/health", get(|| async { Json(json!({"status": "ok"})) }))
        .route("/projects", post(create_project).get(list_projects))
        .route("/projects/{id}", get(get_project))
        .route("/projects/{id}/train", post(train))
        .route("/jobs/{job_id}", get(get_job))
        .route("/projects/{id}/terms", get(terms))
        .route("/projects/{id}/terms/{gid}", get(term))
        .route("/projects/{id}/terms/{gid}/contexts", get(contexts))
        .route("/projects/{id}/terms/{gid}/exclusions", put(exclusions))
        .route("/projects/{id}/expand", post(expand))
        .route("/projects/{id}/categories", get(category_names))
        .route("/projects/{id}/categories/{name}", get(get_category).put(save_category))
        .route("/projects/{id}/categories/{name}/load", post(load_category))
        .route(
            "/projects/{id}/categories/{name}/validate",
            post(validate).put(validate),
        )
        .route("/projects/{id}/categories/{name}/reexpand", post(reexpand))
        .route("/projects/{id}/evaluate", post(evaluate))
        .layer(middleware::from_fn_with_state(state.clone(), idempotency))
        .with_state(state)
}

/// Replays the stored response when a mutating request repeats its
/// `Idempotency-Key`. Training is excluded; it answers 409 instead.
async fn idempotency(State(state): State<Shared>, req: Request, next: Next) -> Response {
    let mutating = matches!(
        *req.method(),
        Method::POST | Method::PUT | Method::DELETE | Method::PATCH
    );
    let key = req
        .headers()
        .get(IDEMPOTENCY_HEADER)
        .and_then(|v| v.to_str().ok())
        .map(str::to_string);
    let path = req.uri().path().to_string();
    let (Some(key), true) = (key, mutating && !path.ends_with("/train")) else {
        return next.run(req).await;
    };
    let target = req.uri().path_and_query().map_or(path, |p| p.to_string());
    let slot = state
        .idempotent
        .lock()
        .unwrap_or_else(|e| e.into_inner())
        .entry((req.method().clone(), target, key))
        .or_default()
        .clone();
    let mut slot = slot.lock().await;
    if let Some((status, ctype, body)) = slot.as_ref() {
        let mut resp = (*status, body.clone()).into_response();
        if let Some(c) = ctype {
            resp.headers_mut().insert(header::CONTENT_TYPE, c.clone());
        }
        resp.headers_mut()
            .insert("idempotent-replay", HeaderValue::from_static("true"));
        return resp;
    }
    let resp = next.run(req).await;
    let (parts, body) = resp.into_parts();
    let bytes = match to_bytes(body, MAX_CACHED_BODY).await {
        Ok(b) => b,
        Err(_) => return StatusCode::INTERNAL_SERVER_ERROR.into_response(),
    };
    if !parts.status.is_server_error() {
        *slot = Some((
            parts.status,
            parts.headers.get(header::CONTENT_TYPE).cloned(),
            bytes.clone(),
        ));
    }
    Response::from_parts(parts, Body::from(bytes))
}

#[derive(Deserialize)]
struct CreateProject {
    corpus_path: PathBuf,
    #[serde(default)]
    format: Option<String>,
}

async fn create_project(State(state): State<Shared>, Json(req): Json<CreateProject>) -> ApiResult<Response> {
    let format = match req.format.as_deref() {
        None | Some("auto") => None,
        Some(f) => Some(f.parse::<CorpusFormat>()?),
    };
    let st = state.clone();
    let info = blocking(move || Ok(st.workspace.create_project(&req.corpus_path, format)?.info())).await?;
    Ok((StatusCode::CREATED, Json(info)).into_response())
}

async fn list_projects(State(state): State<Shared>) -> ApiResult<Json<Value>> {
    let st = state.clone();
    let infos = blocking(move || {
        st.workspace
            .project_ids()?
            .iter()
            .map(|id| Ok(st.workspace.project(id)?.info()))
            .collect::<Result<Vec<_>, ServiceError>>()
    })
    .await?;
    Ok(Json(json!({ "projects": infos })))
}

async fn get_project(State(state): State<Shared>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let st = state.clone();
    let info = blocking(move || Ok(st.workspace.project(&id)?.info())).await?;
    Ok(Json(serde_json::to_value(info).expect("serializable")))
}

#[derive(Deserialize, Default)]
struct TrainRequest {
    #[serde(default)]
    hyper: Value,
    #[serde(default)]
    gold_path: Option<PathBuf>,
    #[serde(default)]
    gold: Option<Vec<GoldClassSpec>>,
}

async fn train(
    State(state): State<Shared>,
    Path(id): Path<String>,
    body: Option<Json<TrainRequest>>,
) -> ApiResult<Response> {
    let req = body.map(|b| b.0).unwrap_or_default();
    let p = project(&state, &id)?;
    let cfg = apply_overrides(state.workspace.defaults(), &req.hyper)?;
    let gold = match (&req.gold, &req.gold_path) {
        (Some(g), _) => Some(g.clone()),
        (None, Some(path)) => Some(load_gold(path)?),
        (None, None) => None,
    };
    p.begin_training()?;

    let job_id = format!("j{}", state.next_job.fetch_add(1, Ordering::Relaxed));
    let job = Arc::new(Mutex::new(Job {
        view: JobView {
            job_id: job_id.clone(),
            project_id: id.clone(),
            state: JobState::Running,
            stages: all_stages()
                .iter()
                .map(|s| StageProgress {
                    stage: s.to_string(),
                    state: StageState::Pending,
                })
                .collect(),
            failed_stage: None,
            error: None,
            elapsed_secs: 0.0,
        },
        started: Instant::now(),
        finished: None,
    }));
    state
        .jobs
        .lock()
        .unwrap_or_else(|e| e.into_inner())
        .insert(job_id.clone(), job.clone());

    tokio::task::spawn_blocking(move || {
        let progress = |stage: Stage, done: bool| {
            let mut j = job.lock().unwrap_or_else(|e| e.into_inner());
            let name = stage.to_string();
            if let Some(s) = j.view.stages.iter_mut().find(|s| s.stage == name) {
                s.state = if done { StageState::Done } else { StageState::Running };
            }
        };
        let result = p.train(&cfg, gold.as_deref(), &progress);
        let mut j = job.lock().unwrap_or_else(|e| e.into_inner());
        j.finished = Some(j.started.elapsed().as_secs_f64());
        match result {
            Ok(()) => j.view.state = JobState::Ready,
            Err(e) => {
                j.view.state = JobState::Failed;
                j.view.error = Some(e.to_string());
                if let ServiceError::Stage { stage, .. } = &e {
                    j.view.failed_stage = Some(stage.clone());
                    if let Some(s) = j.view.stages.iter_mut().find(|s| &s.stage == stage) {
                        s.state = StageState::Failed;
                    }
                }
            }
        }
    });
    Ok((
        StatusCode::ACCEPTED,
        Json(json!({ "job_id": job_id, "project_id": id })),
    )
        .into_response())
}

async fn get_job(State(state): State<Shared>, Path(job_id): Path<String>) -> ApiResult<Json<JobView>> {
    let job = state
        .jobs
        .lock()
        .unwrap_or_else(|e| e.into_inner())
        .get(&job_id)
        .cloned()
        .ok_or_else(|| ServiceError::NotFound(format!("job {job_id}")))?;
    let j = job.lock().unwrap_or_else(|e| e.into_inner());
    let mut view = j.view.clone();
    view.elapsed_secs = j.finished.unwrap_or_else(|| j.started.elapsed().as_secs_f64());
    Ok(Json(view))
}

#[derive(Deserialize)]
struct TermsQuery {
    #[serde(default)]
    filter: Option<String>,
    #[serde(default = "default_limit")]
    limit: usize,
    #[serde(default)]
    offset: usize,
}

fn default_limit() -> usize {
    5000
}

async fn terms(
    State(state): State<Shared>,
    Path(id): Path<String>,
    Query(q): Query<TermsQuery>,
) -> ApiResult<Json<Value>> {
    let p = project(&state, &id)?;
    let rows = blocking(move || p.terms(q.filter.as_deref(), q.limit, q.offset)).await?;
    Ok(Json(json!({ "terms": rows })))
}

async fn term(State(state): State<Shared>, Path((id, gid)): Path<(String, GroupId)>) -> ApiResult<Json<Value>> {
    let p = project(&state, &id)?;
    let row = blocking(move || p.term(gid)).await?;
    Ok(Json(serde_json::to_value(row).expect("serializable")))
}

#[derive(Deserialize)]
struct ContextsQuery {
    #[serde(default = "default_max")]
    max: usize,
}

fn default_max() -> usize {
    20
}

async fn contexts(
    State(state): State<Shared>,
    Path((id, gid)): Path<(String, GroupId)>,
    Query(q): Query<ContextsQuery>,
) -> ApiResult<Json<Value>> {
    let p = project(&state, &id)?;
    let snippets = blocking(move || p.contexts(gid, q.max)).await?;
    Ok(Json(json!({ "group_id": gid, "snippets": snippets })))
}

#[derive(Deserialize)]
struct ExclusionRequest {
    members: Vec<String>,
    #[serde(default)]
    category_name: Option<String>,
}

async fn exclusions(
    State(state): State<Shared>,
    Path((id, gid)): Path<(String, GroupId)>,
    Json(req): Json<ExclusionRequest>,
) -> ApiResult<Json<Value>> {
    let p = project(&state, &id)?;
    let row = blocking(move || p.exclude(gid, &req.members, req.category_name.as_deref())).await?;
    Ok(Json(serde_json::to_value(row).expect("serializable")))
}

async fn expand(
    State(state): State<Shared>,
    Path(id): Path<String>,
    Json(req): Json<ExpandRequest>,
) -> ApiResult<Json<Value>> {
    let p = project(&state, &id)?;
    let out = blocking(move || p.expand(&req)).await?;
    Ok(Json(serde_json::to_value(out).expect("serializable")))
}

async fn category_names(State(state): State<Shared>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let p = project(&state, &id)?;
    let names = blocking(move || p.category_names()).await?;
    Ok(Json(json!({ "categories": names })))
}

async fn get_category(State(state): State<Shared>, Path((id, name)): Path<(String, String)>) -> ApiResult<Json<Value>> {
    let p = project(&state, &id)?;
    let view = blocking(move || p.category(&name)).await?;
    Ok(Json(serde_json::to_value(view).expect("serializable")))
}

#[derive(Deserialize, Default)]
struct SaveRequest {
    #[serde(default)]
    overwrite: bool,
}

async fn save_category(
    State(state): State<Shared>,
    Path((id, name)): Path<(String, String)>,
    body: Option<Json<SaveRequest>>,
) -> ApiResult<Json<Value>> {
    let overwrite = body.map(|b| b.0).unwrap_or_default().overwrite;
    let p = project(&state, &id)?;
    let view = blocking(move || p.save_category(&name, overwrite)).await?;
    Ok(Json(serde_json::to_value(view).expect("serializable")))
}

async fn load_category(
    State(state): State<Shared>,
    Path((id, name)): Path<(String, String)>,
) -> ApiResult<Json<Value>> {
    let p = project(&state, &id)?;
    let view = blocking(move || p.load_category(&name)).await?;
    Ok(Json(serde_json::to_value(view).expect("serializable")))
}

#[derive(Deserialize)]
struct ValidateRequest {
    gid: GroupId,
    completed: bool,
}

async fn validate(
    State(state): State<Shared>,
    Path((id, name)): Path<(String, String)>,
    Json(req): Json<ValidateRequest>,
) -> ApiResult<Json<Value>> {
    let p = project(&state, &id)?;
    let view = blocking(move || p.validate(&name, req.gid, req.completed)).await?;
    Ok(Json(serde_json::to_value(view).expect("serializable")))
}

#[derive(Deserialize)]
struct ReexpandRequest {
    #[serde(default = "yes")]
    validated_only: bool,
    #[serde(default)]
    k: Option<usize>,
    #[serde(default)]
    threshold: Option<f64>,
}

impl Default for ReexpandRequest {
    fn default() -> Self {
        ReexpandRequest {
            validated_only: true,
            k: None,
            threshold: None,
        }
    }
}

fn yes() -> bool {
    true
}

async fn reexpand(
    State(state): State<Shared>,
    Path((id, name)): Path<(String, String)>,
    body: Option<Json<ReexpandRequest>>,
) -> ApiResult<Json<Value>> {
    let req = body.map(|b| b.0).unwrap_or_default();
    let p = project(&state, &id)?;
    let view = blocking(move || p.reexpand(&name, req.validated_only, req.k, req.threshold)).await?;
    Ok(Json(serde_json::to_value(view).expect("serializable")))
}

#[derive(Deserialize)]
struct EvaluateRequest {
    #[serde(default)]
    gold_path: Option<PathBuf>,
    #[serde(default)]
    gold: Option<Vec<GoldClassSpec>>,
    #[serde(default)]
    config: EvalConfig,
}

async fn evaluate(
    State(state): State<Shared>,
    Path(id): Path<String>,
    Json(req): Json<EvaluateRequest>,
) -> ApiResult<Json<Value>> {
    let gold = match (req.gold, req.gold_path) {
        (Some(g), _) => g,
        (None, Some(path)) => load_gold(&path)?,
        (None, None) => return Err(ServiceError::BadRequest("gold or gold_path is required".into()).into()),
    };
    let p = project(&state, &id)?;
    let report = blocking(move || p.evaluate(&gold, &req.config)).await?;
    Ok(Json(serde_json::to_value(report).expect("serializable")))
}
