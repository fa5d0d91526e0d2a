use std::collections::{BTreeMap, BTreeSet};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::routing::{get, post};
use axum::Router;
use chrono::NaiveDate;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use sampling_core::analysis::{feedback_digest, performance, progress, DateWindow};
use sampling_core::domain::{
    parse_check_status, parse_date, CheckStatus, Coords, FeedbackCategory, FeedbackEntry,
    FeedbackTarget, PointId, SamplingPoint, SamplingTask, TaskId, Timestamp, WaterType, ZoneId,
};
use sampling_core::ingestion::WorksheetFormat;
use sampling_core::ontology::{app_iri, PatternTerm, Term, TriplePattern};
use sampling_core::sequencer::{plan_routes, RoutePlan};
use sampling_core::workflow::{
    Actor, AuditEvent, CheckInRequest, FeedbackDraft, RoundPhase, SamplingRound, Subject,
};

use crate::error::{ApiError, Reply};
use crate::state::AppState;

pub const ROLE_HEADER: &str = "x-role";

type ApiResult<T> = Result<Reply<T>, ApiError>;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/worksheets/{date}", get(list_worksheet))
        .route("/api/tasks/{id}", get(get_task))
        .route("/api/tasks/{id}/checkin", post(post_check_in))
        .route("/api/points/{id}", get(get_point))
        .route("/api/zones/{id}/map", get(get_zone_map))
        .route("/api/routes", get(get_route))
        .route("/api/progress/{date}", get(get_progress))
        .route("/api/performance", get(get_performance))
        .route("/api/ingest", post(post_ingest))
        .route("/api/feedback", post(post_feedback))
        .route("/api/sync", get(get_sync))
        .route("/api/rounds/{date}/advance", post(post_advance))
        .route("/api/audit/{subject}", get(get_audit))
        .with_state(state)
}

fn date_param(s: &str) -> Result<NaiveDate, ApiError> {
    parse_date(s).map_err(|_| ApiError::bad_date(s))
}

fn today() -> NaiveDate {
    Timestamp::now().date()
}

fn json_body<T: DeserializeOwned>(bytes: &Bytes) -> Result<T, ApiError> {
    if bytes.is_empty() {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "EmptyBody", "request body is empty"));
    }
    serde_json::from_slice(bytes).map_err(|e| ApiError::bad_request(format!("malformed body: {e}")))
}

fn role_header(headers: &HeaderMap) -> Result<String, ApiError> {
    headers
        .get(ROLE_HEADER)
        .and_then(|v| v.to_str().ok())
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(str::to_owned)
        .ok_or_else(|| {
            ApiError::new(StatusCode::BAD_REQUEST, "MissingRole", "the X-Role header is required")
        })
}

#[derive(Debug, Serialize)]
pub struct TaskView {
    #[serde(flatten)]
    pub task: SamplingTask,
    pub key_steps: Vec<String>,
}

fn task_view(store: &sampling_core::store::Store, task: &SamplingTask) -> TaskView {
    let key_steps = store
        .registry()
        .method(task.method_id.as_str())
        .map(|m| m.key_steps.clone())
        .unwrap_or_default();
    TaskView {
        task: task.clone(),
        key_steps,
    }
}

#[derive(Debug, Default, Deserialize)]
pub struct WorksheetQuery {
    pub zone: Option<String>,
    pub method: Option<String>,
    pub point: Option<String>,
    /// Comma-separated status names.
    pub status: Option<String>,
    /// One of `zone`, `method`, `point`, `date`, `status`, `task`.
    pub sort: Option<String>,
    /// `asc` (default) or `desc`.
    pub order: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct WorksheetView {
    pub date: NaiveDate,
    pub total: usize,
    pub tasks: Vec<TaskView>,
}

fn status_filter(raw: Option<&str>) -> Result<Option<BTreeSet<CheckStatus>>, ApiError> {
    raw.map(|s| {
        s.split(',')
            .filter(|t| !t.trim().is_empty())
            .map(|t| parse_check_status(t).map_err(|e| ApiError::bad_request(e.to_string())))
            .collect()
    })
    .transpose()
}

async fn list_worksheet(
    State(state): State<AppState>,
    Path(date): Path<String>,
    Query(q): Query<WorksheetQuery>,
) -> ApiResult<WorksheetView> {
    let date = date_param(&date)?;
    let statuses = status_filter(q.status.as_deref())?;
    let descending = match q.order.as_deref() {
        None | Some("asc") => false,
        Some("desc") => true,
        Some(other) => return Err(ApiError::bad_request(format!("unknown order `{other}`"))),
    };
    let store = state.read();
    let Some(sheet) = store.engine().state().worksheet(date) else {
        let view = WorksheetView { date, total: 0, tasks: Vec::new() };
        return Ok(Reply(StatusCode::OK, view, Some(0)));
    };
    let mut tasks: Vec<&SamplingTask> = sheet
        .tasks
        .values()
        .filter(|t| q.zone.as_deref().is_none_or(|z| t.zone_id.as_str() == z))
        .filter(|t| q.method.as_deref().is_none_or(|m| t.method_id.as_str() == m))
        .filter(|t| q.point.as_deref().is_none_or(|p| t.point_id.as_str() == p))
        .filter(|t| statuses.as_ref().is_none_or(|s| s.contains(&t.status)))
        .collect();
    if let Some(column) = q.sort.as_deref() {
        match column {
            "zone" => tasks.sort_by(|a, b| a.zone_id.cmp(&b.zone_id)),
            "method" => tasks.sort_by(|a, b| a.method_id.cmp(&b.method_id)),
            "point" => tasks.sort_by(|a, b| a.point_id.cmp(&b.point_id)),
            "date" => tasks.sort_by_key(|t| t.execution_date),
            "status" => tasks.sort_by_key(|t| t.status),
            "task" => tasks.sort_by(|a, b| a.task_id.cmp(&b.task_id)),
            other => return Err(ApiError::bad_request(format!("unknown sort column `{other}`"))),
        }
    }
    if descending {
        tasks.reverse();
    }
    let tasks: Vec<TaskView> = tasks.into_iter().map(|t| task_view(&store, t)).collect();
    let view = WorksheetView { date, total: sheet.tasks.len(), tasks };
    Ok(Reply(StatusCode::OK, view, Some(sheet.version)))
}

async fn get_task(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<TaskView> {
    let store = state.read();
    let task = store
        .engine()
        .task(&id)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "UnknownTask", format!("unknown task `{id}`")))?;
    let version = task.version;
    Ok(Reply(StatusCode::OK, task_view(&store, task), Some(version)))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckInBody {
    pub actor: String,
    pub timestamp: Option<Timestamp>,
    #[serde(default)]
    pub completed_items: BTreeSet<String>,
    pub expected_version: Option<u64>,
}

async fn post_check_in(
    State(state): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<TaskView> {
    let role = role_header(&headers)?;
    let body: CheckInBody = json_body(&body)?;
    let req = CheckInRequest {
        task_id: TaskId::new(id),
        actor: Actor::new(body.actor, role),
        timestamp: body.timestamp.unwrap_or_else(Timestamp::now),
        completed_items: body.completed_items,
        expected_version: body.expected_version,
    };
    let mut store = state.write();
    let result = store.engine_mut().check_in(req);
    // Rejected attempts are audit events too.
    store.persist()?;
    let task = result?;
    let version = task.version;
    Ok(Reply(StatusCode::OK, task_view(&store, &task), Some(version)))
}

#[derive(Debug, Serialize)]
pub struct Fact {
    pub predicate: String,
    pub object: String,
}

#[derive(Debug, Serialize)]
pub struct PointView {
    #[serde(flatten)]
    pub point: SamplingPoint,
    pub classes: Vec<String>,
    pub facts: Vec<Fact>,
    pub feedback: BTreeMap<FeedbackCategory, Vec<FeedbackEntry>>,
}

fn all_time() -> DateWindow {
    DateWindow::new(NaiveDate::MIN, NaiveDate::MAX)
}

async fn get_point(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<PointView> {
    let store = state.read();
    let point = store
        .registry()
        .point(&id)
        .ok_or_else(|| ApiError::not_found(format!("unknown point `{id}`")))?
        .clone();
    let iri = app_iri(&id);
    let pattern = TriplePattern::new(
        PatternTerm::Const(Term::Iri(iri.clone())),
        PatternTerm::Var("predicate".into()),
        PatternTerm::Var("object".into()),
    );
    let facts = store
        .kb()
        .query(&pattern)
        .into_iter()
        .map(|b| Fact {
            predicate: b["predicate"].to_string(),
            object: b["object"].to_string(),
        })
        .collect();
    let classes = store
        .kb()
        .inferred_classes(&iri)
        .into_iter()
        .map(|c| c.as_str().to_owned())
        .collect();
    // Point feedback plus feedback on any task at this point.
    let entries = store.engine().state().feedback.iter().filter(|e| match &e.target {
        FeedbackTarget::Point(p) => p.as_str() == id,
        FeedbackTarget::Task(t) => store
            .engine()
            .task(t.as_str())
            .is_some_and(|task| task.point_id.as_str() == id),
    });
    let feedback = feedback_digest(entries, all_time());
    Ok(Reply(StatusCode::OK, PointView { point, classes, facts, feedback }, None))
}

#[derive(Debug, Default, Deserialize)]
pub struct MapQuery {
    pub date: Option<String>,
    /// Comma-separated marker statuses to keep, including `NoTask`.
    pub status: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum MarkerStatus {
    Untouched,
    Partial,
    Completed,
    NoTask,
}

impl From<CheckStatus> for MarkerStatus {
    fn from(s: CheckStatus) -> Self {
        match s {
            CheckStatus::Untouched => MarkerStatus::Untouched,
            CheckStatus::Partial => MarkerStatus::Partial,
            CheckStatus::Completed => MarkerStatus::Completed,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Marker {
    pub point_id: PointId,
    pub coords: Coords,
    pub water_type: WaterType,
    pub status: MarkerStatus,
    pub tasks: Vec<TaskId>,
}

#[derive(Debug, Serialize)]
pub struct ZoneMap {
    pub zone_id: ZoneId,
    pub name: String,
    pub floor_plan_ref: String,
    pub date: NaiveDate,
    pub markers: Vec<Marker>,
}

fn marker_filter(raw: Option<&str>) -> Result<Option<BTreeSet<MarkerStatus>>, ApiError> {
    raw.map(|s| {
        s.split(',')
            .filter(|t| !t.trim().is_empty())
            .map(|t| {
                if t.trim().eq_ignore_ascii_case("NoTask") {
                    Ok(MarkerStatus::NoTask)
                } else {
                    parse_check_status(t)
                        .map(MarkerStatus::from)
                        .map_err(|e| ApiError::bad_request(e.to_string()))
                }
            })
            .collect()
    })
    .transpose()
}

async fn get_zone_map(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<MapQuery>,
) -> ApiResult<ZoneMap> {
    let date = q.date.as_deref().map(date_param).transpose()?.unwrap_or_else(today);
    let keep = marker_filter(q.status.as_deref())?;
    let store = state.read();
    let zone = store
        .registry()
        .zone(&id)
        .ok_or_else(|| ApiError::not_found(format!("unknown zone `{id}`")))?;
    let sheet = store.engine().state().worksheet(date);
    let mut markers = Vec::new();
    for point in store.registry().points_in_zone(&id) {
        let tasks: Vec<&SamplingTask> = sheet
            .map(|s| s.tasks.values().filter(|t| t.point_id == point.point_id).collect())
            .unwrap_or_default();
        let status = tasks
            .iter()
            .map(|t| t.status)
            .min()
            .map(MarkerStatus::from)
            .unwrap_or(MarkerStatus::NoTask);
        if keep.as_ref().is_some_and(|k| !k.contains(&status)) {
            continue;
        }
        markers.push(Marker {
            point_id: point.point_id.clone(),
            coords: point.coords,
            water_type: point.water_type,
            status,
            tasks: tasks.iter().map(|t| t.task_id.clone()).collect(),
        });
    }
    let view = ZoneMap {
        zone_id: zone.zone_id.clone(),
        name: zone.name.clone(),
        floor_plan_ref: zone.floor_plan_ref.clone(),
        date,
        markers,
    };
    Ok(Reply(StatusCode::OK, view, sheet.map(|s| s.version)))
}

#[derive(Debug, Default, Deserialize)]
pub struct RouteQuery {
    pub date: String,
    pub zone: Option<String>,
    pub k: Option<usize>,
    pub start: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct RoutesView {
    pub date: NaiveDate,
    pub inter_zone_penalty: f64,
    pub plans: Vec<RoutePlan>,
}

/// With `zone` set only that zone's tasks are planned.
async fn get_route(State(state): State<AppState>, Query(q): Query<RouteQuery>) -> ApiResult<RoutesView> {
    let date = date_param(&q.date)?;
    let store = state.read();
    let registry = store.registry();
    let model = state.model();
    let sheet = store.engine().state().worksheet(date);
    let mut tasks: Vec<SamplingTask> = sheet.map(|s| s.tasks.values().cloned().collect()).unwrap_or_default();
    if let Some(zone) = q.zone.as_deref() {
        if registry.zone(zone).is_none() {
            return Err(ApiError::not_found(format!("unknown zone `{zone}`")));
        }
        tasks.retain(|t| t.zone_id.as_str() == zone);
    }
    if tasks.is_empty() {
        return Err(ApiError::new(StatusCode::NOT_FOUND, "NoTasks", format!("no tasks on {date}")));
    }
    let start = q.start.map(PointId::new);
    let plans = plan_routes(&tasks, registry, q.k, start.as_ref(), model)?;
    let view = RoutesView { date, inter_zone_penalty: model.inter_zone_penalty(), plans };
    Ok(Reply(StatusCode::OK, view, sheet.map(|s| s.version)))
}

async fn get_progress(
    State(state): State<AppState>,
    Path(date): Path<String>,
) -> ApiResult<sampling_core::analysis::ProgressSnapshot> {
    let date = date_param(&date)?;
    let store = state.read();
    let sheet = store.engine().state().worksheet(date);
    let snapshot = progress(sheet.into_iter().flat_map(|s| s.tasks.values()), Timestamp::now());
    Ok(Reply(StatusCode::OK, snapshot, Some(sheet.map_or(0, |s| s.version))))
}

#[derive(Debug, Default, Deserialize)]
pub struct WindowQuery {
    pub from: Option<String>,
    pub to: Option<String>,
}

async fn get_performance(
    State(state): State<AppState>,
    Query(q): Query<WindowQuery>,
) -> ApiResult<sampling_core::analysis::PerformanceStats> {
    let from = q.from.as_deref().map(date_param).transpose()?;
    let to = q.to.as_deref().map(date_param).transpose()?;
    let window = match (from, to) {
        (None, None) => DateWindow::single(today()),
        (Some(f), None) => DateWindow::new(f, f),
        (None, Some(t)) => DateWindow::new(t, t),
        (Some(f), Some(t)) => DateWindow::new(f, t),
    };
    let store = state.read();
    Ok(Reply(StatusCode::OK, performance(store.engine().events(), window), None))
}

async fn post_ingest(
    State(state): State<AppState>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<sampling_core::ingestion::IngestReport> {
    if body.is_empty() {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "EmptyBody", "request body is empty"));
    }
    let is_json = headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.contains("json"));
    let format = if is_json {
        WorksheetFormat::StructuredRecords
    } else {
        WorksheetFormat::DelimitedText
    };
    // Parsing is CPU-bound; keep it off the async workers.
    let report = tokio::task::spawn_blocking(move || state.ingest(&body, format))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;
    Ok(Reply(StatusCode::OK, report, None))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackBody {
    pub target: FeedbackTarget,
    pub author: String,
    pub text: String,
    pub category: FeedbackCategory,
    pub timestamp: Option<Timestamp>,
}

async fn post_feedback(
    State(state): State<AppState>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<FeedbackEntry> {
    let role = role_header(&headers)?;
    let body: FeedbackBody = json_body(&body)?;
    let draft = FeedbackDraft {
        target: body.target,
        author: Actor::new(body.author, role),
        text: body.text,
        category: body.category,
        timestamp: body.timestamp.unwrap_or_else(Timestamp::now),
    };
    let mut store = state.write();
    let result = store.engine_mut().record_feedback(draft);
    store.persist()?;
    Ok(Reply(StatusCode::CREATED, result?, None))
}

#[derive(Debug, Serialize)]
pub struct SyncStatus {
    pub connected: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub last_sync: Option<Timestamp>,
}

async fn get_sync(State(state): State<AppState>) -> ApiResult<SyncStatus> {
    let status = SyncStatus {
        connected: state.watcher_alive(),
        last_sync: state.last_sync(),
    };
    Ok(Reply(StatusCode::OK, status, None))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdvanceBody {
    pub phase: RoundPhase,
    pub actor: String,
    pub timestamp: Option<Timestamp>,
}

async fn post_advance(
    State(state): State<AppState>,
    Path(date): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<SamplingRound> {
    let date = date_param(&date)?;
    let role = role_header(&headers)?;
    let body: AdvanceBody = json_body(&body)?;
    let ts = body.timestamp.unwrap_or_else(Timestamp::now);
    let mut store = state.write();
    let result = store
        .engine_mut()
        .advance_phase(date, body.phase, &Actor::new(body.actor, role), ts);
    store.persist()?;
    let round = result?;
    let version = store.engine().state().worksheet(date).map(|s| s.version);
    Ok(Reply(StatusCode::OK, round, version))
}

async fn get_audit(
    State(state): State<AppState>,
    Path(subject): Path<String>,
) -> ApiResult<Vec<AuditEvent>> {
    let subject: Subject = subject.parse().map_err(ApiError::bad_request)?;
    let store = state.read();
    let trail = store.engine().audit_trail(&subject).into_iter().cloned().collect();
    Ok(Reply(StatusCode::OK, trail, None))
}
