//! JSON-over-HTTP backend for plan review: issue listing, plan sets,
//! historical statistics, metadata edits that trigger a re-plan, and
//! planner selections recorded in an append-only audit log.
//!
//! Mutations carry an `X-Request-Id`. Repeating a request id with the same
//! body returns the recorded response; a different body is a conflict.

pub mod api;
pub mod audit;

use std::collections::{BTreeMap, BTreeSet};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, Request, State};
use axum::http::{HeaderMap, Method, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use chrono::Utc;
use plateopt::cost::kpis_from_pairs;
use plateopt::domain::{IssueKey, IssueMeta, PosId};
use plateopt::harness::manifest::sha256_hex;
use plateopt::harness::Planner;
use plateopt::ingest::Dataset;
use serde_json::Value;

use api::{
    ApiError, IssueStats, IssueSummary, MetaResponse, MetaUpdate, PlanView, SelectionRequest, StatsPoint,
};
use audit::{Action, AuditEvent, AuditLog};

pub const REQUEST_ID_HEADER: &str = "x-request-id";

#[derive(Debug, Clone, Default)]
pub struct ServiceConfig {
    /// Static bearer token required on every endpoint but `/health`.
    pub token: Option<String>,
    /// Audit log file; kept in memory only when absent.
    pub audit_log: Option<PathBuf>,
}

struct Shared {
    planner: Planner,
    ds: RwLock<Dataset>,
    plans: RwLock<BTreeMap<IssueKey, Arc<PlanView>>>,
    locks: Mutex<BTreeMap<IssueKey, Arc<tokio::sync::Mutex<()>>>>,
    audit: Mutex<AuditLog>,
    token: Option<String>,
}

#[derive(Clone)]
pub struct AppState(Arc<Shared>);

impl AppState {
    /// Metadata edits already in the audit log are re-applied to `ds`.
    pub fn new(planner: Planner, mut ds: Dataset, cfg: ServiceConfig) -> plateopt::Result<Self> {
        let audit = match &cfg.audit_log {
            Some(p) => AuditLog::open(p).map_err(|e| plateopt::Error::io(p, e))?,
            None => AuditLog::in_memory(),
        };
        for meta in audit.state.metas.values() {
            ds = ds.with_issue_meta(meta.clone())?;
        }
        Ok(AppState(Arc::new(Shared {
            planner,
            ds: RwLock::new(ds),
            plans: RwLock::new(BTreeMap::new()),
            locks: Mutex::new(BTreeMap::new()),
            audit: Mutex::new(audit),
            token: cfg.token,
        })))
    }

    /// Latest selection per issue.
    pub fn selections(&self) -> BTreeMap<IssueKey, api::Selection> {
        self.0.audit.lock().unwrap().state.selections.clone()
    }

    fn issue_lock(&self, key: &IssueKey) -> Arc<tokio::sync::Mutex<()>> {
        self.0.locks.lock().unwrap().entry(key.clone()).or_default().clone()
    }

    fn meta(&self, key: &IssueKey) -> Result<IssueMeta, ApiError> {
        self.0
            .ds
            .read()
            .unwrap()
            .issue(key)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("unknown issue {key}")))
    }

    fn plans(&self, key: &IssueKey) -> Result<Arc<PlanView>, ApiError> {
        if let Some(p) = self.0.plans.read().unwrap().get(key) {
            return Ok(p.clone());
        }
        let meta = self.meta(key)?;
        if !self.0.planner.can_plan(&key.title) {
            return Err(ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "title",
                format!("title {} has no calibrated model", key.title),
            ));
        }
        let view = {
            let ds = self.0.ds.read().unwrap();
            Arc::new(PlanView {
                manifest_hash: self.0.planner.plan_hash(&meta)?,
                plans: self.0.planner.plan_meta(&ds, &meta)?,
            })
        };
        self.0.plans.write().unwrap().insert(key.clone(), view.clone());
        Ok(view)
    }

    /// The recorded response for a repeated request id, or a conflict.
    fn replayed(&self, request_id: &str, fingerprint: &str) -> Result<Option<Value>, ApiError> {
        match self.0.audit.lock().unwrap().state.requests.get(request_id) {
            Some((f, resp)) if f == fingerprint => Ok(Some(resp.clone())),
            Some(_) => Err(conflict(request_id)),
            None => Ok(None),
        }
    }

    fn record(&self, request_id: &str, fingerprint: &str, action: Action, response: Value) -> Result<Value, ApiError> {
        let mut log = self.0.audit.lock().unwrap();
        if let Some((f, resp)) = log.state.requests.get(request_id) {
            return if f == fingerprint { Ok(resp.clone()) } else { Err(conflict(request_id)) };
        }
        let event = AuditEvent {
            seq: 0,
            request_id: request_id.to_string(),
            fingerprint: fingerprint.to_string(),
            at: Utc::now(),
            action,
            response,
        };
        let written = log
            .append(event)
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "audit", e.to_string()))?;
        Ok(written.response)
    }
}

fn conflict(request_id: &str) -> ApiError {
    ApiError::new(
        StatusCode::CONFLICT,
        "X-Request-Id",
        format!("request id {request_id} was already used with a different body"),
    )
}

pub fn router(state: AppState) -> Router {
    let guarded = Router::new()
        .route("/issues", get(list_issues))
        .route("/issues/{title}/{issue}/plans", get(get_plans))
        .route("/issues/{title}/{issue}/stats", get(get_stats))
        .route("/issues/{title}/{issue}/meta", put(put_meta))
        .route("/issues/{title}/{issue}/selection", post(post_selection).get(get_selection))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_token));
    Router::new()
        .route("/health", get(health))
        .merge(guarded)
        .fallback(|| async { ApiError::not_found("no such endpoint") })
        .with_state(state)
}

pub async fn serve(addr: SocketAddr, state: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

async fn require_token(State(state): State<AppState>, req: Request, next: Next) -> Response {
    if let Some(token) = &state.0.token {
        let ok = req
            .headers()
            .get("authorization")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .is_some_and(|t| t == token);
        if !ok {
            return ApiError::new(StatusCode::UNAUTHORIZED, "Authorization", "missing or wrong bearer token")
                .into_response();
        }
    }
    next.run(req).await
}

async fn health(State(state): State<AppState>) -> Json<Value> {
    Json(serde_json::json!({
        "status": "ok",
        "run": state.0.planner.manifest_hash(),
        "cutoff": state.0.planner.cutoff(),
    }))
}

async fn list_issues(State(state): State<AppState>) -> Json<Vec<IssueSummary>> {
    let ds = state.0.ds.read().unwrap();
    let plans = state.0.plans.read().unwrap();
    let selections = state.selections();
    let cutoff = state.0.planner.cutoff();
    let out = ds
        .issue_meta()
        .values()
        .filter(|m| m.period_start >= cutoff && state.0.planner.can_plan(&m.title))
        .map(|m| {
            let key = m.key();
            let selected = selections.get(&key).map(|s| s.label.clone());
            let status = if selected.is_some() {
                "selected"
            } else if plans.contains_key(&key) {
                "planned"
            } else {
                "pending"
            };
            IssueSummary {
                plate_size: ds.issue_records(&key).len(),
                issue: key,
                period_start: m.period_start,
                period_end: m.period_end,
                n_total: m.n_total,
                delta: m.delta,
                status: status.to_string(),
                selected_label: selected,
            }
        })
        .collect();
    Json(out)
}

async fn get_plans(State(state): State<AppState>, Path((t, i)): Path<(String, String)>) -> Result<Json<PlanView>, ApiError> {
    let view = state.plans(&IssueKey::new(t, i))?;
    Ok(Json((*view).clone()))
}

async fn get_stats(State(state): State<AppState>, Path((t, i)): Path<(String, String)>) -> Result<Json<IssueStats>, ApiError> {
    let key = IssueKey::new(t, i);
    let meta = state.meta(&key)?;
    let ds = state.0.ds.read().unwrap();
    let mut history = Vec::new();
    for m in ds.title_issues(&key.title) {
        if m.period_end >= meta.period_start || ds.issue_records(&m.key()).is_empty() {
            continue;
        }
        let pairs: Vec<(u32, u32)> = ds
            .issue_records(&m.key())
            .iter()
            .map(|&r| {
                let r = ds.record(r);
                (r.supply, r.sales)
            })
            .collect();
        let k = kpis_from_pairs(pairs, m.price, &state.0.planner.parts().cost)?;
        history.push(StatsPoint {
            issue: m.key(),
            period_start: m.period_start,
            supply: k.total_supply,
            sales: k.total_sales,
            sellthrough: k.sellthrough_rate,
            oos_count: k.oos_count,
            revenue: k.revenue,
            profit: k.profit,
        });
    }
    history.sort_by(|a, b| a.period_start.cmp(&b.period_start).then_with(|| a.issue.cmp(&b.issue)));
    Ok(Json(IssueStats { issue: key, history }))
}

/// Request id, parsed body and fingerprint of a mutating request.
fn mutation(method: &Method, path: &str, headers: &HeaderMap, body: &Bytes) -> Result<(String, Value, String), ApiError> {
    let request_id = headers
        .get(REQUEST_ID_HEADER)
        .and_then(|v| v.to_str().ok())
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .ok_or_else(|| {
            ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "X-Request-Id", "mutating requests need a request id")
        })?
        .to_string();
    let value: Value = serde_json::from_slice(body)
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "body", e.to_string()))?;
    let canonical = serde_json::to_string(&value).expect("a parsed value serializes");
    let fingerprint = sha256_hex(format!("{method} {path}\n{canonical}").as_bytes());
    Ok((request_id, value, fingerprint))
}

fn parse<T: serde::de::DeserializeOwned>(value: Value) -> Result<T, ApiError> {
    serde_json::from_value(value).map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "body", e.to_string()))
}

async fn put_meta(
    State(state): State<AppState>,
    Path((t, i)): Path<(String, String)>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Json<Value>, ApiError> {
    let key = IssueKey::new(t, i);
    let (request_id, value, fingerprint) =
        mutation(&Method::PUT, &format!("/issues/{key}/meta"), &headers, &body)?;
    if let Some(resp) = state.replayed(&request_id, &fingerprint)? {
        return Ok(Json(resp));
    }
    let lock = state.issue_lock(&key);
    let _guard = lock.lock().await;
    let meta = parse::<MetaUpdate>(value)?.apply(state.meta(&key)?);
    meta.validate()?;
    if !state.0.planner.can_plan(&key.title) {
        return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "title", "title has no calibrated model"));
    }

    let mut ds = state.0.ds.write().unwrap();
    let updated = ds.with_issue_meta(meta.clone())?;
    let view = PlanView {
        manifest_hash: state.0.planner.plan_hash(&meta)?,
        plans: state.0.planner.plan_meta(&updated, &meta)?,
    };
    let totals = [&view.plans.optimal_supply_plan, &view.plans.optimal_distribution_plan]
        .into_iter()
        .map(|p| (p.label.clone(), p.total()))
        .collect();
    let response = serde_json::to_value(MetaResponse {
        issue: key.clone(),
        manifest_hash: view.manifest_hash.clone(),
        totals,
    })
    .expect("response serializes");
    let recorded = state.record(&request_id, &fingerprint, Action::Meta { meta }, response)?;
    *ds = updated;
    state.0.plans.write().unwrap().insert(key, Arc::new(view));
    Ok(Json(recorded))
}

async fn post_selection(
    State(state): State<AppState>,
    Path((t, i)): Path<(String, String)>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Json<Value>, ApiError> {
    let key = IssueKey::new(t, i);
    let (request_id, value, fingerprint) =
        mutation(&Method::POST, &format!("/issues/{key}/selection"), &headers, &body)?;
    if let Some(resp) = state.replayed(&request_id, &fingerprint)? {
        return Ok(Json(resp));
    }
    let lock = state.issue_lock(&key);
    let _guard = lock.lock().await;
    state.meta(&key)?;
    let plate: BTreeSet<PosId> = {
        let ds = state.0.ds.read().unwrap();
        ds.issue_records(&key).iter().map(|&r| ds.record(r).pos.clone()).collect()
    };
    let selection = parse::<SelectionRequest>(value)?.validate(&key, &plate, Utc::now())?;
    let response = serde_json::to_value(&selection).expect("selection serializes");
    let recorded = state.record(&request_id, &fingerprint, Action::Selection { selection }, response)?;
    Ok(Json(recorded))
}

async fn get_selection(
    State(state): State<AppState>,
    Path((t, i)): Path<(String, String)>,
) -> Result<Json<api::Selection>, ApiError> {
    let key = IssueKey::new(t, i);
    state.meta(&key)?;
    state
        .selections()
        .remove(&key)
        .map(Json)
        .ok_or_else(|| ApiError::not_found(format!("no selection recorded for {key}")))
}
