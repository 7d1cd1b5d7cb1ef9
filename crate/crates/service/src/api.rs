//! REST endpoints.
//!
//! | method | path                          | body / query              | response                     |
//! |--------|-------------------------------|---------------------------|------------------------------|
//! | GET    | `/api/patients`               |                           | `{patients: [summary]}`      |
//! | POST   | `/api/patients`               | [`CreatePatient`]         | 201, `PatientRecord`         |
//! | GET    | `/api/patients/{id}`          |                           | `PatientRecord`              |
//! | GET    | `/api/patients/{id}/frames`   |                           | `FrameSequence`              |
//! | POST   | `/api/patients/{id}/rescore`  | [`RescoreRequest`]        | [`RescoreResponse`]          |
//! | GET    | `/api/demo`                   | `?case=<preset>`          | `PatientRecord`              |
//! | GET    | `/api/demo/frames`            | `?case=<preset>`          | `FrameSequence`              |
//! | GET    | `/api/demo/presets`           |                           | `{presets: [..]}`            |
//! | GET    | `/api/training/status`        |                           | [`PipelineStatus`]           |
//! | GET    | `/api/limits`                 |                           | [`LimitsDoc`]                |
//! | GET    | `/api/checklist`              |                           | `{items: [..]}`              |
//!
//! Errors are `{"error": {"code", "message"}}` with 404 for unknown ids and
//! presets, 422 for bodies that do not match the schema or plans that fail
//! validation, 409 when a rescore was based on a stale version, and 500 for
//! agent or pipeline failures. There is no training in this service;
//! `/api/training/status` reports the configured pipeline instead.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use orthoplan_core::agents::HeatmapFile;
use orthoplan_core::config::Config;
use orthoplan_core::dental::{
    limits_for, ArchState, EtaTable, MovementLimits, MovementPlan, PointCloud, ToothType, SCHEMA_VERSION,
};
use orthoplan_core::orchestrator::FusionConfig;
use orthoplan_core::presets::PresetKey;
use orthoplan_core::scoring::{CrowdingMetadata, ScoringConfig, TreatmentScore, WEIGHTS};
use orthoplan_core::staging::{StagingConfig, StagingSummary};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use tower_http::cors::{AllowOrigin, CorsLayer};

use crate::demo::{Demos, PresetEntry};
use crate::error::ApiError;
use crate::pipeline::Pipeline;
use crate::store::{NewPatient, PatientRecord, PatientSummary, Store, StoreError};

const MAX_BODY_BYTES: usize = 64 * 1024 * 1024;

pub struct AppState {
    pub config: Config,
    pub pipeline: Pipeline,
    pub store: Store,
    pub demos: Demos,
    /// Agent calls made by request handlers since startup.
    pub agent_invocations: AtomicU64,
    pub started_at: String,
}

pub type SharedState = Arc<AppState>;

pub fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

impl AppState {
    pub fn new(config: Config, store: Store) -> orthoplan_core::Result<SharedState> {
        config.validate()?;
        let pipeline = Pipeline::new(&config)?;
        let started_at = now();
        let demos = Demos::build(&pipeline, &started_at)?;
        Ok(Arc::new(Self { config, pipeline, store, demos, agent_invocations: AtomicU64::new(0), started_at }))
    }
}

pub fn router(state: SharedState) -> Router {
    let cors = cors_layer(&state.config.service.cors_origins);
    let api = Router::new()
        .route("/api/patients", get(list_patients).post(create_patient))
        .route("/api/patients/{id}", get(get_patient))
        .route("/api/patients/{id}/frames", get(patient_frames))
        .route("/api/patients/{id}/rescore", post(rescore))
        .route("/api/demo", get(demo))
        .route("/api/demo/frames", get(demo_frames))
        .route("/api/demo/presets", get(demo_presets))
        .route("/api/training/status", get(status))
        .route("/api/limits", get(limits))
        .route("/api/checklist", get(checklist))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "NOT_FOUND", "no such endpoint") })
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(state);
    match cors {
        Some(c) => api.layer(c),
        None => api,
    }
}

fn cors_layer(origins: &[String]) -> Option<CorsLayer> {
    if origins.is_empty() {
        return None;
    }
    let allow = if origins.iter().any(|o| o == "*") {
        AllowOrigin::any()
    } else {
        AllowOrigin::list(origins.iter().filter_map(|o| HeaderValue::from_str(o).ok()))
    };
    Some(
        CorsLayer::new()
            .allow_origin(allow)
            .allow_methods([Method::GET, Method::POST])
            .allow_headers([header::CONTENT_TYPE]),
    )
}

fn json_bytes(status: StatusCode, bytes: Vec<u8>) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], bytes).into_response()
}

fn json_value(status: StatusCode, value: &impl Serialize) -> Result<Response, ApiError> {
    let bytes = serde_json::to_vec(value).map_err(|e| ApiError::internal("INTERNAL", e.to_string()))?;
    Ok(json_bytes(status, bytes))
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::unprocessable("SCHEMA_VIOLATION", e.to_string()))
}

fn check_schema(v: Option<u32>) -> Result<(), ApiError> {
    match v {
        Some(v) if v != SCHEMA_VERSION => Err(ApiError::unprocessable(
            "SCHEMA_VIOLATION",
            format!("unsupported schema_version {v}, expected {SCHEMA_VERSION}"),
        )),
        _ => Ok(()),
    }
}

fn store_error(e: StoreError) -> ApiError {
    match e {
        StoreError::NotFound(id) => ApiError::not_found("patient", &id),
        StoreError::Conflict { .. } => ApiError::conflict(e.to_string()),
        other => ApiError::internal("STORE_ERROR", other.to_string()),
    }
}

/// Runs CPU-bound work off the async workers.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError::internal("INTERNAL", e.to_string()))?
}

#[derive(Serialize)]
struct PatientList {
    schema_version: u32,
    patients: Vec<PatientSummary>,
}

async fn list_patients(State(s): State<SharedState>) -> Json<PatientList> {
    let patients = s.store.list().iter().map(|r| PatientSummary::from(r.as_ref())).collect();
    Json(PatientList { schema_version: SCHEMA_VERSION, patients })
}

async fn get_patient(State(s): State<SharedState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let record = s.store.get(&id).ok_or_else(|| ApiError::not_found("patient", &id))?;
    json_value(StatusCode::OK, record.as_ref())
}

async fn patient_frames(State(s): State<SharedState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let record = s.store.get(&id).ok_or_else(|| ApiError::not_found("patient", &id))?;
    let frames = s
        .store
        .frames(&record.content_hash)
        .map_err(store_error)?
        .ok_or_else(|| ApiError::internal("STORE_ERROR", format!("frames of patient '{id}' are missing")))?;
    Ok(json_bytes(StatusCode::OK, frames.to_vec()))
}

/// Scan input: the landmark agent needs heatmaps; without them the
/// orchestrator falls back to the segmentation agent.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanInput {
    pub arch: orthoplan_core::dental::Arch,
    pub cloud: PointCloud,
    #[serde(default)]
    pub heatmaps: Option<Box<RawValue>>,
}

/// Either `arch` (tooth states) or `scan` must be given.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreatePatient {
    #[serde(default)]
    pub schema_version: Option<u32>,
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub arch: Option<ArchState>,
    #[serde(default)]
    pub scan: Option<ScanInput>,
    pub plan: MovementPlan,
    #[serde(default)]
    pub crowding: Option<CrowdingMetadata>,
}

async fn create_patient(State(s): State<SharedState>, body: Bytes) -> Result<Response, ApiError> {
    let req: CreatePatient = parse_body(&body)?;
    check_schema(req.schema_version)?;
    let state = s.clone();
    let record = blocking(move || {
        let s = state;
        let id = uuid::Uuid::new_v4().simple().to_string();
        let (arch, provenance) = match (req.arch, req.scan) {
            (Some(arch), None) => (arch, None),
            (None, Some(scan)) => {
                let heatmaps = scan.heatmaps.map(|h| HeatmapFile::from_json(h.get())).transpose()?;
                let seed = u64::from_str_radix(&id[..16], 16).unwrap_or(0);
                let (arch, prov) = s.pipeline.estimate(&scan.cloud, scan.arch, heatmaps, seed)?;
                s.agent_invocations.fetch_add(prov.runs.len() as u64, Ordering::Relaxed);
                (arch, Some(prov))
            }
            _ => return Err(ApiError::unprocessable("SCHEMA_VIOLATION", "give exactly one of 'arch' and 'scan'")),
        };
        let eval = s.pipeline.evaluate(&arch, &req.plan, req.crowding.as_ref())?;
        let label = req.label.unwrap_or_else(|| format!("Patient {}", &id[..8]));
        let frames_ref = format!("/api/patients/{id}/frames");
        let draft = NewPatient { id, label, arch, plan: req.plan, crowding: req.crowding, provenance };
        let record = PatientRecord::create(draft, &eval, frames_ref, now());
        s.store.insert(record, &eval.frames_json).map_err(store_error)
    })
    .await?;
    json_value(StatusCode::CREATED, record.as_ref())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RescoreRequest {
    #[serde(default)]
    pub schema_version: Option<u32>,
    pub plan: MovementPlan,
    /// Version the client last read; a mismatch is a 409.
    #[serde(default)]
    pub version: Option<u64>,
}

#[derive(Serialize)]
pub struct RescoreResponse {
    pub schema_version: u32,
    pub id: String,
    pub version: u64,
    pub content_hash: String,
    pub score: TreatmentScore,
    pub staging: StagingSummary,
    pub frames_ref: String,
    pub frames: Box<RawValue>,
}

async fn rescore(
    State(s): State<SharedState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<RescoreResponse>, ApiError> {
    let req: RescoreRequest = parse_body(&body)?;
    check_schema(req.schema_version)?;
    let current = s.store.get(&id).ok_or_else(|| ApiError::not_found("patient", &id))?;
    if let Some(v) = req.version {
        if v != current.version {
            return Err(ApiError::conflict(format!(
                "patient '{id}' is at version {}, request was based on {v}",
                current.version
            )));
        }
    }
    let state = s.clone();
    blocking(move || {
        let s = state;
        let eval = s.pipeline.evaluate(&current.arch, &req.plan, current.crowding.as_ref())?;
        let next = current.revised(req.plan, &eval, now());
        // unchanged content leaves the stored version alone
        let stored = if next.content_hash == current.content_hash {
            current
        } else {
            s.store.update(next, current.version, &eval.frames_json).map_err(store_error)?
        };
        let frames = RawValue::from_string(String::from_utf8(eval.frames_json).expect("serde_json writes UTF-8"))
            .map_err(|e| ApiError::internal("INTERNAL", e.to_string()))?;
        Ok(Json(RescoreResponse {
            schema_version: SCHEMA_VERSION,
            id: stored.id.clone(),
            version: stored.version,
            content_hash: stored.content_hash.clone(),
            score: stored.score.clone(),
            staging: stored.staging.clone(),
            frames_ref: stored.frames_ref.clone(),
            frames,
        }))
    })
    .await
}

#[derive(Debug, Deserialize)]
struct CaseQuery {
    case: Option<String>,
}

fn demo_key(q: &CaseQuery) -> Result<PresetKey, ApiError> {
    let key = q
        .case
        .as_deref()
        .ok_or_else(|| ApiError::unprocessable("MISSING_PARAMETER", "query parameter 'case' is required"))?;
    key.parse().map_err(|_| ApiError::not_found("preset", key))
}

async fn demo(State(s): State<SharedState>, Query(q): Query<CaseQuery>) -> Result<Response, ApiError> {
    let key = demo_key(&q)?;
    let case = s.demos.get(key).ok_or_else(|| ApiError::not_found("preset", key.key()))?;
    Ok(json_bytes(StatusCode::OK, case.record_json.clone()))
}

async fn demo_frames(State(s): State<SharedState>, Query(q): Query<CaseQuery>) -> Result<Response, ApiError> {
    let key = demo_key(&q)?;
    let case = s.demos.get(key).ok_or_else(|| ApiError::not_found("preset", key.key()))?;
    Ok(json_bytes(StatusCode::OK, case.frames_json.clone()))
}

#[derive(Serialize)]
struct PresetList {
    schema_version: u32,
    presets: Vec<PresetEntry>,
}

async fn demo_presets(State(s): State<SharedState>) -> Json<PresetList> {
    Json(PresetList { schema_version: SCHEMA_VERSION, presets: s.demos.entries() })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StatusConfig {
    pub orchestrator: FusionConfig,
    pub staging: StagingConfig,
    pub scoring: ScoringConfig,
}

/// Static descriptor of the running pipeline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineStatus {
    pub schema_version: u32,
    pub service: String,
    pub version: String,
    /// Always "none": the agents are classical and never trained here.
    pub training: String,
    pub mode: String,
    pub config: StatusConfig,
    pub agent_invocations: u64,
    pub patients: usize,
    pub presets: Vec<PresetKey>,
    pub started_at: String,
}

async fn status(State(s): State<SharedState>) -> Json<PipelineStatus> {
    let cfg = &s.config;
    Json(PipelineStatus {
        schema_version: SCHEMA_VERSION,
        service: "orthoplan".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        training: "none".into(),
        mode: cfg.orchestrator.mode.to_string(),
        config: StatusConfig { orchestrator: cfg.orchestrator, staging: cfg.staging, scoring: cfg.scoring },
        agent_invocations: s.agent_invocations.load(Ordering::Relaxed),
        patients: s.store.len(),
        presets: PresetKey::ALL.to_vec(),
        started_at: s.started_at.clone(),
    })
}

/// Movement limits and scoring constants, for client-side range checks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LimitsDoc {
    pub schema_version: u32,
    pub limits: BTreeMap<String, MovementLimits>,
    pub eta: EtaTable,
    pub over_engineer: f64,
    pub extrusion_critical_mm: f64,
    pub weights: BTreeMap<String, f64>,
    pub grade_bands: BTreeMap<String, f64>,
}

async fn limits(State(s): State<SharedState>) -> Json<LimitsDoc> {
    let types = [
        ("incisor", ToothType::Incisor),
        ("canine", ToothType::Canine),
        ("premolar", ToothType::Premolar),
        ("molar", ToothType::Molar),
    ];
    let names = ["bio", "staging", "attachments", "ipr", "occlusion", "predictability"];
    let mut lim: BTreeMap<String, MovementLimits> =
        types.iter().map(|(n, t)| (n.to_string(), limits_for(*t))).collect();
    // vertical predictability follows the configured eta table
    for l in lim.values_mut() {
        l.eta_intrusion = s.config.scoring.eta.intrusion;
        l.eta_extrusion = s.config.scoring.eta.extrusion;
    }
    Json(LimitsDoc {
        schema_version: SCHEMA_VERSION,
        limits: lim,
        eta: s.config.scoring.eta,
        over_engineer: s.config.scoring.over_engineer,
        extrusion_critical_mm: s.config.scoring.extrusion_critical_mm,
        weights: names.iter().zip(WEIGHTS).map(|(n, w)| (n.to_string(), w)).collect(),
        grade_bands: [("A", 90.0), ("B", 75.0), ("C", 60.0), ("D", 40.0)]
            .into_iter()
            .map(|(g, v)| (g.to_string(), v))
            .collect(),
    })
}

#[derive(Serialize)]
struct Checklist<'a> {
    schema_version: u32,
    items: &'a [String],
}

async fn checklist(State(s): State<SharedState>) -> Response {
    Json(Checklist { schema_version: SCHEMA_VERSION, items: &s.config.service.checklist }).into_response()
}
