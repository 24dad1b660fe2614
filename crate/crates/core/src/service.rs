//! JSON HTTP API over a loaded bundle and dataset.
//!
//! The loaded state is immutable; every handler is a pure function of it and
//! the request, so identical requests produce identical response bytes.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::{Arc, OnceLock};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use crate::dataset::{read_dataset, Dataset};
use crate::format::round_sig9_slice;
use crate::metrics::{MetricRegistry, MetricStats};
use crate::pipeline::{Bundle, CurveShape, PipelineError, BUNDLE_FORMAT_VERSION};
use crate::skeleton::{AnimationClip, Pose};

/// Everything a request may read.
#[derive(Debug)]
pub struct ServiceState {
    bundle: Bundle,
    dataset: Dataset,
    registry: MetricRegistry,
    metric_stats: BTreeMap<String, MetricStats>,
}

impl ServiceState {
    pub fn new(bundle: Bundle, dataset: Dataset, registry: MetricRegistry) -> Result<Self, PipelineError> {
        if dataset.skeleton.joint_count() != bundle.model.joint_count() {
            return Err(PipelineError::JointCount {
                expected: bundle.model.joint_count(),
                actual: dataset.skeleton.joint_count(),
            });
        }
        let mut metric_stats = BTreeMap::new();
        for def in registry.iter() {
            let values: Vec<f64> = dataset
                .poses()
                .filter_map(|p| def.evaluate(&bundle.skeleton, p).ok())
                .collect();
            if values.is_empty() {
                continue;
            }
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            metric_stats.insert(def.name().to_string(), MetricStats::new(mean, var.sqrt()));
        }
        Ok(Self {
            bundle,
            dataset,
            registry,
            metric_stats,
        })
    }

    pub fn load(bundle_dir: impl AsRef<Path>, dataset_path: impl AsRef<Path>) -> anyhow::Result<Self> {
        let bundle = Bundle::load(bundle_dir)?;
        let dataset = read_dataset(dataset_path)?;
        Ok(Self::new(bundle, dataset, MetricRegistry::with_builtins())?)
    }

    pub fn bundle(&self) -> &Bundle {
        &self.bundle
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    /// Every registered metric on `pose`; `None` where it is undefined.
    fn readings(&self, pose: &Pose) -> BTreeMap<String, Option<f64>> {
        self.registry
            .iter()
            .map(|d| (d.name().to_string(), d.evaluate(&self.bundle.skeleton, pose).ok()))
            .collect()
    }
}

/// Shared slot filled once the bundle is loaded.
pub type SharedState = Arc<OnceLock<ServiceState>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ApiErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ApiErrorBody {
                code: code.to_string(),
                message: message.into(),
            },
        }
    }

    fn invalid(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_request", message)
    }

    fn unavailable() -> Self {
        Self::new(StatusCode::SERVICE_UNAVAILABLE, "not_loaded", "model bundle is not loaded yet")
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Diverged { .. } | PipelineError::Bundle(_) | PipelineError::Nn(_) => {
                Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())
            }
            other => Self::invalid(other.to_string()),
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        Self::invalid(e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

fn loaded(state: &SharedState) -> Result<&ServiceState, ApiError> {
    state.get().ok_or_else(ApiError::unavailable)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub bundle_version: u32,
    pub joint_count: usize,
    pub latent_dim: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MetricInfo {
    pub name: String,
    pub required_roles: Vec<String>,
    #[serde(with = "crate::format::sig9_f64")]
    pub mean: f64,
    #[serde(with = "crate::format::sig9_f64")]
    pub std: f64,
    /// Whether the bundle has a network for this metric.
    pub editable: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ClipSummary {
    pub id: String,
    #[serde(with = "crate::format::sig9_f64")]
    pub frame_rate: f64,
    pub frames: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ClipDetail {
    pub id: String,
    #[serde(with = "crate::format::sig9_f64")]
    pub frame_rate: f64,
    #[serde(with = "crate::format::sig9_frames")]
    pub frames: Vec<Vec<f64>>,
    /// Per-frame value of each metric, `null` where undefined.
    pub metrics: BTreeMap<String, Vec<Option<f64>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Target {
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Deserialize)]
pub struct EditPoseRequest {
    pub pose: Vec<f64>,
    pub targets: Vec<Target>,
}

#[derive(Debug, Deserialize)]
pub struct EditClipRequest {
    pub clip_id: String,
    pub frame: usize,
    pub radius: usize,
    #[serde(default = "default_shape")]
    pub shape: CurveShape,
    pub targets: Vec<Target>,
}

fn default_shape() -> CurveShape {
    CurveShape::Hat
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Readout {
    pub name: String,
    pub before: Option<f64>,
    pub after: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EditResponse {
    /// Edited poses, flattened joint-major.
    #[serde(with = "crate::format::sig9_frames")]
    pub poses: Vec<Vec<f64>>,
    /// One list of readouts per returned pose.
    pub readouts: Vec<Vec<Readout>>,
}

async fn health(State(state): State<SharedState>) -> ApiResult<Health> {
    let s = loaded(&state)?;
    Ok(Json(Health {
        status: "ok".into(),
        bundle_version: BUNDLE_FORMAT_VERSION,
        joint_count: s.bundle.model.joint_count(),
        latent_dim: s.bundle.model.latent_dim(),
    }))
}

async fn metrics(State(state): State<SharedState>) -> ApiResult<Vec<MetricInfo>> {
    let s = loaded(&state)?;
    Ok(Json(
        s.registry
            .iter()
            .map(|d| {
                let stats = s.metric_stats.get(d.name()).copied().unwrap_or(MetricStats::new(0.0, 0.0));
                MetricInfo {
                    name: d.name().to_string(),
                    required_roles: d.required_roles().to_vec(),
                    mean: stats.mean,
                    std: stats.std,
                    editable: s.bundle.metrics.contains_key(d.name()),
                }
            })
            .collect(),
    ))
}

async fn clips(State(state): State<SharedState>) -> ApiResult<Vec<ClipSummary>> {
    let s = loaded(&state)?;
    Ok(Json(
        s.dataset
            .clips
            .iter()
            .map(|c| ClipSummary {
                id: c.id.clone(),
                frame_rate: c.frame_rate,
                frames: c.len(),
            })
            .collect(),
    ))
}

fn find_clip<'a>(s: &'a ServiceState, id: &str) -> Result<&'a AnimationClip, ApiError> {
    s.dataset
        .clip(id)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("no clip with id `{id}`")))
}

async fn clip(State(state): State<SharedState>, UrlPath(id): UrlPath<String>) -> ApiResult<ClipDetail> {
    let s = loaded(&state)?;
    let clip = find_clip(s, &id)?;
    let mut metrics: BTreeMap<String, Vec<Option<f64>>> = BTreeMap::new();
    for pose in &clip.poses {
        for (name, v) in s.readings(pose) {
            metrics.entry(name).or_default().push(v);
        }
    }
    Ok(Json(ClipDetail {
        id: clip.id.clone(),
        frame_rate: clip.frame_rate,
        frames: clip.poses.iter().map(Pose::flatten).collect(),
        metrics,
    }))
}

fn targets(s: &ServiceState, targets: &[Target]) -> Result<Vec<(String, f64)>, ApiError> {
    if targets.is_empty() {
        return Err(ApiError::invalid("at least one target is required"));
    }
    targets
        .iter()
        .map(|t| {
            if !t.value.is_finite() {
                return Err(ApiError::invalid(format!("target for `{}` must be finite", t.metric)));
            }
            s.bundle.metric(&t.metric)?;
            Ok((t.metric.clone(), t.value))
        })
        .collect()
}

/// Rounds poses to their wire precision, then reads metrics from the rounded values
/// so the readouts describe exactly what the client receives.
fn respond(s: &ServiceState, originals: &[Pose], edited: &[Pose]) -> Result<EditResponse, ApiError> {
    let mut poses = Vec::with_capacity(edited.len());
    let mut readouts = Vec::with_capacity(edited.len());
    for (orig, out) in originals.iter().zip(edited) {
        let flat = round_sig9_slice(&out.flatten());
        let wire = Pose::from_flat(&flat).map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?;
        let before = s.readings(orig);
        let after = s.readings(&wire);
        readouts.push(
            before
                .into_iter()
                .zip(after)
                .map(|((name, before), (_, after))| Readout { name, before, after })
                .collect(),
        );
        poses.push(flat);
    }
    Ok(EditResponse { poses, readouts })
}

fn edit_pose_sync(s: &ServiceState, req: EditPoseRequest) -> Result<EditResponse, ApiError> {
    let expected = s.bundle.model.joint_count() * 3;
    if req.pose.len() != expected {
        return Err(ApiError::invalid(format!(
            "pose has {} values, expected {expected}",
            req.pose.len()
        )));
    }
    let pose = Pose::from_flat(&req.pose).map_err(|e| ApiError::invalid(e.to_string()))?;
    let targets = targets(s, &req.targets)?;
    let edited = s.bundle.edit_pose(&targets, &pose)?;
    respond(s, &[pose], &[edited])
}

fn edit_clip_sync(s: &ServiceState, req: EditClipRequest) -> Result<EditResponse, ApiError> {
    let clip = find_clip(s, &req.clip_id)?;
    let targets = targets(s, &req.targets)?;
    let curve = req.shape.build(clip.len(), req.frame, req.radius)?;
    let edited = s.bundle.edit_clip(&targets, clip, &curve)?;
    respond(s, &clip.poses, &edited.poses)
}

async fn run_blocking<T, F>(state: SharedState, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&ServiceState) -> Result<T, ApiError> + Send + 'static,
{
    loaded(&state)?;
    tokio::task::spawn_blocking(move || f(state.get().expect("checked above")))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
        .map(Json)
}

async fn edit_pose(State(state): State<SharedState>, body: Result<Json<EditPoseRequest>, JsonRejection>) -> ApiResult<EditResponse> {
    let Json(req) = body?;
    run_blocking(state, move |s| edit_pose_sync(s, req)).await
}

async fn edit_clip(State(state): State<SharedState>, body: Result<Json<EditClipRequest>, JsonRejection>) -> ApiResult<EditResponse> {
    let Json(req) = body?;
    run_blocking(state, move |s| edit_clip_sync(s, req)).await
}

pub fn router(state: SharedState) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/metrics", get(metrics))
        .route("/api/clips", get(clips))
        .route("/api/clips/{id}", get(clip))
        .route("/api/edit/pose", post(edit_pose))
        .route("/api/edit/clip", post(edit_clip))
        .with_state(state)
}

/// Router over an already loaded state.
pub fn loaded_router(state: ServiceState) -> Router {
    let slot = OnceLock::new();
    let _ = slot.set(state);
    router(Arc::new(slot))
}

/// Serves until ctrl-c.
pub async fn serve(state: ServiceState, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("edit service listening on port {} ({})", listener.local_addr()?.port(), listener.local_addr()?);
    axum::serve(listener, loaded_router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
