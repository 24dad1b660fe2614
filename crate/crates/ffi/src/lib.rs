//! C ABI for loading a model bundle, reading pose metrics and editing poses.
//!
//! All functions return a `PmStatus`. On failure a message is available from
//! `pm_last_error_message` on the same thread until the next failing call.
//! Poses are flattened joint-major `double` arrays of length `3 * joint_count`;
//! latents are `float` arrays of length `latent_dim`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use posemetric::metrics::{vector_angle, MetricError, MetricRegistry};
use posemetric::nn::NnError;
use posemetric::pipeline::{hat_curve, Bundle, LatentPose, PipelineError, WeightCurve};
use posemetric::skeleton::{AnimationClip, Pose, SkeletonError, Vec3};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Dimension = 5,
    UnknownMetric = 6,
    Numeric = 7,
    Panic = 8,
}

/// Opaque handle to a loaded bundle.
pub struct PmModel {
    bundle: Bundle,
    registry: MetricRegistry,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure(PmStatus, String);

impl Failure {
    fn new(status: PmStatus, message: impl Into<String>) -> Self {
        Self(status, message.into())
    }
}

impl From<MetricError> for Failure {
    fn from(e: MetricError) -> Self {
        let status = match e {
            MetricError::Unknown { .. } => PmStatus::UnknownMetric,
            MetricError::JointCount { .. } => PmStatus::Dimension,
            MetricError::MissingRole(_) => PmStatus::InvalidArgument,
            _ => PmStatus::Numeric,
        };
        Self(status, e.to_string())
    }
}

impl From<SkeletonError> for Failure {
    fn from(e: SkeletonError) -> Self {
        let status = match e {
            SkeletonError::NonFinite(_) => PmStatus::Numeric,
            _ => PmStatus::Dimension,
        };
        Self(status, e.to_string())
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        let status = match &e {
            PipelineError::Metric(m) => return m.clone().into(),
            PipelineError::Skeleton(s) => return s.clone().into(),
            PipelineError::Nn(NnError::Io(_)) => PmStatus::Io,
            PipelineError::Nn(NnError::Dimension { .. }) => PmStatus::Dimension,
            PipelineError::Nn(NnError::NonFinite(_)) | PipelineError::NonFiniteTarget(_) | PipelineError::Diverged { .. } => {
                PmStatus::Numeric
            }
            PipelineError::Nn(_) | PipelineError::Bundle(_) => PmStatus::Format,
            PipelineError::LatentDim { .. } | PipelineError::JointCount { .. } | PipelineError::CurveLength { .. } => {
                PmStatus::Dimension
            }
            _ => PmStatus::InvalidArgument,
        };
        Self(status, e.to_string())
    }
}

fn set_last_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = c);
}

/// Runs `f`, recording any failure or panic.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> PmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PmStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_last_error(&message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(&format!("internal panic: {message}"));
            PmStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure::new(PmStatus::NullPointer, format!("`{name}` is null")))
    } else {
        Ok(())
    }
}

unsafe fn model_ref<'a>(model: *const PmModel) -> Result<&'a PmModel, Failure> {
    non_null(model, "model")?;
    Ok(&*model)
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    non_null(p, name)?;
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::new(PmStatus::InvalidArgument, format!("`{name}` is not valid UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    non_null(p, name)?;
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_out<'a, T>(p: *mut T, len: usize, name: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    non_null(p, name)?;
    Ok(std::slice::from_raw_parts_mut(p, len))
}

fn check_len(actual: usize, expected: usize, name: &str) -> Result<(), Failure> {
    if actual != expected {
        return Err(Failure::new(
            PmStatus::Dimension,
            format!("`{name}` has length {actual}, expected {expected}"),
        ));
    }
    Ok(())
}

impl PmModel {
    fn pose_len(&self) -> usize {
        self.bundle.model.joint_count() * 3
    }

    fn pose(&self, values: &[f64]) -> Result<Pose, Failure> {
        check_len(values.len(), self.pose_len(), "pose")?;
        Ok(Pose::from_flat(values)?)
    }
}

unsafe fn targets_arg(metrics: *const *const c_char, values: *const f64, count: usize) -> Result<Vec<(String, f64)>, Failure> {
    if count == 0 {
        return Err(Failure::new(PmStatus::InvalidArgument, "at least one target is required"));
    }
    let names = slice_arg(metrics, count, "metrics")?;
    let values = slice_arg(values, count, "values")?;
    names
        .iter()
        .zip(values)
        .map(|(&n, &v)| Ok((str_arg(n, "metric name")?.to_string(), v)))
        .collect()
}

/// Loads the bundle directory at `bundle_dir` and stores a new handle in `*out`.
///
/// # Safety
/// `bundle_dir` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn pm_model_load(bundle_dir: *const c_char, out: *mut *mut PmModel) -> PmStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let dir = str_arg(bundle_dir, "bundle_dir")?;
        if !Path::new(dir).is_dir() {
            return Err(Failure::new(PmStatus::Io, format!("`{dir}` is not a directory")));
        }
        let bundle = Bundle::load(dir).map_err(|e| match e {
            PipelineError::Bundle(m) if m.contains("No such file") => Failure::new(PmStatus::Io, m),
            other => other.into(),
        })?;
        *out = Box::into_raw(Box::new(PmModel {
            bundle,
            registry: MetricRegistry::with_builtins(),
        }));
        Ok(())
    })
}

/// Releases a handle from `pm_model_load`. Null is ignored.
///
/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pm_model_free(model: *mut PmModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of joints, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pm_model_joint_count(model: *const PmModel) -> usize {
    model.as_ref().map_or(0, |m| m.bundle.model.joint_count())
}

/// Latent dimension, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pm_model_latent_dim(model: *const PmModel) -> usize {
    model.as_ref().map_or(0, |m| m.bundle.model.latent_dim())
}

/// Angle in radians between two 3-vectors.
///
/// # Safety
/// `u` and `v` must point to 3 doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pm_vector_angle(u: *const f64, v: *const f64, out: *mut f64) -> PmStatus {
    guard(|| {
        non_null(out, "out")?;
        let u = slice_arg(u, 3, "u")?;
        let v = slice_arg(v, 3, "v")?;
        *out = vector_angle(&Vec3::new(u[0], u[1], u[2]), &Vec3::new(v[0], v[1], v[2]))?;
        Ok(())
    })
}

/// Evaluates a registered metric on a pose.
///
/// # Safety
/// Pointers must be valid for the given lengths; `metric` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn pm_model_evaluate_metric(
    model: *const PmModel,
    metric: *const c_char,
    pose: *const f64,
    pose_len: usize,
    out: *mut f64,
) -> PmStatus {
    guard(|| {
        let m = model_ref(model)?;
        non_null(out, "out")?;
        let name = str_arg(metric, "metric")?;
        let pose = m.pose(slice_arg(pose, pose_len, "pose")?)?;
        *out = m.registry.evaluate(name, &m.bundle.skeleton, &pose)?;
        Ok(())
    })
}

/// # Safety
/// Pointers must be valid for the given lengths.
#[no_mangle]
pub unsafe extern "C" fn pm_model_encode(
    model: *const PmModel,
    pose: *const f64,
    pose_len: usize,
    latent: *mut f32,
    latent_len: usize,
) -> PmStatus {
    guard(|| {
        let m = model_ref(model)?;
        let pose = m.pose(slice_arg(pose, pose_len, "pose")?)?;
        check_len(latent_len, m.bundle.model.latent_dim(), "latent")?;
        let out = slice_out(latent, latent_len, "latent")?;
        out.copy_from_slice(m.bundle.model.encode(&pose)?.as_slice());
        Ok(())
    })
}

/// # Safety
/// Pointers must be valid for the given lengths.
#[no_mangle]
pub unsafe extern "C" fn pm_model_decode(
    model: *const PmModel,
    latent: *const f32,
    latent_len: usize,
    pose: *mut f64,
    pose_len: usize,
) -> PmStatus {
    guard(|| {
        let m = model_ref(model)?;
        check_len(latent_len, m.bundle.model.latent_dim(), "latent")?;
        check_len(pose_len, m.pose_len(), "pose")?;
        let z = LatentPose(slice_arg(latent, latent_len, "latent")?.to_vec());
        let decoded = m.bundle.model.decode(&z)?;
        slice_out(pose, pose_len, "pose")?.copy_from_slice(&decoded.flatten());
        Ok(())
    })
}

/// Edits one pose toward `target_count` metric targets, averaging the modules.
///
/// # Safety
/// `metrics` must hold `target_count` NUL-terminated strings and `values`
/// `target_count` doubles; pose buffers must be valid for their lengths.
#[no_mangle]
pub unsafe extern "C" fn pm_model_edit_pose(
    model: *const PmModel,
    metrics: *const *const c_char,
    values: *const f64,
    target_count: usize,
    pose: *const f64,
    pose_len: usize,
    out: *mut f64,
    out_len: usize,
) -> PmStatus {
    guard(|| {
        let m = model_ref(model)?;
        let targets = targets_arg(metrics, values, target_count)?;
        let pose = m.pose(slice_arg(pose, pose_len, "pose")?)?;
        check_len(out_len, m.pose_len(), "out")?;
        let edited = m.bundle.edit_pose(&targets, &pose)?;
        slice_out(out, out_len, "out")?.copy_from_slice(&edited.flatten());
        Ok(())
    })
}

/// Edits `frame_count` consecutive poses, blending each frame by `weights[t]` in `[0, 1]`.
///
/// # Safety
/// `frames` and `out` must hold `frame_count * 3 * joint_count` doubles and
/// `weights` `frame_count` doubles; target arrays as in `pm_model_edit_pose`.
#[no_mangle]
pub unsafe extern "C" fn pm_model_edit_clip(
    model: *const PmModel,
    metrics: *const *const c_char,
    values: *const f64,
    target_count: usize,
    frames: *const f64,
    frame_count: usize,
    weights: *const f64,
    out: *mut f64,
) -> PmStatus {
    guard(|| {
        let m = model_ref(model)?;
        if frame_count == 0 {
            return Err(Failure::new(PmStatus::InvalidArgument, "clip needs at least one frame"));
        }
        let targets = targets_arg(metrics, values, target_count)?;
        let stride = m.pose_len();
        let data = slice_arg(frames, frame_count * stride, "frames")?;
        let poses = data.chunks_exact(stride).map(|f| m.pose(f)).collect::<Result<Vec<_>, _>>()?;
        let clip = AnimationClip::new("ffi", 30.0, poses)?;
        let curve = WeightCurve::new(slice_arg(weights, frame_count, "weights")?.to_vec())?;
        let edited = m.bundle.edit_clip(&targets, &clip, &curve)?;
        let dst = slice_out(out, frame_count * stride, "out")?;
        for (chunk, pose) in dst.chunks_exact_mut(stride).zip(&edited.poses) {
            chunk.copy_from_slice(&pose.flatten());
        }
        Ok(())
    })
}

/// Writes the hat weight curve for `frames` frames peaking at `peak` into `out`.
///
/// # Safety
/// `out` must hold `frames` doubles.
#[no_mangle]
pub unsafe extern "C" fn pm_hat_curve(frames: usize, peak: usize, radius: usize, out: *mut f64) -> PmStatus {
    guard(|| {
        let curve = hat_curve(frames, peak, radius)?;
        slice_out(out, frames, "out")?.copy_from_slice(curve.weights());
        Ok(())
    })
}

/// Message for the most recent failure on this thread; empty if none.
/// The pointer stays valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn pm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}
