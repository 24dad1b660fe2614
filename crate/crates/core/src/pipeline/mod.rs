//! Latent pose space, metric networks and clip editing.
//!
//! Poses are encoded once into a 64-dimensional latent space. Every editing
//! module maps a latent pose to an edited latent pose; several modules are
//! combined by averaging their outputs before decoding. Whole clips are
//! edited frame by frame, blending source and edited latents with a
//! per-frame weight curve.

mod animation;
mod bundle;
mod compose;
mod curve;
mod metric_net;
mod model;
mod train;

pub use animation::{blend_latents, edit_animation, edit_animation_latents, FrameLatents};
pub use bundle::{Bundle, BundleManifest, BUNDLE_FORMAT_VERSION, BUNDLE_MANIFEST};
pub use compose::{average_latents, edit_latent, edit_pose, IdentityModule, LatentModule, MetricTarget};
pub use curve::{hat_curve, sine_curve, CurveShape, WeightCurve};
pub use metric_net::MetricNetwork;
pub use model::EncoderDecoder;
pub use train::{train_autoencoder, train_autoencoder_from, train_metric_network, TrainReport, TrainingConfig, METRIC_TRAINING_STEPS};

use thiserror::Error;

use crate::metrics::MetricError;
use crate::nn::NnError;
use crate::skeleton::SkeletonError;

pub const LATENT_DIM: usize = 64;
pub const AUTOENCODER_HIDDEN: usize = 512;
pub const METRIC_HIDDEN: usize = 126;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Skeleton(#[from] SkeletonError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("dataset has no poses")]
    EmptyDataset,
    #[error("no clip has at least 2 frames")]
    ClipTooShort,
    #[error("training diverged at step {step} (loss {loss})")]
    Diverged { step: usize, loss: f32 },
    #[error("latent dimension mismatch: expected {expected}, got {actual}")]
    LatentDim { expected: usize, actual: usize },
    #[error("pose has {actual} joints, model expects {expected}")]
    JointCount { expected: usize, actual: usize },
    #[error("target value must be finite, got {0}")]
    NonFiniteTarget(f64),
    #[error("at least one editing module is required")]
    NoModules,
    #[error("cannot average an empty list of latents")]
    EmptyLatents,
    #[error("weight curve has {actual} samples, clip has {expected} frames")]
    CurveLength { expected: usize, actual: usize },
    #[error("invalid weight curve: {0}")]
    InvalidCurve(String),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("bundle: {0}")]
    Bundle(String),
}

/// A point in the learned latent pose space.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentPose(pub Vec<f32>);

impl LatentPose {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }
}
