use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::metrics::{MetricError, MetricStats};
use crate::nn::{load_weights, save_weights};
use crate::skeleton::{AnimationClip, NormalizationStats, Pose, Skeleton};

use super::{edit_animation, edit_pose, EncoderDecoder, LatentModule, MetricNetwork, MetricTarget, PipelineError, WeightCurve};

pub const BUNDLE_FORMAT_VERSION: u32 = 1;
pub const BUNDLE_MANIFEST: &str = "bundle.json";
const ENCODER_FILE: &str = "encoder.tnn";
const DECODER_FILE: &str = "decoder.tnn";

/// Contents of `bundle.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub format_version: u32,
    pub joint_count: usize,
    pub latent_dim: usize,
    pub skeleton: Skeleton,
    pub stats: NormalizationStats,
    /// Target standardization of each trained metric network.
    pub metrics: BTreeMap<String, MetricStats>,
}

/// A trained encoder/decoder, the skeleton it was trained on, and any metric networks.
#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub skeleton: Skeleton,
    pub model: EncoderDecoder,
    pub metrics: BTreeMap<String, MetricNetwork>,
}

fn metric_file(name: &str) -> Result<String, PipelineError> {
    let ok = !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
    if !ok {
        return Err(PipelineError::Bundle(format!("metric name `{name}` cannot be used as a file name")));
    }
    Ok(format!("metric_{name}.tnn"))
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Bundle(format!("{}: {e}", path.display()))
}

impl Bundle {
    pub fn new(skeleton: Skeleton, model: EncoderDecoder) -> Result<Self, PipelineError> {
        if skeleton.joint_count() != model.joint_count() {
            return Err(PipelineError::JointCount {
                expected: model.joint_count(),
                actual: skeleton.joint_count(),
            });
        }
        Ok(Self {
            skeleton,
            model,
            metrics: BTreeMap::new(),
        })
    }

    /// Adds or replaces the network for its metric.
    pub fn add_metric(&mut self, network: MetricNetwork) -> Result<(), PipelineError> {
        if network.latent_dim() != self.model.latent_dim() {
            return Err(PipelineError::LatentDim {
                expected: self.model.latent_dim(),
                actual: network.latent_dim(),
            });
        }
        metric_file(network.metric())?;
        self.metrics.insert(network.metric().to_string(), network);
        Ok(())
    }

    pub fn manifest(&self) -> BundleManifest {
        BundleManifest {
            format_version: BUNDLE_FORMAT_VERSION,
            joint_count: self.model.joint_count(),
            latent_dim: self.model.latent_dim(),
            skeleton: self.skeleton.clone(),
            stats: self.model.stats().clone(),
            metrics: self.metrics.iter().map(|(k, v)| (k.clone(), v.stats())).collect(),
        }
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), PipelineError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        save_weights(self.model.encoder(), dir.join(ENCODER_FILE))?;
        save_weights(self.model.decoder(), dir.join(DECODER_FILE))?;
        for (name, net) in &self.metrics {
            save_weights(net.net(), dir.join(metric_file(name)?))?;
        }
        let json = serde_json::to_string_pretty(&self.manifest()).map_err(|e| PipelineError::Bundle(e.to_string()))?;
        let path = dir.join(BUNDLE_MANIFEST);
        fs::write(&path, json + "\n").map_err(|e| io_err(&path, e))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let dir = dir.as_ref();
        let path = dir.join(BUNDLE_MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        let manifest: BundleManifest = serde_json::from_str(&text).map_err(|e| io_err(&path, e))?;
        if manifest.format_version != BUNDLE_FORMAT_VERSION {
            return Err(PipelineError::Bundle(format!(
                "format version {}, expected {BUNDLE_FORMAT_VERSION}",
                manifest.format_version
            )));
        }
        if manifest.stats.dim() != manifest.joint_count * 3 || manifest.skeleton.joint_count() != manifest.joint_count {
            return Err(PipelineError::Bundle("joint count disagrees with skeleton or stats".into()));
        }
        let encoder = load_weights(dir.join(ENCODER_FILE))?;
        let decoder = load_weights(dir.join(DECODER_FILE))?;
        let model = EncoderDecoder::new(encoder, decoder, manifest.stats)?;
        if model.latent_dim() != manifest.latent_dim {
            return Err(PipelineError::LatentDim {
                expected: manifest.latent_dim,
                actual: model.latent_dim(),
            });
        }
        let mut bundle = Bundle::new(manifest.skeleton, model)?;
        for (name, stats) in manifest.metrics {
            let net = load_weights(dir.join(metric_file(&name)?))?;
            bundle.add_metric(MetricNetwork::new(name, net, stats)?)?;
        }
        Ok(bundle)
    }

    pub fn metric(&self, name: &str) -> Result<&MetricNetwork, PipelineError> {
        self.metrics.get(name).ok_or_else(|| {
            MetricError::Unknown {
                name: name.to_string(),
                available: self.metrics.keys().cloned().collect(),
            }
            .into()
        })
    }

    /// One module per `(metric, target)` pair.
    pub fn modules(&self, targets: &[(String, f64)]) -> Result<Vec<MetricTarget<'_>>, PipelineError> {
        targets
            .iter()
            .map(|(name, value)| {
                if !value.is_finite() {
                    return Err(PipelineError::NonFiniteTarget(*value));
                }
                Ok(MetricTarget::new(self.metric(name)?, *value))
            })
            .collect()
    }

    pub fn edit_pose(&self, targets: &[(String, f64)], pose: &Pose) -> Result<Pose, PipelineError> {
        let modules = self.modules(targets)?;
        let refs: Vec<&dyn LatentModule> = modules.iter().map(|m| m as &dyn LatentModule).collect();
        edit_pose(&self.model, &refs, pose)
    }

    pub fn edit_clip(&self, targets: &[(String, f64)], clip: &AnimationClip, curve: &WeightCurve) -> Result<AnimationClip, PipelineError> {
        let modules = self.modules(targets)?;
        let refs: Vec<&dyn LatentModule> = modules.iter().map(|m| m as &dyn LatentModule).collect();
        edit_animation(&self.model, &refs, clip, curve)
    }
}
