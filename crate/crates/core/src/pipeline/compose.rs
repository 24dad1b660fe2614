use crate::skeleton::Pose;

use super::{EncoderDecoder, LatentPose, MetricNetwork, PipelineError};

/// Anything that edits a pose inside the shared latent space.
///
/// Module-specific parameters (such as a metric target) are bound into the
/// implementing value.
pub trait LatentModule: Send + Sync {
    fn name(&self) -> &str;
    fn apply(&self, latent: &LatentPose) -> Result<LatentPose, PipelineError>;
}

/// A metric network paired with its target value in radians.
#[derive(Debug, Clone, Copy)]
pub struct MetricTarget<'a> {
    pub network: &'a MetricNetwork,
    pub target: f64,
}

impl<'a> MetricTarget<'a> {
    pub fn new(network: &'a MetricNetwork, target: f64) -> Self {
        Self { network, target }
    }
}

impl LatentModule for MetricTarget<'_> {
    fn name(&self) -> &str {
        self.network.metric()
    }

    fn apply(&self, latent: &LatentPose) -> Result<LatentPose, PipelineError> {
        self.network.apply(latent, self.target)
    }
}

/// Returns its input unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityModule;

impl LatentModule for IdentityModule {
    fn name(&self) -> &str {
        "identity"
    }

    fn apply(&self, latent: &LatentPose) -> Result<LatentPose, PipelineError> {
        Ok(latent.clone())
    }
}

/// Component-wise arithmetic mean.
///
/// Each component is summed in sorted order, so the result does not depend
/// on the order of the inputs.
pub fn average_latents(latents: &[LatentPose]) -> Result<LatentPose, PipelineError> {
    let first = latents.first().ok_or(PipelineError::EmptyLatents)?;
    let dim = first.dim();
    if let Some(bad) = latents.iter().find(|z| z.dim() != dim) {
        return Err(PipelineError::LatentDim {
            expected: dim,
            actual: bad.dim(),
        });
    }
    if latents.len() == 1 {
        return Ok(first.clone());
    }
    let n = latents.len() as f64;
    let mut column = Vec::with_capacity(latents.len());
    let mean = (0..dim)
        .map(|i| {
            column.clear();
            column.extend(latents.iter().map(|z| z.0[i]));
            column.sort_by(f32::total_cmp);
            (column.iter().map(|&v| v as f64).sum::<f64>() / n) as f32
        })
        .collect();
    Ok(LatentPose(mean))
}

/// Runs every module on the same latent and averages the results.
pub fn edit_latent(modules: &[&dyn LatentModule], latent: &LatentPose) -> Result<LatentPose, PipelineError> {
    if modules.is_empty() {
        return Err(PipelineError::NoModules);
    }
    let outputs = modules
        .iter()
        .map(|m| {
            let z = m.apply(latent)?;
            if z.dim() != latent.dim() {
                return Err(PipelineError::LatentDim {
                    expected: latent.dim(),
                    actual: z.dim(),
                });
            }
            Ok(z)
        })
        .collect::<Result<Vec<_>, _>>()?;
    average_latents(&outputs)
}

/// Encode once, run all modules, average, decode.
pub fn edit_pose(model: &EncoderDecoder, modules: &[&dyn LatentModule], pose: &Pose) -> Result<Pose, PipelineError> {
    let z = model.encode(pose)?;
    model.decode(&edit_latent(modules, &z)?)
}
