use rayon::prelude::*;

use crate::skeleton::AnimationClip;

use super::{edit_latent, EncoderDecoder, LatentModule, LatentPose, PipelineError, WeightCurve};

/// `(1 - w) * z + w * z_bar`, exact at `w = 0` and `w = 1`.
pub fn blend_latents(z: &LatentPose, z_bar: &LatentPose, w: f64) -> Result<LatentPose, PipelineError> {
    if z.dim() != z_bar.dim() {
        return Err(PipelineError::LatentDim {
            expected: z.dim(),
            actual: z_bar.dim(),
        });
    }
    if !(0.0..=1.0).contains(&w) {
        return Err(PipelineError::InvalidCurve(format!("weight {w} outside [0, 1]")));
    }
    if w == 0.0 {
        return Ok(z.clone());
    }
    if w == 1.0 {
        return Ok(z_bar.clone());
    }
    Ok(LatentPose(
        z.0.iter()
            .zip(&z_bar.0)
            .map(|(&a, &b)| ((1.0 - w) * a as f64 + w * b as f64) as f32)
            .collect(),
    ))
}

/// Latents of one edited frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameLatents {
    pub source: LatentPose,
    /// Module pipeline output; not computed where the weight is zero.
    pub edited: Option<LatentPose>,
    pub blended: LatentPose,
}

/// Per-frame latents for a clip edit. Frames are independent and processed in parallel.
pub fn edit_animation_latents(
    model: &EncoderDecoder,
    modules: &[&dyn LatentModule],
    clip: &AnimationClip,
    curve: &WeightCurve,
) -> Result<Vec<FrameLatents>, PipelineError> {
    if curve.len() != clip.len() {
        return Err(PipelineError::CurveLength {
            expected: clip.len(),
            actual: curve.len(),
        });
    }
    if modules.is_empty() {
        return Err(PipelineError::NoModules);
    }
    clip.poses
        .par_iter()
        .zip(curve.weights().par_iter())
        .map(|(pose, &w)| {
            let source = model.encode(pose)?;
            if w == 0.0 {
                return Ok(FrameLatents {
                    blended: source.clone(),
                    source,
                    edited: None,
                });
            }
            let edited = edit_latent(modules, &source)?;
            let blended = blend_latents(&source, &edited, w)?;
            Ok(FrameLatents {
                source,
                edited: Some(edited),
                blended,
            })
        })
        .collect()
}

/// Edits a clip, blending each frame's source and edited latents by the curve.
pub fn edit_animation(
    model: &EncoderDecoder,
    modules: &[&dyn LatentModule],
    clip: &AnimationClip,
    curve: &WeightCurve,
) -> Result<AnimationClip, PipelineError> {
    let latents = edit_animation_latents(model, modules, clip, curve)?;
    let poses = latents
        .par_iter()
        .map(|f| model.decode(&f.blended))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(AnimationClip::new(clip.id.clone(), clip.frame_rate, poses)?)
}
