//! Quantitative checks of a trained bundle.

use std::fmt;

use rayon::prelude::*;
use serde::Serialize;

use crate::metrics::MetricRegistry;
use crate::nn::SeededRng;
use crate::pipeline::{Bundle, EncoderDecoder, PipelineError};
use crate::skeleton::Pose;

/// Mean Euclidean distance between corresponding joints.
pub fn mean_joint_distance(a: &Pose, b: &Pose) -> f64 {
    assert_eq!(a.joint_count(), b.joint_count(), "poses must have the same joint count");
    let sum: f64 = a.positions().iter().zip(b.positions()).map(|(p, q)| (p - q).norm()).sum();
    sum / a.joint_count().max(1) as f64
}

/// Mean per-joint distance between each pose and its reconstruction.
pub fn reconstruction_error(model: &EncoderDecoder, poses: &[Pose]) -> Result<f64, PipelineError> {
    if poses.is_empty() {
        return Err(PipelineError::EmptyDataset);
    }
    let recon = model.decode_batch(&model.encode_batch(poses)?)?;
    let total: f64 = poses.iter().zip(&recon).map(|(p, r)| mean_joint_distance(p, r)).sum();
    Ok(total / poses.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MoveReport {
    pub trials: usize,
    pub successes: usize,
    /// Trials whose metric could not be evaluated on the source or edited pose.
    pub skipped: usize,
}

impl MoveReport {
    pub fn rate(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.successes as f64 / self.trials as f64
        }
    }
}

/// Requests random metric changes of at most `max_delta` radians on random
/// poses and counts how often the edited pose ends up closer to the target.
///
/// Every metric in `metrics` gets its own target in the same edit; a trial
/// succeeds only if all of them move closer.
pub fn metric_move_trials(
    bundle: &Bundle,
    registry: &MetricRegistry,
    metrics: &[&str],
    poses: &[Pose],
    trials: usize,
    max_delta: f64,
    seed: u64,
) -> Result<MoveReport, PipelineError> {
    if poses.is_empty() {
        return Err(PipelineError::EmptyDataset);
    }
    for m in metrics {
        bundle.metric(m)?;
        registry.get(m)?;
    }
    let mut rng = SeededRng::new(seed).fork(20);
    let plan: Vec<(usize, Vec<f64>)> = (0..trials)
        .map(|_| {
            let i = rng.below(poses.len());
            (i, metrics.iter().map(|_| rng.uniform_f64(-max_delta, max_delta)).collect())
        })
        .collect();
    let skeleton = &bundle.skeleton;
    let outcomes = plan
        .par_iter()
        .map(|(i, deltas)| {
            let pose = &poses[*i];
            let mut before = Vec::with_capacity(metrics.len());
            for m in metrics {
                match registry.evaluate(m, skeleton, pose) {
                    Ok(v) => before.push(v),
                    Err(_) => return Ok(None),
                }
            }
            let targets: Vec<(String, f64)> = metrics
                .iter()
                .zip(before.iter().zip(deltas))
                .map(|(m, (v, d))| (m.to_string(), v + d))
                .collect();
            let edited = bundle.edit_pose(&targets, pose)?;
            let mut all = true;
            for ((m, target), b) in targets.iter().zip(&before) {
                match registry.evaluate(m, skeleton, &edited) {
                    Ok(after) => all &= (after - target).abs() < (b - target).abs(),
                    Err(_) => return Ok(None),
                }
            }
            Ok(Some(all))
        })
        .collect::<Result<Vec<_>, PipelineError>>()?;
    Ok(MoveReport {
        trials: outcomes.iter().flatten().count(),
        successes: outcomes.iter().flatten().filter(|&&s| s).count(),
        skipped: outcomes.iter().filter(|o| o.is_none()).count(),
    })
}

/// Mean per-joint distance between poses and their edits when the requested
/// target equals the current metric value.
pub fn noop_drift(bundle: &Bundle, registry: &MetricRegistry, metric: &str, poses: &[Pose]) -> Result<f64, PipelineError> {
    if poses.is_empty() {
        return Err(PipelineError::EmptyDataset);
    }
    let drifts = poses
        .par_iter()
        .map(|p| {
            let current = registry.evaluate(metric, &bundle.skeleton, p)?;
            let edited = bundle.edit_pose(&[(metric.to_string(), current)], p)?;
            Ok(mean_joint_distance(p, &edited))
        })
        .collect::<Result<Vec<f64>, PipelineError>>()?;
    Ok(drifts.iter().sum::<f64>() / drifts.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub metric: String,
    pub poses: usize,
    pub reconstruction_error: f64,
    pub metric_move: MoveReport,
    pub noop_drift: f64,
}

impl EvalReport {
    pub fn drift_ratio(&self) -> f64 {
        self.noop_drift / self.reconstruction_error
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "[reconstruction]")?;
        writeln!(f, "poses: {}", self.poses)?;
        writeln!(f, "mean per-joint error: {:.6} m", self.reconstruction_error)?;
        writeln!(f)?;
        writeln!(f, "[metric move: {}]", self.metric)?;
        writeln!(f, "trials: {} (skipped {})", self.metric_move.trials, self.metric_move.skipped)?;
        writeln!(f, "success rate: {:.4}", self.metric_move.rate())?;
        writeln!(f)?;
        writeln!(f, "[no-op drift: {}]", self.metric)?;
        writeln!(f, "mean per-joint drift: {:.6} m", self.noop_drift)?;
        write!(f, "drift / reconstruction error: {:.4}", self.drift_ratio())
    }
}

pub fn evaluate(
    bundle: &Bundle,
    registry: &MetricRegistry,
    metric: &str,
    poses: &[Pose],
    trials: usize,
    seed: u64,
) -> Result<EvalReport, PipelineError> {
    Ok(EvalReport {
        metric: metric.to_string(),
        poses: poses.len(),
        reconstruction_error: reconstruction_error(&bundle.model, poses)?,
        metric_move: metric_move_trials(bundle, registry, &[metric], poses, trials, 0.2, seed)?,
        noop_drift: noop_drift(bundle, registry, metric, poses)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::Vec3;

    #[test]
    fn joint_distance() {
        let a = Pose::new(vec![Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0)]).unwrap();
        let b = Pose::new(vec![Vec3::new(0.0, 3.0, 4.0), Vec3::new(1.0, 0.0, 0.0)]).unwrap();
        assert_eq!(mean_joint_distance(&a, &b), 2.5);
        assert_eq!(mean_joint_distance(&a, &a), 0.0);
    }

    #[test]
    fn report_has_three_sections() {
        let r = EvalReport {
            metric: "m".into(),
            poses: 3,
            reconstruction_error: 0.01,
            metric_move: MoveReport {
                trials: 10,
                successes: 9,
                skipped: 0,
            },
            noop_drift: 0.012,
        };
        let text = r.to_string();
        for section in ["[reconstruction]", "[metric move: m]", "[no-op drift: m]"] {
            assert!(text.contains(section), "{text}");
        }
        assert!((r.drift_ratio() - 1.2).abs() < 1e-12);
        assert_eq!(r.metric_move.rate(), 0.9);
    }
}
