//! Procedural motion on the default humanoid.
//!
//! Each clip walks with a random gait while spine bend, shoulder elevation and
//! protraction, and hip abduction drift independently, so every built-in
//! metric sweeps a wide range within a few frames.

use std::f64::consts::{PI, TAU};

use nalgebra::UnitQuaternion;

use crate::dataset::Dataset;
use crate::nn::SeededRng;
use crate::skeleton::{forward_kinematics, to_root_relative, AnimationClip, Skeleton, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub clips: usize,
    pub frames: usize,
    pub frame_rate: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            clips: 100,
            frames: 120,
            frame_rate: 30.0,
            seed: 0,
        }
    }
}

/// Sum of a few random sinusoids around a base value.
struct Wave {
    base: f64,
    terms: Vec<(f64, f64, f64)>,
}

impl Wave {
    fn new(rng: &mut SeededRng, base: (f64, f64), amplitude: f64, freq: (f64, f64)) -> Self {
        let terms = (0..2)
            .map(|_| {
                (
                    rng.uniform_f64(0.3, 1.0) * amplitude,
                    rng.uniform_f64(freq.0, freq.1),
                    rng.uniform_f64(0.0, TAU),
                )
            })
            .collect();
        Self {
            base: rng.uniform_f64(base.0, base.1),
            terms,
        }
    }

    fn at(&self, time: f64) -> f64 {
        self.base + self.terms.iter().map(|(a, f, p)| a * (TAU * f * time + p).sin()).sum::<f64>()
    }
}

fn rx(a: f64) -> UnitQuaternion<f64> {
    UnitQuaternion::from_axis_angle(&Vec3::x_axis(), a)
}

fn ry(a: f64) -> UnitQuaternion<f64> {
    UnitQuaternion::from_axis_angle(&Vec3::y_axis(), a)
}

fn rz(a: f64) -> UnitQuaternion<f64> {
    UnitQuaternion::from_axis_angle(&Vec3::z_axis(), a)
}

struct Joints {
    spine: [usize; 3],
    lclav: usize,
    rclav: usize,
    larm: usize,
    rarm: usize,
    lforearm: usize,
    rforearm: usize,
    lhip: usize,
    rhip: usize,
    lknee: usize,
    rknee: usize,
    lfoot: usize,
    rfoot: usize,
}

impl Joints {
    fn of(s: &Skeleton) -> Self {
        let j = |n: &str| s.joint_index(n).expect("default humanoid joint");
        Self {
            spine: [j("Spine"), j("Spine1"), j("Spine2")],
            lclav: j("LeftShoulder"),
            rclav: j("RightShoulder"),
            larm: j("LeftArm"),
            rarm: j("RightArm"),
            lforearm: j("LeftForeArm"),
            rforearm: j("RightForeArm"),
            lhip: j("LeftUpLeg"),
            rhip: j("RightUpLeg"),
            lknee: j("LeftLeg"),
            rknee: j("RightLeg"),
            lfoot: j("LeftFoot"),
            rfoot: j("RightFoot"),
        }
    }
}

/// Rest pose: upright, arms hanging at the sides.
fn rest_rotations(skeleton: &Skeleton, j: &Joints) -> Vec<UnitQuaternion<f64>> {
    let mut r = vec![UnitQuaternion::identity(); skeleton.joint_count()];
    r[j.larm] = rz(-1.3);
    r[j.rarm] = rz(1.3);
    r
}

pub const PELVIS_HEIGHT: f64 = 0.92;

fn generate_clip(skeleton: &Skeleton, j: &Joints, id: String, config: &SynthConfig, rng: &mut SeededRng) -> AnimationClip {
    // Metric-driving waves change by a few tenths of a radian within ten frames.
    let brisk = (0.3, 1.0);
    let bend = Wave::new(rng, (-0.1, 0.6), 0.35, brisk);
    let side = Wave::new(rng, (-0.05, 0.05), 0.1, brisk);
    let elevation = Wave::new(rng, (-0.1, 0.3), 0.3, brisk);
    let protraction = Wave::new(rng, (-0.2, 0.3), 0.3, brisk);
    let abduction = Wave::new(rng, (0.0, 0.3), 0.25, brisk);
    // Motion no metric describes stays slow: a stroll with gentle turns.
    let arm_raise = Wave::new(rng, (0.0, 0.4), 0.3, (0.05, 0.15));
    let gait_freq = rng.uniform_f64(0.3, 0.6);
    let stride = rng.uniform_f64(0.0, 0.4);
    let gait_phase = rng.uniform_f64(0.0, TAU);
    let mut heading = rng.uniform_f64(-PI, PI);
    let turn_rate = rng.uniform_f64(-0.15, 0.15);
    let mut position = Vec3::zeros();
    let speed = stride * 2.0;

    let dt = 1.0 / config.frame_rate;
    let poses = (0..config.frames)
        .map(|f| {
            let time = f as f64 * dt;
            let phase = TAU * gait_freq * time + gait_phase;
            let swing = stride * phase.sin();
            let mut r = rest_rotations(skeleton, j);

            let b = bend.at(time);
            let s = side.at(time);
            for &k in &j.spine {
                r[k] = rx(b / 3.0) * rz(s / 3.0);
            }
            let e = elevation.at(time).max(-0.2);
            let p = protraction.at(time);
            r[j.lclav] = ry(-p) * rz(e);
            r[j.rclav] = ry(p) * rz(-e);
            let raise = arm_raise.at(time).clamp(-0.2, 1.2);
            r[j.larm] = rx(0.6 * swing) * rz(-1.3 + raise);
            r[j.rarm] = rx(-0.6 * swing) * rz(1.3 - raise);
            r[j.lforearm] = ry(0.2 + 0.3 * stride);
            r[j.rforearm] = ry(-0.2 - 0.3 * stride);

            let a = abduction.at(time).max(-0.1);
            r[j.lhip] = rx(-swing) * rz(a);
            r[j.rhip] = rx(swing) * rz(-a);
            r[j.lknee] = rx(stride * 1.2 * phase.cos().max(0.0));
            r[j.rknee] = rx(stride * 1.2 * (-phase.cos()).max(0.0));
            r[j.lfoot] = rx(-0.3 * swing);
            r[j.rfoot] = rx(0.3 * swing);

            r[0] = ry(heading) * rx(0.05 * b) * rz(0.03 * (2.0 * phase).sin());
            let height = PELVIS_HEIGHT - 0.03 * stride * (2.0 * phase).cos().abs() - 0.1 * a.max(0.0);
            let root = Vec3::new(position.x, height, position.z);

            heading += turn_rate * dt;
            position += Vec3::new(heading.sin(), 0.0, heading.cos()) * speed * dt;

            let world = forward_kinematics(skeleton, root, &r).expect("finite synthetic rotations");
            to_root_relative(&world, 0).expect("finite synthetic positions")
        })
        .collect();
    AnimationClip::new(id, config.frame_rate, poses).expect("non-empty synthetic clip")
}

/// Deterministic procedural clips on `Skeleton::default_humanoid()`.
pub fn synthetic_clips(config: &SynthConfig) -> Vec<AnimationClip> {
    let skeleton = Skeleton::default_humanoid();
    let joints = Joints::of(&skeleton);
    let root = SeededRng::new(config.seed);
    (0..config.clips)
        .map(|c| {
            let mut rng = root.fork(100 + c as u64);
            generate_clip(&skeleton, &joints, format!("synth_{c:03}"), config, &mut rng)
        })
        .collect()
}

pub fn synthetic_dataset(config: &SynthConfig) -> Dataset {
    Dataset::with_computed_stats(Skeleton::default_humanoid(), synthetic_clips(config))
        .expect("synthetic clips share the default skeleton")
}

/// A motionless upright clip whose spine is exactly vertical.
pub fn upright_clip(frames: usize, frame_rate: f64) -> AnimationClip {
    let skeleton = Skeleton::default_humanoid();
    let joints = Joints::of(&skeleton);
    let rotations = rest_rotations(&skeleton, &joints);
    let world = forward_kinematics(&skeleton, Vec3::new(0.0, PELVIS_HEIGHT, 0.0), &rotations).expect("finite rest pose");
    let pose = to_root_relative(&world, 0).expect("finite rest pose");
    AnimationClip::new("upright", frame_rate, vec![pose; frames.max(1)]).expect("non-empty clip")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{MetricRegistry, LEGS_SPREAD, SHOULDERS_OPENNESS, SPINE_FLEXION};

    #[test]
    fn deterministic_and_sized() {
        let config = SynthConfig {
            clips: 3,
            frames: 20,
            ..Default::default()
        };
        let a = synthetic_clips(&config);
        assert_eq!(a, synthetic_clips(&config));
        assert_eq!(a.len(), 3);
        assert!(a.iter().all(|c| c.len() == 20 && c.joint_count() == 21));
        assert_ne!(a, synthetic_clips(&SynthConfig { seed: 1, ..config }));
    }

    #[test]
    fn upright_clip_has_vertical_spine() {
        let clip = upright_clip(4, 30.0);
        let registry = MetricRegistry::with_builtins();
        let skeleton = Skeleton::default_humanoid();
        for p in &clip.poses {
            assert!(registry.evaluate(SPINE_FLEXION, &skeleton, p).unwrap().abs() < 1e-9);
            assert_eq!(p.joint(0).x, 0.0);
            assert_eq!(p.joint(0).z, 0.0);
        }
    }

    #[test]
    fn metrics_vary_across_the_set() {
        let dataset = synthetic_dataset(&SynthConfig {
            clips: 10,
            frames: 60,
            ..Default::default()
        });
        let registry = MetricRegistry::with_builtins();
        for name in [SPINE_FLEXION, SHOULDERS_OPENNESS, LEGS_SPREAD] {
            let stats = registry.metric_stats(name, &dataset.skeleton, dataset.poses()).unwrap();
            assert!(stats.std > 0.05, "{name}: {stats:?}");
        }
    }
}
