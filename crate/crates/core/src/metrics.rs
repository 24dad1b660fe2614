//! Pose metrics: objective scalar functions of a single pose.
//!
//! All built-in metrics are angles in radians between two vectors derived
//! from joint positions, so they only depend on joint differences.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::skeleton::{
    Pose, Skeleton, Vec3, ROLE_LKNEE, ROLE_LSHOULDER, ROLE_NECK, ROLE_PELVIS, ROLE_RKNEE, ROLE_RSHOULDER,
    ROLE_SPINE1, STD_EPSILON,
};

/// Vectors shorter than this have no meaningful direction.
pub const MIN_VECTOR_NORM: f64 = 1e-9;

pub const SPINE_FLEXION: &str = "spine_flexion";
pub const SHOULDERS_OPENNESS: &str = "shoulders_openness";
pub const LEGS_SPREAD: &str = "legs_spread";

#[derive(Debug, Clone, Error, PartialEq)]
pub enum MetricError {
    #[error("degenerate vector (norm {0:e}) in angle computation")]
    DegenerateVector(f64),
    #[error("metric `{0}` is already registered")]
    Duplicate(String),
    #[error("unknown metric `{name}`; registered metrics: {}", available.join(", "))]
    Unknown { name: String, available: Vec<String> },
    #[error("role `{0}` is not mapped on this skeleton")]
    MissingRole(String),
    #[error("pose has {actual} joints, skeleton has {expected}")]
    JointCount { expected: usize, actual: usize },
    #[error("metric `{0}` produced a non-finite value")]
    NonFinite(String),
    #[error("cannot compute statistics over an empty dataset")]
    EmptyDataset,
}

/// `arccos(u·v / (|u||v|))` with the cosine clamped to `[-1, 1]`.
pub fn vector_angle(u: &Vec3, v: &Vec3) -> Result<f64, MetricError> {
    let nu = u.norm();
    let nv = v.norm();
    if !(nu > MIN_VECTOR_NORM) {
        return Err(MetricError::DegenerateVector(nu));
    }
    if !(nv > MIN_VECTOR_NORM) {
        return Err(MetricError::DegenerateVector(nv));
    }
    let cos = (u.dot(v) / (nu * nv)).clamp(-1.0, 1.0);
    Ok(cos.acos())
}

/// A pose together with the skeleton whose roles index it.
#[derive(Clone, Copy)]
pub struct RolePose<'a> {
    pub skeleton: &'a Skeleton,
    pub pose: &'a Pose,
}

impl<'a> RolePose<'a> {
    pub fn new(skeleton: &'a Skeleton, pose: &'a Pose) -> Result<Self, MetricError> {
        if skeleton.joint_count() != pose.joint_count() {
            return Err(MetricError::JointCount {
                expected: skeleton.joint_count(),
                actual: pose.joint_count(),
            });
        }
        Ok(Self { skeleton, pose })
    }

    pub fn joint(&self, role: &str) -> Result<Vec3, MetricError> {
        let index = self
            .skeleton
            .role_index(role)
            .map_err(|_| MetricError::MissingRole(role.to_string()))?;
        Ok(self.pose.joint(index))
    }
}

/// Angle between the pelvis-to-neck axis and world up.
pub fn spine_flexion(p: &RolePose<'_>) -> Result<f64, MetricError> {
    vector_angle(&(p.joint(ROLE_NECK)? - p.joint(ROLE_PELVIS)?), &Vec3::y())
}

pub fn shoulders_openness(p: &RolePose<'_>) -> Result<f64, MetricError> {
    let spine1 = p.joint(ROLE_SPINE1)?;
    vector_angle(&(spine1 - p.joint(ROLE_RSHOULDER)?), &(p.joint(ROLE_LSHOULDER)? - spine1))
}

pub fn legs_spread(p: &RolePose<'_>) -> Result<f64, MetricError> {
    let pelvis = p.joint(ROLE_PELVIS)?;
    vector_angle(&(pelvis - p.joint(ROLE_RKNEE)?), &(p.joint(ROLE_LKNEE)? - pelvis))
}

type MetricFn = dyn Fn(&RolePose<'_>) -> Result<f64, MetricError> + Send + Sync;

/// A named single-pose metric.
#[derive(Clone)]
pub struct MetricDef {
    name: String,
    required_roles: Vec<String>,
    evaluate: Arc<MetricFn>,
}

impl fmt::Debug for MetricDef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MetricDef")
            .field("name", &self.name)
            .field("required_roles", &self.required_roles)
            .finish_non_exhaustive()
    }
}

impl MetricDef {
    pub fn new<F>(name: impl Into<String>, required_roles: &[&str], evaluate: F) -> Self
    where
        F: Fn(&RolePose<'_>) -> Result<f64, MetricError> + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            required_roles: required_roles.iter().map(|r| r.to_string()).collect(),
            evaluate: Arc::new(evaluate),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn required_roles(&self) -> &[String] {
        &self.required_roles
    }

    pub fn evaluate(&self, skeleton: &Skeleton, pose: &Pose) -> Result<f64, MetricError> {
        let value = (self.evaluate)(&RolePose::new(skeleton, pose)?)?;
        if !value.is_finite() {
            return Err(MetricError::NonFinite(self.name.clone()));
        }
        Ok(value)
    }
}

/// Mean and population std of a metric over a dataset, std clamped to `STD_EPSILON`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MetricStats {
    pub mean: f64,
    pub std: f64,
}

impl MetricStats {
    pub fn new(mean: f64, std: f64) -> Self {
        Self {
            mean,
            std: std.max(STD_EPSILON),
        }
    }

    pub fn standardize(&self, value: f64) -> f64 {
        (value - self.mean) / self.std.max(STD_EPSILON)
    }
}

/// Name-keyed metric registry. Iteration order is alphabetical.
#[derive(Debug, Clone, Default)]
pub struct MetricRegistry {
    metrics: BTreeMap<String, MetricDef>,
}

impl MetricRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn with_builtins() -> Self {
        let mut registry = Self::empty();
        for def in [
            MetricDef::new(SPINE_FLEXION, &[ROLE_NECK, ROLE_PELVIS], spine_flexion),
            MetricDef::new(
                SHOULDERS_OPENNESS,
                &[ROLE_SPINE1, ROLE_RSHOULDER, ROLE_LSHOULDER],
                shoulders_openness,
            ),
            MetricDef::new(LEGS_SPREAD, &[ROLE_PELVIS, ROLE_RKNEE, ROLE_LKNEE], legs_spread),
        ] {
            registry.register(def).expect("built-in names are unique");
        }
        registry
    }

    pub fn register(&mut self, def: MetricDef) -> Result<(), MetricError> {
        if self.metrics.contains_key(def.name()) {
            return Err(MetricError::Duplicate(def.name().to_string()));
        }
        self.metrics.insert(def.name().to_string(), def);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&MetricDef, MetricError> {
        self.metrics.get(name).ok_or_else(|| MetricError::Unknown {
            name: name.to_string(),
            available: self.names(),
        })
    }

    pub fn names(&self) -> Vec<String> {
        self.metrics.keys().cloned().collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &MetricDef> {
        self.metrics.values()
    }

    pub fn len(&self) -> usize {
        self.metrics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.metrics.is_empty()
    }

    pub fn evaluate(&self, name: &str, skeleton: &Skeleton, pose: &Pose) -> Result<f64, MetricError> {
        self.get(name)?.evaluate(skeleton, pose)
    }

    /// Statistics over every pose; any evaluation failure is propagated.
    pub fn metric_stats<'a, I>(&self, name: &str, skeleton: &Skeleton, poses: I) -> Result<MetricStats, MetricError>
    where
        I: IntoIterator<Item = &'a Pose>,
    {
        let def = self.get(name)?;
        let values = poses
            .into_iter()
            .map(|p| def.evaluate(skeleton, p))
            .collect::<Result<Vec<_>, _>>()?;
        if values.is_empty() {
            return Err(MetricError::EmptyDataset);
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Ok(MetricStats::new(mean, var.sqrt()))
    }
}
