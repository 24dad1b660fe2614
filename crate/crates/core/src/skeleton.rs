//! Skeleton, pose and clip data model.
//!
//! Poses are joint positions in meters, y up, expressed relative to the
//! projection of the pelvis on the floor plane (y = 0).

use std::collections::BTreeMap;

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;

/// Lower bound applied to every standard deviation entry.
pub const STD_EPSILON: f64 = 1e-8;

pub const ROLE_PELVIS: &str = "pelvis";
pub const ROLE_NECK: &str = "neck";
pub const ROLE_SPINE1: &str = "spine1";
pub const ROLE_LSHOULDER: &str = "lshoulder";
pub const ROLE_RSHOULDER: &str = "rshoulder";
pub const ROLE_LKNEE: &str = "lknee";
pub const ROLE_RKNEE: &str = "rknee";

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SkeletonError {
    #[error("skeleton has no joints")]
    Empty,
    #[error("joint {joint} has parent {parent}, parents must precede their children")]
    ParentOrder { joint: usize, parent: usize },
    #[error("skeleton must have exactly one root joint, found {0}")]
    RootCount(usize),
    #[error("role `{role}` maps to joint {index}, but the skeleton has {joints} joints")]
    RoleOutOfRange { role: String, index: usize, joints: usize },
    #[error("role `{0}` is not mapped to a joint")]
    MissingRole(String),
    #[error("expected {expected} joints, got {actual}")]
    JointCount { expected: usize, actual: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("vector length {actual} does not match expected {expected}")]
    Length { expected: usize, actual: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("clip `{0}` has no frames")]
    EmptyClip(String),
    #[error("clip `{id}` has invalid frame rate {rate}")]
    FrameRate { id: String, rate: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Joint {
    pub name: String,
    pub parent: Option<usize>,
    #[serde(with = "crate::format::sig9_array3")]
    pub offset: [f64; 3],
}

impl Joint {
    pub fn new(name: impl Into<String>, parent: Option<usize>, offset: [f64; 3]) -> Self {
        Self {
            name: name.into(),
            parent,
            offset,
        }
    }

    pub fn offset_vec(&self) -> Vec3 {
        Vec3::from(self.offset)
    }
}

/// Topologically ordered joint hierarchy plus role names used by metrics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Skeleton {
    joints: Vec<Joint>,
    roles: BTreeMap<String, usize>,
}

#[derive(Deserialize)]
struct RawSkeleton {
    joints: Vec<Joint>,
    #[serde(default)]
    roles: BTreeMap<String, usize>,
}

impl<'de> Deserialize<'de> for Skeleton {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = RawSkeleton::deserialize(d)?;
        Skeleton::new(raw.joints, raw.roles).map_err(serde::de::Error::custom)
    }
}

impl Skeleton {
    pub fn new(joints: Vec<Joint>, roles: BTreeMap<String, usize>) -> Result<Self, SkeletonError> {
        if joints.is_empty() {
            return Err(SkeletonError::Empty);
        }
        let mut roots = 0;
        for (i, joint) in joints.iter().enumerate() {
            match joint.parent {
                None => roots += 1,
                Some(p) if p >= i => {
                    return Err(SkeletonError::ParentOrder { joint: i, parent: p })
                }
                Some(_) => {}
            }
            if joint.offset.iter().any(|c| !c.is_finite()) {
                return Err(SkeletonError::NonFinite("joint offset"));
            }
        }
        if roots != 1 {
            return Err(SkeletonError::RootCount(roots));
        }
        for (role, &index) in &roles {
            if index >= joints.len() {
                return Err(SkeletonError::RoleOutOfRange {
                    role: role.clone(),
                    index,
                    joints: joints.len(),
                });
            }
        }
        Ok(Self { joints, roles })
    }

    /// The 21-joint humanoid used by the synthetic data generator.
    ///
    /// Faces +z with its left side on +x. Root offset is zero; the pelvis
    /// height comes from the root translation.
    pub fn default_humanoid() -> Self {
        let spec: [(&str, Option<usize>, [f64; 3]); 21] = [
            ("Hips", None, [0.0, 0.0, 0.0]),
            ("Spine", Some(0), [0.0, 0.10, 0.0]),
            ("Spine1", Some(1), [0.0, 0.15, 0.0]),
            ("Spine2", Some(2), [0.0, 0.15, 0.0]),
            ("Neck", Some(3), [0.0, 0.15, 0.0]),
            ("Head", Some(4), [0.0, 0.12, 0.0]),
            ("LeftShoulder", Some(3), [0.04, 0.10, 0.0]),
            ("LeftArm", Some(6), [0.15, 0.0, 0.0]),
            ("LeftForeArm", Some(7), [0.28, 0.0, 0.0]),
            ("LeftHand", Some(8), [0.25, 0.0, 0.0]),
            ("RightShoulder", Some(3), [-0.04, 0.10, 0.0]),
            ("RightArm", Some(10), [-0.15, 0.0, 0.0]),
            ("RightForeArm", Some(11), [-0.28, 0.0, 0.0]),
            ("RightHand", Some(12), [-0.25, 0.0, 0.0]),
            ("LeftUpLeg", Some(0), [0.10, -0.02, 0.0]),
            ("LeftLeg", Some(14), [0.0, -0.42, 0.0]),
            ("LeftFoot", Some(15), [0.0, -0.42, 0.0]),
            ("LeftToeBase", Some(16), [0.0, -0.06, 0.13]),
            ("RightUpLeg", Some(0), [-0.10, -0.02, 0.0]),
            ("RightLeg", Some(18), [0.0, -0.42, 0.0]),
            ("RightFoot", Some(19), [0.0, -0.42, 0.0]),
        ];
        let joints: Vec<Joint> = spec
            .iter()
            .map(|(name, parent, offset)| Joint::new(*name, *parent, *offset))
            .collect();
        let roles = RoleMap::default().resolve(&joints);
        Self::new(joints, roles).expect("built-in skeleton is valid")
    }

    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    pub fn joint_count(&self) -> usize {
        self.joints.len()
    }

    pub fn roles(&self) -> &BTreeMap<String, usize> {
        &self.roles
    }

    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.joints.iter().position(|j| j.name == name)
    }

    pub fn role_index(&self, role: &str) -> Result<usize, SkeletonError> {
        self.roles
            .get(role)
            .copied()
            .ok_or_else(|| SkeletonError::MissingRole(role.to_string()))
    }

    pub fn with_roles(mut self, roles: BTreeMap<String, usize>) -> Result<Self, SkeletonError> {
        self.roles = roles;
        Self::new(self.joints, self.roles)
    }
}

/// Maps role names to candidate joint names.
///
/// Matching ignores ASCII case and any namespace prefix ending in `:`
/// (as in `mixamorig:Hips`). The first candidate present wins.
#[derive(Debug, Clone, PartialEq)]
pub struct RoleMap {
    candidates: BTreeMap<String, Vec<String>>,
}

impl Default for RoleMap {
    fn default() -> Self {
        let table: [(&str, &[&str]); 7] = [
            (ROLE_PELVIS, &["Hips", "Pelvis", "Hip", "Root"]),
            (ROLE_NECK, &["Neck", "Neck1", "LowerNeck"]),
            (ROLE_SPINE1, &["Spine1", "Chest", "Spine2", "Spine"]),
            (ROLE_LSHOULDER, &["LeftArm", "LeftUpArm", "LeftUpperArm", "LeftShoulder"]),
            (ROLE_RSHOULDER, &["RightArm", "RightUpArm", "RightUpperArm", "RightShoulder"]),
            (ROLE_LKNEE, &["LeftLeg", "LeftKnee", "LeftLowLeg", "LeftShin"]),
            (ROLE_RKNEE, &["RightLeg", "RightKnee", "RightLowLeg", "RightShin"]),
        ];
        Self {
            candidates: table
                .iter()
                .map(|(role, names)| {
                    (role.to_string(), names.iter().map(|n| n.to_string()).collect())
                })
                .collect(),
        }
    }
}

fn bare_name(name: &str) -> &str {
    name.rsplit(':').next().unwrap_or(name)
}

impl RoleMap {
    /// Replaces candidates with exact joint names, e.g. from an override file
    /// of the form `{"pelvis": "root", "neck": "neck_01"}`.
    pub fn with_overrides(mut self, overrides: &BTreeMap<String, String>) -> Self {
        for (role, joint) in overrides {
            self.candidates.insert(role.clone(), vec![joint.clone()]);
        }
        self
    }

    pub fn resolve(&self, joints: &[Joint]) -> BTreeMap<String, usize> {
        let mut roles = BTreeMap::new();
        for (role, names) in &self.candidates {
            let found = names.iter().find_map(|candidate| {
                joints
                    .iter()
                    .position(|j| bare_name(&j.name).eq_ignore_ascii_case(bare_name(candidate)))
            });
            if let Some(index) = found {
                roles.insert(role.clone(), index);
            }
        }
        roles
    }
}

/// World-space joint positions from local rotations and a root translation.
///
/// Each joint sits at its parent's position plus the parent's world rotation
/// applied to its offset. The root sits at `root_translation + offset`.
pub fn forward_kinematics(
    skeleton: &Skeleton,
    root_translation: Vec3,
    rotations: &[UnitQuaternion<f64>],
) -> Result<Vec<Vec3>, SkeletonError> {
    let joints = skeleton.joints();
    if rotations.len() != joints.len() {
        return Err(SkeletonError::JointCount {
            expected: joints.len(),
            actual: rotations.len(),
        });
    }
    if rotations.iter().any(|q| q.coords.iter().any(|c| !c.is_finite())) {
        return Err(SkeletonError::NonFinite("rotation"));
    }
    if root_translation.iter().any(|c| !c.is_finite()) {
        return Err(SkeletonError::NonFinite("root translation"));
    }
    let mut world_rot: Vec<UnitQuaternion<f64>> = Vec::with_capacity(joints.len());
    let mut world_pos: Vec<Vec3> = Vec::with_capacity(joints.len());
    for (joint, local) in joints.iter().zip(rotations) {
        match joint.parent {
            None => {
                world_pos.push(root_translation + joint.offset_vec());
                world_rot.push(*local);
            }
            Some(p) => {
                world_pos.push(world_pos[p] + world_rot[p] * joint.offset_vec());
                world_rot.push(world_rot[p] * local);
            }
        }
    }
    Ok(world_pos)
}

/// Joint positions of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose {
    positions: Vec<Vec3>,
}

impl Pose {
    pub fn new(positions: Vec<Vec3>) -> Result<Self, SkeletonError> {
        if positions.iter().any(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(SkeletonError::NonFinite("pose"));
        }
        Ok(Self { positions })
    }

    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    pub fn joint_count(&self) -> usize {
        self.positions.len()
    }

    pub fn joint(&self, index: usize) -> Vec3 {
        self.positions[index]
    }

    /// Joint-major `x, y, z` layout.
    pub fn flatten(&self) -> Vec<f64> {
        self.positions.iter().flat_map(|p| [p.x, p.y, p.z]).collect()
    }

    pub fn unflatten(values: &[f64], joints: usize) -> Result<Self, SkeletonError> {
        if values.len() != joints * 3 {
            return Err(SkeletonError::Length {
                expected: joints * 3,
                actual: values.len(),
            });
        }
        Self::new(
            values
                .chunks_exact(3)
                .map(|c| Vec3::new(c[0], c[1], c[2]))
                .collect(),
        )
    }

    /// Same as `unflatten` but only requires a length divisible by three.
    pub fn from_flat(values: &[f64]) -> Result<Self, SkeletonError> {
        if values.len() % 3 != 0 || values.is_empty() {
            return Err(SkeletonError::Length {
                expected: values.len().div_ceil(3).max(1) * 3,
                actual: values.len(),
            });
        }
        Self::unflatten(values, values.len() / 3)
    }

    pub fn translated(&self, delta: Vec3) -> Self {
        Self {
            positions: self.positions.iter().map(|p| p + delta).collect(),
        }
    }

    pub fn rotated(&self, rotation: &UnitQuaternion<f64>) -> Self {
        Self {
            positions: self.positions.iter().map(|p| rotation * p).collect(),
        }
    }
}

/// Subtracts the pelvis floor projection `(pelvis.x, 0, pelvis.z)` from every joint.
pub fn to_root_relative(world: &[Vec3], pelvis: usize) -> Result<Pose, SkeletonError> {
    if pelvis >= world.len() {
        return Err(SkeletonError::RoleOutOfRange {
            role: ROLE_PELVIS.to_string(),
            index: pelvis,
            joints: world.len(),
        });
    }
    if world.iter().any(|p| p.iter().any(|c| !c.is_finite())) {
        return Err(SkeletonError::NonFinite("world positions"));
    }
    let root = world[pelvis];
    let shift = Vec3::new(root.x, 0.0, root.z);
    let mut positions: Vec<Vec3> = world.iter().map(|p| p - shift).collect();
    positions[pelvis].x = 0.0;
    positions[pelvis].z = 0.0;
    Pose::new(positions)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnimationClip {
    pub id: String,
    pub frame_rate: f64,
    pub poses: Vec<Pose>,
}

impl AnimationClip {
    pub fn new(id: impl Into<String>, frame_rate: f64, poses: Vec<Pose>) -> Result<Self, SkeletonError> {
        let id = id.into();
        if !(frame_rate.is_finite() && frame_rate > 0.0) {
            return Err(SkeletonError::FrameRate { id, rate: frame_rate });
        }
        let Some(first) = poses.first() else {
            return Err(SkeletonError::EmptyClip(id));
        };
        let joints = first.joint_count();
        if let Some(bad) = poses.iter().find(|p| p.joint_count() != joints) {
            return Err(SkeletonError::JointCount {
                expected: joints,
                actual: bad.joint_count(),
            });
        }
        Ok(Self { id, frame_rate, poses })
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn joint_count(&self) -> usize {
        self.poses[0].joint_count()
    }
}

/// Per-component mean and population standard deviation of flattened poses.
///
/// Stored in single precision, the precision networks consume.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormalizationStats {
    #[serde(with = "crate::format::sig9_vec_f32")]
    mean: Vec<f32>,
    #[serde(with = "crate::format::sig9_vec_f32")]
    std: Vec<f32>,
}

#[derive(Deserialize)]
struct RawStats {
    #[serde(with = "crate::format::sig9_vec_f32")]
    mean: Vec<f32>,
    #[serde(with = "crate::format::sig9_vec_f32")]
    std: Vec<f32>,
}

impl<'de> Deserialize<'de> for NormalizationStats {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = RawStats::deserialize(d)?;
        NormalizationStats::new(raw.mean, raw.std).map_err(serde::de::Error::custom)
    }
}

impl NormalizationStats {
    pub fn new(mean: Vec<f32>, std: Vec<f32>) -> Result<Self, SkeletonError> {
        if mean.len() != std.len() {
            return Err(SkeletonError::Length {
                expected: mean.len(),
                actual: std.len(),
            });
        }
        if mean.iter().chain(&std).any(|v| !v.is_finite()) {
            return Err(SkeletonError::NonFinite("normalization stats"));
        }
        let std = std.into_iter().map(|s| s.max(STD_EPSILON as f32)).collect();
        Ok(Self { mean, std })
    }

    /// Population statistics over flattened poses; std clamped to `STD_EPSILON`.
    pub fn compute<'a, I>(dataset: I) -> Result<Self, SkeletonError>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut iter = dataset.into_iter();
        let first = iter.next().ok_or(SkeletonError::EmptyDataset)?;
        let dim = first.len();
        let mut count = 1usize;
        let mut sum: Vec<f64> = first.to_vec();
        let mut rows: Vec<&[f64]> = vec![first];
        for row in iter {
            if row.len() != dim {
                return Err(SkeletonError::Length {
                    expected: dim,
                    actual: row.len(),
                });
            }
            for (s, v) in sum.iter_mut().zip(row) {
                *s += v;
            }
            rows.push(row);
            count += 1;
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
        let mut var = vec![0.0f64; dim];
        for row in &rows {
            for ((acc, v), m) in var.iter_mut().zip(row.iter()).zip(&mean) {
                *acc += (v - m) * (v - m);
            }
        }
        let std = var
            .iter()
            .map(|v| (v / count as f64).sqrt().max(STD_EPSILON) as f32)
            .collect();
        Self::new(mean.iter().map(|&m| m as f32).collect(), std)
    }

    pub fn from_clips(clips: &[AnimationClip]) -> Result<Self, SkeletonError> {
        let flat: Vec<Vec<f64>> = clips
            .iter()
            .flat_map(|c| c.poses.iter().map(Pose::flatten))
            .collect();
        Self::compute(flat.iter().map(Vec::as_slice))
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f32] {
        &self.mean
    }

    pub fn std(&self) -> &[f32] {
        &self.std
    }

    fn check(&self, len: usize) -> Result<(), SkeletonError> {
        if len != self.dim() {
            return Err(SkeletonError::Length {
                expected: self.dim(),
                actual: len,
            });
        }
        Ok(())
    }

    pub fn normalize(&self, x: &[f32]) -> Result<Vec<f32>, SkeletonError> {
        self.check(x.len())?;
        Ok(x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect())
    }

    pub fn denormalize(&self, x: &[f32]) -> Result<Vec<f32>, SkeletonError> {
        self.check(x.len())?;
        Ok(x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| v * s + m)
            .collect())
    }

    /// Flattens and normalizes a pose.
    pub fn normalize_pose(&self, pose: &Pose) -> Result<Vec<f32>, SkeletonError> {
        let flat: Vec<f32> = pose.flatten().iter().map(|&v| v as f32).collect();
        self.normalize(&flat)
    }

    pub fn denormalize_pose(&self, x: &[f32]) -> Result<Pose, SkeletonError> {
        let flat: Vec<f64> = self.denormalize(x)?.iter().map(|&v| v as f64).collect();
        Pose::from_flat(&flat)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;
    use std::f64::consts::FRAC_PI_2;

    fn chain() -> Skeleton {
        Skeleton::new(
            vec![
                Joint::new("root", None, [0.0, 0.0, 0.0]),
                Joint::new("tip", Some(0), [0.0, 1.0, 0.0]),
            ],
            BTreeMap::new(),
        )
        .unwrap()
    }

    #[test]
    fn fk_identity_chain() {
        let pos = forward_kinematics(&chain(), Vec3::zeros(), &[UnitQuaternion::identity(); 2]).unwrap();
        assert_eq!(pos, vec![Vec3::zeros(), Vec3::new(0.0, 1.0, 0.0)]);
    }

    #[test]
    fn fk_root_rotated_about_z() {
        let rz = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), FRAC_PI_2);
        let pos = forward_kinematics(&chain(), Vec3::zeros(), &[rz, UnitQuaternion::identity()]).unwrap();
        assert!((pos[1] - Vec3::new(-1.0, 0.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn fk_rejects_wrong_rotation_count() {
        let err = forward_kinematics(&chain(), Vec3::zeros(), &[UnitQuaternion::identity()]);
        assert_eq!(err, Err(SkeletonError::JointCount { expected: 2, actual: 1 }));
    }

    #[test]
    fn fk_rejects_nan_rotation() {
        let bad = UnitQuaternion::new_unchecked(nalgebra::Quaternion::new(f64::NAN, 0.0, 0.0, 0.0));
        let err = forward_kinematics(&chain(), Vec3::zeros(), &[bad, UnitQuaternion::identity()]);
        assert!(matches!(err, Err(SkeletonError::NonFinite(_))));
    }

    #[test]
    fn skeleton_validation() {
        let out_of_order = Skeleton::new(
            vec![Joint::new("a", Some(1), [0.0; 3]), Joint::new("b", None, [0.0; 3])],
            BTreeMap::new(),
        );
        assert!(matches!(out_of_order, Err(SkeletonError::ParentOrder { .. })));
        let two_roots = Skeleton::new(
            vec![Joint::new("a", None, [0.0; 3]), Joint::new("b", None, [0.0; 3])],
            BTreeMap::new(),
        );
        assert_eq!(two_roots, Err(SkeletonError::RootCount(2)));
        let bad_role = Skeleton::new(
            vec![Joint::new("a", None, [0.0; 3])],
            BTreeMap::from([("pelvis".to_string(), 3)]),
        );
        assert!(matches!(bad_role, Err(SkeletonError::RoleOutOfRange { .. })));
    }

    #[test]
    fn default_humanoid_has_all_roles() {
        let sk = Skeleton::default_humanoid();
        assert_eq!(sk.joint_count(), 21);
        for role in [
            ROLE_PELVIS,
            ROLE_NECK,
            ROLE_SPINE1,
            ROLE_LSHOULDER,
            ROLE_RSHOULDER,
            ROLE_LKNEE,
            ROLE_RKNEE,
        ] {
            assert!(sk.role_index(role).is_ok(), "{role}");
        }
        assert_eq!(sk.role_index(ROLE_LSHOULDER).unwrap(), sk.joint_index("LeftArm").unwrap());
    }

    #[test]
    fn role_map_ignores_namespace_and_case() {
        let joints = vec![
            Joint::new("mixamorig:hips", None, [0.0; 3]),
            Joint::new("mixamorig:Neck", Some(0), [0.0; 3]),
        ];
        let roles = RoleMap::default().resolve(&joints);
        assert_eq!(roles.get(ROLE_PELVIS), Some(&0));
        assert_eq!(roles.get(ROLE_NECK), Some(&1));
        let overridden = RoleMap::default()
            .with_overrides(&BTreeMap::from([("pelvis".to_string(), "mixamorig:Neck".to_string())]))
            .resolve(&joints);
        assert_eq!(overridden.get(ROLE_PELVIS), Some(&1));
    }

    #[test]
    fn root_relative_examples() {
        let pose = to_root_relative(&[Vec3::new(2.0, 0.9, 3.0), Vec3::new(2.0, 1.7, 3.0)], 0).unwrap();
        assert_eq!(pose.positions(), &[Vec3::new(0.0, 0.9, 0.0), Vec3::new(0.0, 1.7, 0.0)]);
        let already = [Vec3::new(0.0, 1.0, 0.0), Vec3::new(0.3, 1.2, -0.1)];
        assert_eq!(to_root_relative(&already, 0).unwrap().positions(), &already);
        assert!(to_root_relative(&[Vec3::new(f64::NAN, 0.0, 0.0)], 0).is_err());
    }

    #[test]
    fn flatten_examples() {
        let pose = Pose::new(vec![Vec3::new(1.0, 2.0, 3.0), Vec3::new(4.0, 5.0, 6.0)]).unwrap();
        assert_eq!(pose.flatten(), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(Pose::unflatten(&pose.flatten(), 2).unwrap(), pose);
        assert!(Pose::unflatten(&[0.0; 7], 2).is_err());
        assert!(Pose::from_flat(&[0.0; 7]).is_err());
    }

    #[test]
    fn stats_examples() {
        let single = [1.0, -2.0, 3.5];
        let stats = NormalizationStats::compute([single.as_slice()]).unwrap();
        assert_eq!(stats.mean(), &[1.0, -2.0, 3.5]);
        assert!(stats.std().iter().all(|&s| s == STD_EPSILON as f32));

        let a = [0.0];
        let b = [2.0];
        let stats = NormalizationStats::compute([a.as_slice(), b.as_slice()]).unwrap();
        assert_eq!(stats.mean(), &[1.0]);
        assert_eq!(stats.std(), &[1.0]);

        let empty: [&[f64]; 0] = [];
        assert_eq!(NormalizationStats::compute(empty), Err(SkeletonError::EmptyDataset));
    }

    #[test]
    fn normalize_examples() {
        let stats = NormalizationStats::new(vec![1.0, 2.0], vec![0.5, 4.0]).unwrap();
        assert_eq!(stats.normalize(&[1.0, 2.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(stats.normalize(&[1.5, 6.0]).unwrap(), vec![1.0, 1.0]);
        assert!(stats.normalize(&[1.0]).is_err());
        assert!(stats.denormalize(&[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn clip_rejects_mixed_joint_counts() {
        let a = Pose::new(vec![Vec3::zeros()]).unwrap();
        let b = Pose::new(vec![Vec3::zeros(); 2]).unwrap();
        assert!(AnimationClip::new("x", 30.0, vec![a.clone(), b]).is_err());
        assert!(AnimationClip::new("x", 0.0, vec![a]).is_err());
        assert!(AnimationClip::new("x", 30.0, vec![]).is_err());
    }
}
