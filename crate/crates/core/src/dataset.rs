//! JSON dataset document: skeleton, normalization stats and clips.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::skeleton::{AnimationClip, NormalizationStats, Pose, Skeleton, SkeletonError};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed dataset JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("clip `{id}` has {actual} joints, skeleton has {expected}")]
    JointMismatch { id: String, expected: usize, actual: usize },
    #[error("stats cover {actual} components, skeleton needs {expected}")]
    StatsMismatch { expected: usize, actual: usize },
    #[error("duplicate clip id `{0}`")]
    DuplicateClip(String),
    #[error(transparent)]
    Skeleton(#[from] SkeletonError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub skeleton: Skeleton,
    pub stats: NormalizationStats,
    pub clips: Vec<AnimationClip>,
}

#[derive(Serialize, Deserialize)]
struct ClipRecord {
    id: String,
    #[serde(with = "crate::format::sig9_f64")]
    frame_rate: f64,
    #[serde(with = "crate::format::sig9_frames")]
    frames: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct DatasetRecord {
    skeleton: Skeleton,
    stats: NormalizationStats,
    clips: Vec<ClipRecord>,
}

impl Dataset {
    pub fn new(
        skeleton: Skeleton,
        stats: NormalizationStats,
        clips: Vec<AnimationClip>,
    ) -> Result<Self, DatasetError> {
        let joints = skeleton.joint_count();
        if stats.dim() != joints * 3 {
            return Err(DatasetError::StatsMismatch {
                expected: joints * 3,
                actual: stats.dim(),
            });
        }
        let mut seen = std::collections::BTreeSet::new();
        for clip in &clips {
            if clip.joint_count() != joints {
                return Err(DatasetError::JointMismatch {
                    id: clip.id.clone(),
                    expected: joints,
                    actual: clip.joint_count(),
                });
            }
            if !seen.insert(clip.id.as_str()) {
                return Err(DatasetError::DuplicateClip(clip.id.clone()));
            }
        }
        Ok(Self { skeleton, stats, clips })
    }

    /// Builds a dataset whose stats are computed from its own clips.
    pub fn with_computed_stats(skeleton: Skeleton, clips: Vec<AnimationClip>) -> Result<Self, DatasetError> {
        let stats = NormalizationStats::from_clips(&clips)?;
        Self::new(skeleton, stats, clips)
    }

    pub fn clip(&self, id: &str) -> Option<&AnimationClip> {
        self.clips.iter().find(|c| c.id == id)
    }

    pub fn pose_count(&self) -> usize {
        self.clips.iter().map(AnimationClip::len).sum()
    }

    pub fn poses(&self) -> impl Iterator<Item = &Pose> {
        self.clips.iter().flat_map(|c| c.poses.iter())
    }

    pub fn to_json(&self) -> Result<String, DatasetError> {
        let record = DatasetRecord {
            skeleton: self.skeleton.clone(),
            stats: self.stats.clone(),
            clips: self
                .clips
                .iter()
                .map(|c| ClipRecord {
                    id: c.id.clone(),
                    frame_rate: c.frame_rate,
                    frames: c.poses.iter().map(Pose::flatten).collect(),
                })
                .collect(),
        };
        Ok(serde_json::to_string(&record)?)
    }

    pub fn from_json(text: &str) -> Result<Self, DatasetError> {
        let record: DatasetRecord = serde_json::from_str(text)?;
        let joints = record.skeleton.joint_count();
        let clips = record
            .clips
            .into_iter()
            .map(|c| {
                let poses = c
                    .frames
                    .iter()
                    .map(|f| {
                        Pose::from_flat(f).map_err(DatasetError::from).and_then(|p| {
                            if p.joint_count() == joints {
                                Ok(p)
                            } else {
                                Err(DatasetError::JointMismatch {
                                    id: c.id.clone(),
                                    expected: joints,
                                    actual: p.joint_count(),
                                })
                            }
                        })
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(AnimationClip::new(c.id, c.frame_rate, poses)?)
            })
            .collect::<Result<Vec<_>, DatasetError>>()?;
        Self::new(record.skeleton, record.stats, clips)
    }
}

pub fn write_dataset(
    clips: &[AnimationClip],
    skeleton: &Skeleton,
    stats: &NormalizationStats,
    path: impl AsRef<Path>,
) -> Result<(), DatasetError> {
    let dataset = Dataset::new(skeleton.clone(), stats.clone(), clips.to_vec())?;
    let path = path.as_ref();
    fs::write(path, dataset.to_json()?).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset, DatasetError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Dataset::from_json(&text)
}

/// A single clip as `{"id", "frame_rate", "frames"}`, the same layout used
/// inside dataset files.
pub fn clip_to_json(clip: &AnimationClip) -> Result<String, DatasetError> {
    Ok(serde_json::to_string(&ClipRecord {
        id: clip.id.clone(),
        frame_rate: clip.frame_rate,
        frames: clip.poses.iter().map(Pose::flatten).collect(),
    })?)
}

pub fn clip_from_json(text: &str, joints: usize) -> Result<AnimationClip, DatasetError> {
    let record: ClipRecord = serde_json::from_str(text)?;
    let poses = record
        .frames
        .iter()
        .map(|f| Pose::unflatten(f, joints))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(AnimationClip::new(record.id, record.frame_rate, poses)?)
}

pub fn write_clip(clip: &AnimationClip, path: impl AsRef<Path>) -> Result<(), DatasetError> {
    let path = path.as_ref();
    fs::write(path, clip_to_json(clip)?).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })
}
