//! Pose metrics, a small dense-network engine, and latent-space motion editing.
//!
//! Poses are root-relative joint positions. A trained encoder/decoder maps
//! them to a 64-dimensional latent space where metric networks move a pose
//! toward a requested metric value. Clips are edited frame by frame with a
//! per-frame blend weight.

pub mod bvh;
pub mod cli;
pub mod dataset;
pub mod eval;
pub mod format;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod service;
pub mod skeleton;
pub mod synth;
