//! Minimal deterministic dense-network engine.
//!
//! Everything is single precision. Batched kernels only parallelize over
//! independent output elements, so results are bit-identical for any
//! rayon thread count.

mod adam;
mod kernels;
mod mlp;
mod rng;
mod weights;

pub use adam::{AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON};
pub use mlp::{mse_loss, mse_loss_batch, Activation, Batch, Dense, ForwardCache, Gradients, LayerGradient, Mlp};
pub use rng::SeededRng;
pub use weights::{load_weights, save_weights, weights_from_bytes, weights_to_bytes, WEIGHTS_VERSION};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("network needs at least one layer")]
    NoLayers,
    #[error("layer sizes must be at least 1, got {0:?}")]
    InvalidSizes(Vec<usize>),
    #[error("expected {expected} activations, got {actual}")]
    ActivationCount { expected: usize, actual: usize },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("gradient shapes do not match the network")]
    ShapeMismatch,
    #[error("weight file: {0}")]
    Format(String),
    #[error("weight file version {found}, expected {expected}")]
    Version { found: u8, expected: u8 },
    #[error("i/o error: {0}")]
    Io(String),
}
