//! Minimal reverse-mode differentiation engine.
//!
//! The learned attack needs a narrow set of blocks: dense and 1-D
//! convolution layers, ReLU, frozen-mask dropout, temporal mean pooling,
//! softmax cross-entropy, a gradient-reversal pass-through, the MMD and
//! supervised-contrastive alignment losses, and an uncertainty-weighted
//! multi-task combination, all trained with a decoupled-weight-decay
//! adaptive-moment optimizer. Everything here is 64-bit and
//! single-threaded so each gradient can be confirmed against central
//! finite differences ([`check_gradients`]) and training re-runs are
//! bit-identical.
//!
//! The [`Graph`] is a per-step tape: parameters live in [`Parameters`]
//! between steps, get copied in as leaves, and their gradients are read
//! back out after [`Graph::backward`].

mod checkpoint;
mod gradcheck;
mod graph;
mod params;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, CHECKPOINT_VERSION};
pub use gradcheck::{check_gradients, LeafSpec};
pub use graph::{Graph, Tensor};
pub use params::{AdamW, ParamEntry, ParamId, Parameters, UncertaintyWeights};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("class label {label} outside 0..{classes}")]
    BadLabel { label: usize, classes: usize },
    #[error("degenerate batch: {0}")]
    DegenerateBatch(String),
    #[error("non-finite values produced by {0}")]
    NonFinite(&'static str),
    #[error("expected a scalar output, got {0} elements")]
    NotScalar(usize),
    #[error("gradient reversal coefficient {0} must be non-negative")]
    BadLambda(f64),
    #[error("kernel width {0} must be odd for centered padding")]
    EvenKernel(usize),
    #[error("bad kernel bandwidths: {0}")]
    BadBandwidths(String),
    #[error("temperature {0} must be positive")]
    BadTemperature(f64),
    #[error("corrupt checkpoint: {0}")]
    BadCheckpoint(String),
    #[error("duplicate parameter name {0}")]
    DuplicateParam(String),
}

/// Annealing schedule for the gradient-reversal coefficient.
///
/// `lambda(p) = 2 / (1 + e^(-10 p)) - 1` rises smoothly from 0 at the start
/// of training to just under 1 at the end, so the domain discriminator
/// settles before its reversed gradient starts reshaping the features.
pub fn grl_schedule(progress: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&progress));
    2.0 / (1.0 + (-10.0 * progress).exp()) - 1.0
}

/// Numerically stable softmax of one logit row.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Softmin over distances: `softmax(-d / temperature)`.
pub fn softmin(distances: &[f64], temperature: f64) -> Vec<f64> {
    let scaled: Vec<f64> = distances.iter().map(|d| -d / temperature).collect();
    softmax(&scaled)
}
