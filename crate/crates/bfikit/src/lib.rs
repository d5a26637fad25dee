//! Research toolkit for studying how much keystroke information leaks through
//! the compressed beamforming feedback that Wi-Fi devices transmit in clear
//! text.
//!
//! The crate covers the full experimental loop:
//!
//! * [`codec`]: conversion between quantized Givens-rotation angle reports
//!   and complex steering matrices, plus the bit-exact payload layout.
//! * [`sim`]: a desk-scale ray simulator that renders PIN-entry hand motion
//!   into per-sample feedback reports.
//! * [`preprocess`]: timing manipulation, reference selection, normalization
//!   and keystroke segmentation.
//! * [`features`]: the frozen 134-column feature contract shared by all
//!   attack implementations.
//! * [`nn`]: a small self-contained tensor autograd engine with the layers
//!   and losses the learned attack needs (gradient reversal, MMD, supervised
//!   contrastive, uncertainty-weighted multi-task).
//! * [`attacks`]: template, timing-geometry and learned digit classifiers.
//! * [`eval`]: leave-out split construction, Top-100 PIN ranking and the
//!   evaluation/ablation drivers.
//! * [`store`]: on-disk trace and dataset layout, manifests, ingestion.

pub mod attacks;
pub mod codec;
pub mod eval;
pub mod features;
pub mod nn;
pub mod preprocess;
pub mod sim;
pub mod store;
pub mod trace;
pub mod verify;
