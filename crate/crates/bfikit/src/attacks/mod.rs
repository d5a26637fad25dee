//! The three inference methods.
//!
//! * [`windtalker`]: template matching against labeled per-digit feature
//!   windows, distance aggregated by minimum or mean.
//! * [`wink`]: training-free structure matching that scores all one million
//!   candidate PINs from keystroke-signature similarity plus inter-key
//!   travel times.
//! * [`model`]: a trainable digit classifier (1-D CNN into an embedding)
//!   with a switchable domain-adaptation objective.

pub mod model;
pub mod windtalker;
pub mod wink;

pub use model::{DaMethod, DigitClassifier, DomainDef, EpochStats, ModelConfig, TrainLog};
pub use windtalker::{Aggregation, TemplateBank};
pub use wink::{wink_rank, WinkRanking};

use thiserror::Error;

use crate::nn::NnError;
use crate::sim::SimError;

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("no training segments for digits {0:?}")]
    MissingClass(Vec<u8>),
    #[error("segment has {got} feature columns, templates have {want}")]
    ShapeMismatch { got: usize, want: usize },
    #[error("bad input: {0}")]
    BadInput(String),
    #[error("empty split: {0}")]
    EmptySplit(&'static str),
    #[error("domain labels required: {0}")]
    MissingDomainLabels(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Root-mean-square distance between two feature windows over their
/// center-aligned overlap.
///
/// Windows clipped at trace edges have different lengths; rows are aligned
/// on the keystroke row and the comparison covers rows both windows carry,
/// which always includes the keystroke itself.
pub fn aligned_rms_distance(
    a: &ndarray::Array2<f64>,
    a_center: usize,
    b: &ndarray::Array2<f64>,
    b_center: usize,
) -> Result<f64, AttackError> {
    let cols = a.dim().1;
    if b.dim().1 != cols {
        return Err(AttackError::ShapeMismatch {
            got: b.dim().1,
            want: cols,
        });
    }
    let back = a_center.min(b_center);
    let forward = (a.dim().0 - a_center).min(b.dim().0 - b_center);
    let rows = back + forward;
    let mut total = 0.0;
    for r in 0..rows {
        let ra = a.row(a_center - back + r);
        let rb = b.row(b_center - back + r);
        total += ra
            .iter()
            .zip(rb.iter())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>();
    }
    Ok((total / (rows * cols) as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn identical_windows_have_zero_distance() {
        let w = Array2::from_shape_fn((5, 3), |(r, c)| (r * 3 + c) as f64);
        assert_eq!(aligned_rms_distance(&w, 2, &w, 2).unwrap(), 0.0);
    }

    #[test]
    fn clipped_windows_compare_over_the_overlap() {
        // Full window vs one missing its head; both center on the same
        // pattern, so only shared rows count.
        let full = Array2::from_shape_fn((5, 2), |(r, _)| r as f64);
        let clipped = Array2::from_shape_fn((3, 2), |(r, _)| (r + 2) as f64);
        // Aligned at centers 2 and 0: overlap rows are full[2..5] = clipped.
        assert_eq!(aligned_rms_distance(&full, 2, &clipped, 0).unwrap(), 0.0);
        // Shift the clipped content and the distance becomes the constant
        // offset.
        let shifted = clipped.mapv(|v| v + 3.0);
        let d = aligned_rms_distance(&full, 2, &shifted, 0).unwrap();
        assert!((d - 3.0).abs() < 1e-12);
    }

    #[test]
    fn column_count_mismatch_is_rejected() {
        let a = Array2::zeros((3, 4));
        let b = Array2::zeros((3, 5));
        assert!(matches!(
            aligned_rms_distance(&a, 1, &b, 1),
            Err(AttackError::ShapeMismatch { got: 5, want: 4 })
        ));
    }
}
