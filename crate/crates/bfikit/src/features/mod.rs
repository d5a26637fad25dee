//! The 134-column feature contract.
//!
//! Every sample of a trace is reduced to 134 reals grouped into 17 classes.
//! Class order, widths and column offsets are frozen: they form the on-disk
//! layout and the model input contract. Features draw from three views of
//! the trace: the dequantized angle table stream, the reconstructed
//! steering matrices, and their reference-normalized form.
//!
//! Channels are (tx, stream) pairs in tx-major order. Phase-based classes
//! carry 6 channels instead of 8 because the two last-row channels are real
//! by the codec's phase convention.

mod grassmann;
mod stats;

pub use grassmann::{grassmann_distance, orthonormalize_columns, SUBSPACE_TOL};
pub use stats::{
    band_magnitudes, pca_first_component, select_by_variance, unwrap_columns, unwrap_phase,
};

use nalgebra::DMatrix;
use ndarray::{s, Array2, Array3, Array4, Axis};
use num_complex::Complex64;
use thiserror::Error;

use crate::codec::{angle_pattern, dequantize, AngleReport, CodecError};
use crate::preprocess::{normalize, NormalizeMode, PreprocessError};
use crate::trace::PinTrace;

/// Width of one feature frame.
pub const N_FEATURES: usize = 134;

/// Spatial channels: (tx, stream) in tx-major order.
pub const CHANNEL_MAP: [(usize, usize); 8] = [
    (0, 0),
    (0, 1),
    (1, 0),
    (1, 1),
    (2, 0),
    (2, 1),
    (3, 0),
    (3, 1),
];

/// Channels with meaningful phase (the last transmit row is real).
pub const N_PHASE_CHANNELS: usize = 6;

/// Subcarriers pooled by the variance-selected classes.
pub const VARIANCE_POOL: usize = 5;

/// Short-time spectrum length for the band-magnitude class.
pub const DFS_WINDOW: usize = 16;

/// TX antenna pairs for the steering-phase class, lexicographic.
pub const TX_PAIRS: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

/// One contiguous block of feature columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureClass {
    pub name: &'static str,
    pub start: usize,
    pub len: usize,
}

impl FeatureClass {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.len
    }
}

const NAMP: usize = 0;
const NPHS: usize = 8;
const NANG: usize = 14;
const ED0: usize = 24;
const EDR: usize = 32;
const GR: usize = 40;
const G: usize = 43;
const DFS: usize = 46;
const MRC: usize = 62;
const HAMP: usize = 70;
const HPHS: usize = 78;
const LAMP: usize = 84;
const LPHS: usize = 92;
const PCA_ANG: usize = 98;
const PCA_AMP: usize = 108;
const PCA_PHS: usize = 116;
const STEER: usize = 122;

/// The frozen catalogue: 17 classes covering columns 0..134.
pub const CLASSES: [FeatureClass; 17] = [
    FeatureClass { name: "nAmp", start: NAMP, len: 8 },
    FeatureClass { name: "nPhs", start: NPHS, len: 6 },
    FeatureClass { name: "nAng", start: NANG, len: 10 },
    FeatureClass { name: "ed0", start: ED0, len: 8 },
    FeatureClass { name: "edR", start: EDR, len: 8 },
    FeatureClass { name: "gR", start: GR, len: 3 },
    FeatureClass { name: "g", start: G, len: 3 },
    FeatureClass { name: "dfs", start: DFS, len: 16 },
    FeatureClass { name: "mrc", start: MRC, len: 8 },
    FeatureClass { name: "hAmp", start: HAMP, len: 8 },
    FeatureClass { name: "hPhs", start: HPHS, len: 6 },
    FeatureClass { name: "lAmp", start: LAMP, len: 8 },
    FeatureClass { name: "lPhs", start: LPHS, len: 6 },
    FeatureClass { name: "pcaAng", start: PCA_ANG, len: 10 },
    FeatureClass { name: "pcaAmp", start: PCA_AMP, len: 8 },
    FeatureClass { name: "pcaPhs", start: PCA_PHS, len: 6 },
    FeatureClass { name: "steer", start: STEER, len: 12 },
];

/// Column range of a class by name.
pub fn class_range(name: &str) -> Option<std::ops::Range<usize>> {
    CLASSES.iter().find(|c| c.name == name).map(|c| c.range())
}

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("inconsistent input shapes: {0}")]
    ShapeMismatch(String),
    #[error("reference index {index} outside 0..{len}")]
    BadReference { index: usize, len: usize },
    #[error("{side} operand deviates from orthonormal columns by {deviation:.3e}")]
    NonOrthonormal { side: &'static str, deviation: f64 },
    #[error("need at least {want} subcarriers for variance pooling, got {got}")]
    TooFewSubcarriers { got: usize, want: usize },
    #[error("non-finite feature at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
}

/// Per-sample feature rows for one trace.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSeries {
    /// Shape `[t, 134]`.
    pub frames: Array2<f64>,
    pub ref_index: usize,
    pub channel_map: [(usize, usize); 8],
}

impl FeatureSeries {
    /// Checks the frozen width and that every value is finite.
    pub fn validate(&self) -> Result<(), FeatureError> {
        if self.frames.dim().1 != N_FEATURES {
            return Err(FeatureError::ShapeMismatch(format!(
                "{} feature columns, expected {N_FEATURES}",
                self.frames.dim().1
            )));
        }
        for ((row, col), v) in self.frames.indexed_iter() {
            if !v.is_finite() {
                return Err(FeatureError::NonFinite { row, col });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.frames.dim().0
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn frame(&self, t: usize) -> ndarray::ArrayView1<'_, f64> {
        self.frames.row(t)
    }
}

/// Dequantizes a report stream into `[t, n_sub, n_angles]` radians.
pub fn angle_series(reports: &[AngleReport]) -> Result<Array3<f64>, FeatureError> {
    let first = reports
        .first()
        .ok_or_else(|| FeatureError::ShapeMismatch("empty report stream".into()))?;
    let config = first.config;
    let codebook = first.codebook;
    let pattern = angle_pattern(config.n_tx, config.n_stream)?;
    let mut out = Array3::zeros((reports.len(), config.n_sub, pattern.len()));
    for (t, report) in reports.iter().enumerate() {
        if report.config != config || report.codebook != codebook {
            return Err(FeatureError::ShapeMismatch(format!(
                "report {t} changes stream configuration mid-trace"
            )));
        }
        for (k, row) in report.angles().rows().into_iter().enumerate() {
            for (a, (&index, &kind)) in row.iter().zip(&pattern).enumerate() {
                out[(t, k, a)] = dequantize(index, kind, codebook)?;
            }
        }
    }
    Ok(out)
}

/// Full pipeline for one trace: dequantize angles, normalize matrices
/// against the reference, extract all 17 classes.
pub fn trace_features(
    trace: &PinTrace,
    ref_index: usize,
    mode: NormalizeMode,
) -> Result<FeatureSeries, FeatureError> {
    let v_hat = angle_series(&trace.reports)?;
    let v_norm = normalize(&trace.matrices, ref_index, mode)?;
    extract(&v_hat, &trace.matrices, &v_norm, ref_index)
}

/// Maps the three trace views onto the 134-column contract.
///
/// `v_hat` is the dequantized angle stream `[t, n_sub, 10]`, `v_tilde` the
/// reconstructed steering matrices `[t, n_sub, 4, 2]`, and `v_norm` their
/// reference-normalized form with the same shape.
pub fn extract(
    v_hat: &Array3<f64>,
    v_tilde: &Array4<Complex64>,
    v_norm: &Array4<Complex64>,
    ref_index: usize,
) -> Result<FeatureSeries, FeatureError> {
    let (t_len, n_sub, n_ang) = v_hat.dim();
    if n_ang != 10 || v_tilde.dim() != (t_len, n_sub, 4, 2) || v_norm.dim() != v_tilde.dim() {
        return Err(FeatureError::ShapeMismatch(format!(
            "angles {:?}, matrices {:?}, normalized {:?}",
            v_hat.dim(),
            v_tilde.dim(),
            v_norm.dim()
        )));
    }
    if ref_index >= t_len {
        return Err(FeatureError::BadReference {
            index: ref_index,
            len: t_len,
        });
    }
    if n_sub < VARIANCE_POOL {
        return Err(FeatureError::TooFewSubcarriers {
            got: n_sub,
            want: VARIANCE_POOL,
        });
    }

    let mut frames = Array2::zeros((t_len, N_FEATURES));
    let inv_sub = 1.0 / n_sub as f64;

    for (c, &(tx, st)) in CHANNEL_MAP.iter().enumerate() {
        let tilde_ch = v_tilde.slice(s![.., .., tx, st]);
        let norm_ch = v_norm.slice(s![.., .., tx, st]);

        let amp_tilde = tilde_ch.mapv(|z| z.norm());
        for (t, mean) in amp_tilde.mean_axis(Axis(1)).unwrap().iter().enumerate() {
            frames[(t, NAMP + c)] = *mean;
        }
        for (t, score) in pca_first_component(&amp_tilde).iter().enumerate() {
            frames[(t, PCA_AMP + c)] = *score;
        }

        if c < N_PHASE_CHANNELS {
            let mean_phase: Vec<f64> = (0..t_len)
                .map(|t| tilde_ch.row(t).sum().arg())
                .collect();
            for (t, phase) in unwrap_phase(&mean_phase).into_iter().enumerate() {
                frames[(t, NPHS + c)] = phase;
            }
            let mut phase_mat = tilde_ch.mapv(|z| z.arg());
            unwrap_columns(&mut phase_mat);
            for (t, score) in pca_first_component(&phase_mat).iter().enumerate() {
                frames[(t, PCA_PHS + c)] = *score;
            }
        }

        let amp_norm = norm_ch.mapv(|z| z.norm());
        let mut mrc_sum = 0.0;
        for t in 0..t_len {
            let row = norm_ch.row(t);
            let d0: f64 = row
                .iter()
                .zip(norm_ch.row(0).iter())
                .map(|(a, b)| (a - b).norm_sqr())
                .sum();
            frames[(t, ED0 + c)] = d0.sqrt();
            let dr: f64 = row
                .iter()
                .zip(norm_ch.row(ref_index).iter())
                .map(|(a, b)| (a - b).norm_sqr())
                .sum();
            frames[(t, EDR + c)] = dr.sqrt();
            let combined = row.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            frames[(t, MRC + c)] = combined;
            mrc_sum += combined;
        }
        let mrc_dc = mrc_sum / t_len as f64;
        for t in 0..t_len {
            frames[(t, MRC + c)] -= mrc_dc;
        }

        let signal: Vec<Complex64> = (0..t_len)
            .map(|t| norm_ch.row(t).sum() * inv_sub)
            .collect();
        for (t, bands) in band_magnitudes(&signal, DFS_WINDOW).into_iter().enumerate() {
            frames[(t, DFS + 2 * c)] = bands[0];
            frames[(t, DFS + 2 * c + 1)] = bands[1];
        }

        pooled_mean(&amp_norm, true, &mut frames, HAMP + c);
        pooled_mean(&amp_norm, false, &mut frames, LAMP + c);
        if c < N_PHASE_CHANNELS {
            let mut phase_norm = norm_ch.mapv(|z| z.arg());
            unwrap_columns(&mut phase_norm);
            pooled_mean(&phase_norm, true, &mut frames, HPHS + c);
            pooled_mean(&phase_norm, false, &mut frames, LPHS + c);
        }
    }

    for a in 0..n_ang {
        let ang_mat = v_hat.slice(s![.., .., a]).to_owned();
        let means = ang_mat.mean_axis(Axis(1)).unwrap();
        let dc = means.sum() / t_len as f64;
        for (t, m) in means.iter().enumerate() {
            frames[(t, NANG + a)] = m - dc;
        }
        for (t, score) in pca_first_component(&ang_mat).iter().enumerate() {
            frames[(t, PCA_ANG + a)] = *score;
        }
    }

    let track_norm = subspace_track(v_norm);
    let track_tilde = subspace_track(v_tilde);
    for (base, track) in [(GR, &track_norm), (G, &track_tilde)] {
        for t in 0..t_len {
            frames[(t, base)] = if t == 0 {
                0.0
            } else {
                grassmann_distance(&track[t], &track[t - 1])?
            };
            frames[(t, base + 1)] = grassmann_distance(&track[t], &track[0])?;
            frames[(t, base + 2)] = grassmann_distance(&track[t], &track[ref_index])?;
        }
    }

    for st in 0..2 {
        for (p, &(i, j)) in TX_PAIRS.iter().enumerate() {
            let col = STEER + st * TX_PAIRS.len() + p;
            for t in 0..t_len {
                let mut acc = Complex64::new(0.0, 0.0);
                for k in 0..n_sub {
                    let z = v_tilde[(t, k, i, st)] * v_tilde[(t, k, j, st)].conj();
                    let mag = z.norm();
                    if mag > 0.0 {
                        acc += z / mag;
                    }
                }
                frames[(t, col)] = acc.arg();
            }
        }
    }

    let series = FeatureSeries {
        frames,
        ref_index,
        channel_map: CHANNEL_MAP,
    };
    series.validate()?;
    Ok(series)
}

/// Writes the per-sample mean over the variance-selected subcarrier pool
/// into one feature column.
fn pooled_mean(matrix: &Array2<f64>, highest: bool, frames: &mut Array2<f64>, col: usize) {
    let picks = select_by_variance(matrix, VARIANCE_POOL, highest);
    let inv = 1.0 / picks.len() as f64;
    for t in 0..matrix.dim().0 {
        frames[(t, col)] = picks.iter().map(|&k| matrix[(t, k)]).sum::<f64>() * inv;
    }
}

/// Orthonormalized subcarrier-mean steering matrix per sample.
fn subspace_track(stack: &Array4<Complex64>) -> Vec<DMatrix<Complex64>> {
    let (t_len, n_sub, n_tx, n_stream) = stack.dim();
    let inv = Complex64::new(1.0 / n_sub as f64, 0.0);
    (0..t_len)
        .map(|t| {
            let mean = DMatrix::from_fn(n_tx, n_stream, |r, c| {
                let mut acc = Complex64::new(0.0, 0.0);
                for k in 0..n_sub {
                    acc += stack[(t, k, r, c)];
                }
                acc * inv
            });
            orthonormalize_columns(&mean)
        })
        .collect()
}
