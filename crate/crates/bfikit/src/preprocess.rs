//! Trace conditioning between the recorder and the feature extractor:
//! uniform retiming, keystroke timing perturbation, reference selection,
//! reference normalization, and keystroke windowing.

use ndarray::{s, Array2, Array4};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::Normal;
use thiserror::Error;

use crate::trace::{PinTrace, Segment};

/// Largest supported half-window around a keystroke, in samples.
pub const MAX_WINDOW: usize = 40;

/// Lower clamp on divisor magnitudes during reference division.
pub const NORM_EPSILON: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("trace carries no usable timing information")]
    MissingTiming,
    #[error("reference policy unsatisfiable: {0}")]
    PolicyUnsatisfiable(String),
    #[error("window half-width {0} exceeds {MAX_WINDOW}")]
    WindowTooWide(usize),
    #[error("reference index {index} outside 0..{len}")]
    BadReference { index: usize, len: usize },
    #[error("timing sigma must be finite and non-negative, got {0}")]
    BadSigma(f64),
}

/// How the reference sample is picked for normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefPolicy {
    /// Uniformly random sample index.
    Random,
    /// Always sample 0.
    First,
    /// The sample where the fingertip is highest above the pad.
    HandFar,
    /// The keystroke sample of a digit-5 press, leaking label information.
    LeakyDigit5,
}

impl std::str::FromStr for RefPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random" => Ok(Self::Random),
            "first" => Ok(Self::First),
            "hand_far" => Ok(Self::HandFar),
            "leaky_digit5" => Ok(Self::LeakyDigit5),
            other => Err(format!("unknown reference policy '{other}'")),
        }
    }
}

impl std::fmt::Display for RefPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Self::Random => "random",
            Self::First => "first",
            Self::HandFar => "hand_far",
            Self::LeakyDigit5 => "leaky_digit5",
        };
        f.write_str(name)
    }
}

/// Reference removal strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NormalizeMode {
    /// Element-wise complex division by the reference sample.
    #[default]
    Divide,
    /// Element-wise subtraction of the reference sample.
    Subtract,
}

impl std::str::FromStr for NormalizeMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "divide" => Ok(Self::Divide),
            "subtract" => Ok(Self::Subtract),
            other => Err(format!("unknown normalize mode '{other}'")),
        }
    }
}

impl std::fmt::Display for NormalizeMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Divide => "divide",
            Self::Subtract => "subtract",
        })
    }
}

/// Retimes the trace so keystrokes are evenly spaced.
///
/// The target spacing is the rounded mean inter-keystroke gap. Samples are
/// warped piecewise-linearly between keystroke anchors; matrix and hand
/// track values are linearly interpolated, while quantized reports snap to
/// the nearest source sample. A trace whose keystrokes are already uniform
/// comes back bit-identical.
pub fn resample_uniform(trace: &PinTrace) -> Result<PinTrace, PreprocessError> {
    let t = trace.len();
    let ks = &trace.keystrokes;
    if t == 0 || ks.is_empty() {
        return Err(PreprocessError::MissingTiming);
    }
    let n = ks.len();
    let span = (ks[n - 1] - ks[0]) as f64;
    let gap = ((span / (n - 1) as f64).round() as usize).max(1);
    let new_ks: Vec<usize> = (0..n).map(|i| ks[0] + i * gap).collect();
    let new_t = t - ks[n - 1] + new_ks[n - 1];

    // Maps a resampled index onto a fractional source index.
    let to_source = |idx: usize| -> f64 {
        let x = idx as f64;
        if idx <= new_ks[0] {
            return x;
        }
        for i in 0..n - 1 {
            if idx <= new_ks[i + 1] {
                let f = (x - new_ks[i] as f64) / (new_ks[i + 1] - new_ks[i]) as f64;
                return ks[i] as f64 + f * (ks[i + 1] - ks[i]) as f64;
            }
        }
        (ks[n - 1] + (idx - new_ks[n - 1])) as f64
    };

    let (_, n_sub, n_tx, n_stream) = trace.matrices.dim();
    let mut matrices = Array4::zeros((new_t, n_sub, n_tx, n_stream));
    let mut reports = Vec::with_capacity(new_t);
    let mut hand_track = trace.hand_track.as_ref().map(|_| Vec::with_capacity(new_t));

    for idx in 0..new_t {
        let pos = to_source(idx).clamp(0.0, (t - 1) as f64);
        let lo = pos.floor() as usize;
        let frac = pos - lo as f64;
        if frac == 0.0 {
            matrices
                .slice_mut(s![idx, .., .., ..])
                .assign(&trace.matrices.slice(s![lo, .., .., ..]));
        } else {
            let hi = lo + 1;
            let a = trace.matrices.slice(s![lo, .., .., ..]);
            let b = trace.matrices.slice(s![hi, .., .., ..]);
            let mixed = &a * Complex64::new(1.0 - frac, 0.0) + &b * Complex64::new(frac, 0.0);
            matrices.slice_mut(s![idx, .., .., ..]).assign(&mixed);
        }
        let mut report = trace.reports[pos.round() as usize].clone();
        report.timestamp = idx as f64 / trace.sample_rate;
        reports.push(report);
        if let (Some(out), Some(src)) = (hand_track.as_mut(), trace.hand_track.as_ref()) {
            let a = src[lo];
            let b = src[(lo + 1).min(t - 1)];
            out.push([
                a[0] + frac * (b[0] - a[0]),
                a[1] + frac * (b[1] - a[1]),
                a[2] + frac * (b[2] - a[2]),
            ]);
        }
    }

    Ok(PinTrace {
        reports,
        matrices,
        keystrokes: new_ks,
        hand_track,
        ..trace.clone()
    })
}

/// Shifts each keystroke index by a rounded Gaussian draw.
///
/// Shifts are clamped so indices stay inside the trace in strictly
/// increasing order. Matrices and reports are untouched; this models label
/// timing error, not signal change.
pub fn perturb_timing(
    trace: &PinTrace,
    sigma: f64,
    seed: u64,
) -> Result<PinTrace, PreprocessError> {
    if !sigma.is_finite() || sigma < 0.0 {
        return Err(PreprocessError::BadSigma(sigma));
    }
    if sigma == 0.0 {
        return Ok(trace.clone());
    }
    let t = trace.len() as i64;
    let n = trace.keystrokes.len();
    if t == 0 || n == 0 {
        return Err(PreprocessError::MissingTiming);
    }
    let normal = Normal::new(0.0, sigma).expect("validated sigma");
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut shifted: Vec<i64> = trace
        .keystrokes
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            let shift = rng.sample::<f64, _>(normal).round() as i64;
            // Position i needs i slots before it and n-1-i after it.
            (k as i64 + shift).clamp(i as i64, t - (n - i) as i64)
        })
        .collect();
    for i in 1..n {
        shifted[i] = shifted[i].max(shifted[i - 1] + 1);
    }

    Ok(PinTrace {
        keystrokes: shifted.into_iter().map(|k| k as usize).collect(),
        ..trace.clone()
    })
}

/// Picks the reference sample index under the given policy.
pub fn select_reference(
    trace: &PinTrace,
    policy: RefPolicy,
    seed: u64,
) -> Result<usize, PreprocessError> {
    let t = trace.len();
    if t == 0 {
        return Err(PreprocessError::MissingTiming);
    }
    match policy {
        RefPolicy::Random => {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            Ok(rng.random_range(0..t))
        }
        RefPolicy::First => Ok(0),
        RefPolicy::HandFar => {
            let track = trace.hand_track.as_ref().ok_or_else(|| {
                PreprocessError::PolicyUnsatisfiable(
                    "hand_far needs a recorded hand track".into(),
                )
            })?;
            let best = track
                .iter()
                .enumerate()
                .max_by(|(ia, a), (ib, b)| {
                    // First occurrence wins ties.
                    a[2].partial_cmp(&b[2])
                        .unwrap()
                        .then(ib.cmp(ia))
                })
                .map(|(i, _)| i)
                .unwrap();
            Ok(best)
        }
        RefPolicy::LeakyDigit5 => trace
            .digits
            .iter()
            .position(|&d| d == 5)
            .map(|pos| trace.keystrokes[pos])
            .ok_or_else(|| {
                PreprocessError::PolicyUnsatisfiable("trace contains no digit-5 press".into())
            }),
    }
}

/// Removes per-element static channel structure using one reference sample.
///
/// Division clamps divisor magnitudes below at [`NORM_EPSILON`]; the
/// reference sample itself becomes exactly all-ones (divide) or all-zeros
/// (subtract).
pub fn normalize(
    matrices: &Array4<Complex64>,
    ref_index: usize,
    mode: NormalizeMode,
) -> Result<Array4<Complex64>, PreprocessError> {
    let t = matrices.dim().0;
    if ref_index >= t {
        return Err(PreprocessError::BadReference {
            index: ref_index,
            len: t,
        });
    }
    let reference = matrices.slice(s![ref_index, .., .., ..]).to_owned();
    let mut out = matrices.clone();
    for mut frame in out.outer_iter_mut() {
        match mode {
            NormalizeMode::Divide => {
                frame.zip_mut_with(&reference, |v, &r| {
                    let mag = r.norm();
                    let den = if mag >= NORM_EPSILON {
                        r
                    } else if mag == 0.0 {
                        Complex64::new(NORM_EPSILON, 0.0)
                    } else {
                        r * (NORM_EPSILON / mag)
                    };
                    *v /= den;
                });
            }
            NormalizeMode::Subtract => {
                frame.zip_mut_with(&reference, |v, &r| *v -= r);
            }
        }
    }
    let fill = match mode {
        NormalizeMode::Divide => Complex64::new(1.0, 0.0),
        NormalizeMode::Subtract => Complex64::new(0.0, 0.0),
    };
    out.slice_mut(s![ref_index, .., .., ..]).fill(fill);
    Ok(out)
}

/// Cuts one window per keystroke out of a per-sample feature matrix.
///
/// Windows span `2 * width + 1` rows centered on each keystroke, clipped at
/// the trace boundaries.
pub fn segment(
    features: &Array2<f64>,
    trace: &PinTrace,
    width: usize,
) -> Result<Vec<Segment>, PreprocessError> {
    if width > MAX_WINDOW {
        return Err(PreprocessError::WindowTooWide(width));
    }
    let t = features.dim().0;
    if t != trace.len() || t == 0 {
        return Err(PreprocessError::MissingTiming);
    }
    let segments = trace
        .keystrokes
        .iter()
        .zip(&trace.digits)
        .enumerate()
        .map(|(pos, (&k, &digit))| {
            let start = k.saturating_sub(width);
            let end = (k + width).min(t - 1);
            Segment {
                frames: features.slice(s![start..=end, ..]).to_owned(),
                digit,
                center: k - start,
                width,
                domain: trace.domain,
                neighbors: (
                    pos.checked_sub(1).map(|p| trace.digits[p]),
                    trace.digits.get(pos + 1).copied(),
                ),
            }
        })
        .collect();
    Ok(segments)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{AngleReport, Codebook, StreamConfig};
    use crate::trace::DomainKey;
    use ndarray::Array2 as A2;

    /// Trace whose matrix entries encode the sample index, for warp checks.
    fn ramp_trace(t: usize, keystrokes: Vec<usize>) -> PinTrace {
        let config = StreamConfig::new(4, 2, 3).unwrap();
        let codebook = Codebook::default();
        let angles = A2::<u16>::zeros((3, 10));
        let reports = (0..t)
            .map(|n| {
                AngleReport::new(config, codebook, n as f64 / 18.0, angles.clone()).unwrap()
            })
            .collect();
        let matrices = Array4::from_shape_fn((t, 3, 4, 2), |(n, s, r, c)| {
            Complex64::new(n as f64, (s + r + c) as f64)
        });
        let hand_track = Some((0..t).map(|n| [n as f64, 0.0, 0.0]).collect());
        PinTrace {
            id: "test".into(),
            config,
            codebook,
            sample_rate: 18.0,
            domain: DomainKey::new(0, 0, 44, 0).unwrap(),
            reports,
            matrices,
            keystrokes,
            digits: vec![2, 5, 4, 5, 1, 9],
            hand_track,
        }
    }

    #[test]
    fn uneven_gaps_resample_to_their_mean() {
        let trace = ramp_trace(80, vec![5, 15, 35, 45, 65, 75]);
        let out = resample_uniform(&trace).unwrap();
        assert_eq!(out.keystrokes, vec![5, 19, 33, 47, 61, 75]);
        assert_eq!(out.keystroke_gaps(), vec![14; 5]);
        assert_eq!(out.len(), 80);
        assert!(out.validate().is_ok());
    }

    #[test]
    fn uniform_trace_resamples_to_itself_bitwise() {
        let trace = ramp_trace(90, vec![5, 19, 33, 47, 61, 75]);
        let out = resample_uniform(&trace).unwrap();
        assert_eq!(out.keystrokes, trace.keystrokes);
        assert_eq!(out.matrices, trace.matrices);
        assert_eq!(out.hand_track, trace.hand_track);
    }

    #[test]
    fn warp_evaluates_ramp_at_source_positions() {
        let trace = ramp_trace(80, vec![5, 15, 35, 45, 65, 75]);
        let out = resample_uniform(&trace).unwrap();
        // Keystroke anchors carry their source values exactly.
        for (new_k, old_k) in out.keystrokes.iter().zip(&trace.keystrokes) {
            assert_eq!(out.matrices[(*new_k, 0, 0, 0)].re, *old_k as f64);
        }
        // A ramp stays affine inside each inter-key span.
        for w in out.keystrokes.windows(2) {
            for n in w[0]..w[1] - 1 {
                let d2 = out.matrices[(n + 2, 0, 0, 0)].re
                    - 2.0 * out.matrices[(n + 1, 0, 0, 0)].re
                    + out.matrices[(n, 0, 0, 0)].re;
                assert!(d2.abs() < 1e-9);
            }
        }
    }

    #[test]
    fn zero_sigma_perturbation_is_identity() {
        let trace = ramp_trace(101, vec![14, 29, 43, 58, 72, 86]);
        let out = perturb_timing(&trace, 0.0, 7).unwrap();
        assert_eq!(out.keystrokes, trace.keystrokes);
        assert_eq!(out.matrices, trace.matrices);
    }

    #[test]
    fn perturbation_is_seeded_and_order_preserving() {
        let trace = ramp_trace(101, vec![14, 29, 43, 58, 72, 86]);
        let a = perturb_timing(&trace, 3.0, 42).unwrap();
        let b = perturb_timing(&trace, 3.0, 42).unwrap();
        assert_eq!(a.keystrokes, b.keystrokes);
        assert_ne!(a.keystrokes, trace.keystrokes);
        // Even absurd noise cannot break ordering or bounds.
        let wild = perturb_timing(&trace, 500.0, 1).unwrap();
        assert!(wild.keystrokes.windows(2).all(|w| w[0] < w[1]));
        assert!(*wild.keystrokes.last().unwrap() < trace.len());
        assert!(wild.validate().is_ok());
    }

    #[test]
    fn shift_spread_matches_requested_sigma() {
        let trace = ramp_trace(2000, vec![200, 500, 800, 1100, 1400, 1700]);
        let mut shifts = Vec::new();
        for seed in 0..1700u64 {
            let out = perturb_timing(&trace, 3.0, seed).unwrap();
            for (new, old) in out.keystrokes.iter().zip(&trace.keystrokes) {
                shifts.push(*new as f64 - *old as f64);
            }
        }
        assert!(shifts.len() >= 10_000);
        let mean = shifts.iter().sum::<f64>() / shifts.len() as f64;
        let var =
            shifts.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / shifts.len() as f64;
        let std = var.sqrt();
        assert!((2.8..=3.2).contains(&std), "std {std}");
    }

    #[test]
    fn reference_policies() {
        let mut trace = ramp_trace(101, vec![14, 29, 43, 58, 72, 86]);
        trace.hand_track.as_mut().unwrap()[37] = [0.0, 0.0, 0.02];
        assert_eq!(select_reference(&trace, RefPolicy::First, 0).unwrap(), 0);
        assert_eq!(select_reference(&trace, RefPolicy::HandFar, 0).unwrap(), 37);
        // First 5 in the pin 254519 sits at keystroke position 1.
        assert_eq!(
            select_reference(&trace, RefPolicy::LeakyDigit5, 0).unwrap(),
            29
        );
        let r1 = select_reference(&trace, RefPolicy::Random, 9).unwrap();
        let r2 = select_reference(&trace, RefPolicy::Random, 9).unwrap();
        assert_eq!(r1, r2);
        assert!(r1 < trace.len());

        trace.digits = vec![1, 2, 3, 4, 6, 7];
        assert!(select_reference(&trace, RefPolicy::LeakyDigit5, 0).is_err());
        trace.hand_track = None;
        assert!(select_reference(&trace, RefPolicy::HandFar, 0).is_err());
    }

    #[test]
    fn divide_normalization_examples() {
        let m = Array4::from_shape_fn((3, 2, 4, 2), |(n, s, r, c)| {
            Complex64::new(1.0 + n as f64, 0.3 * (s + r + c) as f64 + 0.1)
        });
        let out = normalize(&m, 1, NormalizeMode::Divide).unwrap();
        for v in out.slice(s![1, .., .., ..]).iter() {
            assert_eq!(*v, Complex64::new(1.0, 0.0));
        }
        // Doubling the reference frame elementwise halves nothing else.
        let mut doubled = m.clone();
        let twice = m.slice(s![1, .., .., ..]).mapv(|z| z * 2.0);
        doubled.slice_mut(s![2, .., .., ..]).assign(&twice);
        let out = normalize(&doubled, 1, NormalizeMode::Divide).unwrap();
        for v in out.slice(s![2, .., .., ..]).iter() {
            assert!((v - Complex64::new(2.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn constant_sequence_normalizes_to_ones() {
        let m = Array4::from_elem((4, 2, 4, 2), Complex64::new(0.3, -0.7));
        let out = normalize(&m, 2, NormalizeMode::Divide).unwrap();
        for v in out.iter() {
            assert!((v - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn division_cancels_uniform_scaling() {
        let m = Array4::from_shape_fn((3, 1, 4, 2), |(n, _, r, c)| {
            Complex64::new(0.4 + n as f64 + r as f64, 0.2 - c as f64)
        });
        let base = normalize(&m, 0, NormalizeMode::Divide).unwrap();
        // Power-of-two real scaling is exact in floating point.
        let scaled = normalize(&m.mapv(|z| z * 2.0), 0, NormalizeMode::Divide).unwrap();
        assert_eq!(base, scaled);
        let c = Complex64::new(1.3, 0.4);
        let scaled = normalize(&m.mapv(|z| z * c), 0, NormalizeMode::Divide).unwrap();
        for (a, b) in base.iter().zip(scaled.iter()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn subtract_mode_zeroes_the_reference() {
        let m = Array4::from_shape_fn((3, 1, 4, 2), |(n, _, r, c)| {
            Complex64::new(n as f64 + r as f64, c as f64)
        });
        let out = normalize(&m, 0, NormalizeMode::Subtract).unwrap();
        for v in out.slice(s![0, .., .., ..]).iter() {
            assert_eq!(*v, Complex64::new(0.0, 0.0));
        }
        assert_eq!(out[(2, 0, 0, 0)], Complex64::new(2.0, 0.0));
    }

    #[test]
    fn near_zero_divisors_are_clamped() {
        let mut m = Array4::from_elem((2, 1, 4, 2), Complex64::new(1.0, 0.0));
        m[(0, 0, 0, 0)] = Complex64::new(0.0, 0.0);
        m[(0, 0, 1, 0)] = Complex64::new(1e-9, 0.0);
        let out = normalize(&m, 0, NormalizeMode::Divide).unwrap();
        assert!((out[(1, 0, 0, 0)].norm() - 1e6).abs() < 1.0);
        assert!((out[(1, 0, 1, 0)].norm() - 1e6).abs() < 1.0);
    }

    #[test]
    fn segmentation_windows_clip_and_label() {
        let mut trace = ramp_trace(80, vec![3, 16, 30, 44, 58, 72]);
        trace.digits = vec![9, 1, 2, 3, 4, 5];
        let features = A2::from_shape_fn((80, 6), |(r, c)| (r * 10 + c) as f64);

        let tight = segment(&features, &trace, 0).unwrap();
        assert_eq!(tight.len(), 6);
        assert!(tight.iter().all(|s| s.frames.dim().0 == 1 && s.center == 0));
        let labels: Vec<u8> = tight.iter().map(|s| s.digit).collect();
        assert_eq!(labels, trace.digits);

        let wide = segment(&features, &trace, 10).unwrap();
        // First keystroke at 3 clips on the left: rows 0..=13.
        assert_eq!(wide[0].frames.dim().0, 14);
        assert_eq!(wide[0].center, 3);
        assert_eq!(wide[0].frames[(0, 0)], 0.0);
        // Interior windows are full length with the keystroke centered.
        assert_eq!(wide[2].frames.dim().0, 21);
        assert_eq!(wide[2].center, 10);
        assert_eq!(wide[2].frames[(10, 0)], 300.0);
        assert_eq!(wide[2].neighbors, (Some(1), Some(3)));
        assert_eq!(wide[0].neighbors, (None, Some(1)));
        assert_eq!(wide[5].neighbors, (Some(4), None));

        assert!(segment(&features, &trace, 41).is_err());
    }
}
