//! Scalar signal helpers shared by the feature classes.

use ndarray::{Array1, Array2, Axis};
use num_complex::Complex64;
use std::f64::consts::{PI, TAU};

/// Removes 2 pi jumps so consecutive differences land in (-pi, pi].
///
/// The first element is passed through unchanged.
pub fn unwrap_phase(series: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(series.len());
    let Some((&first, rest)) = series.split_first() else {
        return out;
    };
    out.push(first);
    let mut prev_in = first;
    let mut prev_out = first;
    for &x in rest {
        let d = x - prev_in;
        let jump = d - TAU * ((d - PI) / TAU).ceil();
        prev_out += jump;
        out.push(prev_out);
        prev_in = x;
    }
    out
}

/// Unwraps every column of a `[T x m]` matrix along time.
pub fn unwrap_columns(m: &mut Array2<f64>) {
    for mut col in m.axis_iter_mut(Axis(1)) {
        let series = col.to_vec();
        for (dst, src) in col.iter_mut().zip(unwrap_phase(&series)) {
            *dst = src;
        }
    }
}

/// Scores of the first principal component of a `[T x m]` matrix.
///
/// Columns are mean-centered, the dominant right singular vector is found by
/// power iteration from deterministic starting vectors, and its sign is
/// fixed so the largest-magnitude loading is positive. Zero-variance input
/// yields all-zero scores.
pub fn pca_first_component(matrix: &Array2<f64>) -> Array1<f64> {
    let (t, m) = matrix.dim();
    if t == 0 || m == 0 {
        return Array1::zeros(t);
    }
    let means = matrix.mean_axis(Axis(0)).expect("nonzero rows");
    let x = matrix - &means;
    if x.iter().all(|v| v.abs() < 1e-300) {
        return Array1::zeros(t);
    }

    // The uniform start covers generic data; canonical starts cover inputs
    // the uniform vector is orthogonal to.
    let uniform = Array1::from_elem(m, 1.0 / (m as f64).sqrt());
    let starts = std::iter::once(uniform).chain((0..m).map(|i| {
        let mut e = Array1::zeros(m);
        e[i] = 1.0;
        e
    }));

    for start in starts {
        let mut v = start;
        let mut alive = true;
        for _ in 0..200 {
            let w = x.dot(&v);
            let mut u = x.t().dot(&w);
            let norm = u.dot(&u).sqrt();
            if norm < 1e-30 {
                alive = false;
                break;
            }
            u /= norm;
            let delta = (&u - &v).mapv(|d| d * d).sum().sqrt();
            v = u;
            if delta < 1e-13 {
                break;
            }
        }
        if !alive {
            continue;
        }
        let lead = v
            .iter()
            .enumerate()
            .max_by(|(ia, a), (ib, b)| {
                a.abs().partial_cmp(&b.abs()).unwrap().then(ib.cmp(ia))
            })
            .map(|(i, _)| i)
            .unwrap();
        if v[lead] < 0.0 {
            v.mapv_inplace(|c| -c);
        }
        return x.dot(&v);
    }
    Array1::zeros(t)
}

/// Indices of the `take` highest- or lowest-variance columns.
///
/// Ties resolve toward the lower column index, so selection is total.
pub fn select_by_variance(matrix: &Array2<f64>, take: usize, highest: bool) -> Vec<usize> {
    let (t, cols) = matrix.dim();
    let mut scored: Vec<(f64, usize)> = (0..cols)
        .map(|c| {
            let col = matrix.column(c);
            let mean = col.sum() / t as f64;
            let var = col.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / t as f64;
            (var, c)
        })
        .collect();
    scored.sort_by(|a, b| {
        let ord = a.0.partial_cmp(&b.0).unwrap();
        if highest { ord.reverse() } else { ord }.then(a.1.cmp(&b.1))
    });
    scored.into_iter().take(take).map(|(_, c)| c).collect()
}

/// Reflect-pads an index into `[0, len)` without repeating edge samples.
fn reflect(i: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let mut i = i.rem_euclid(period);
    if i >= len as isize {
        i = period - i;
    }
    i as usize
}

/// Sliding short-time spectrum magnitudes, split at half-Nyquist.
///
/// Per sample a `window`-long reflect-padded slice centered on it is Fourier
/// transformed; the result is the mean bin magnitude over (0, Nyquist/2] and
/// (Nyquist/2, Nyquist]. The DC bin never contributes.
pub fn band_magnitudes(signal: &[Complex64], window: usize) -> Vec<[f64; 2]> {
    assert!(window >= 4 && window % 4 == 0, "window must be a positive multiple of 4");
    let t = signal.len();
    let half = window / 2;
    let quarter = window / 4;
    let lead = half - 1;
    let mut out = Vec::with_capacity(t);
    for center in 0..t {
        let xs: Vec<Complex64> = (0..window)
            .map(|j| signal[reflect(center as isize - lead as isize + j as isize, t)])
            .collect();
        let mut lower = 0.0;
        let mut upper = 0.0;
        for b in 1..=half {
            let mut acc = Complex64::new(0.0, 0.0);
            for (j, &x) in xs.iter().enumerate() {
                let phase = -TAU * (b * j) as f64 / window as f64;
                acc += x * Complex64::from_polar(1.0, phase);
            }
            if b <= quarter {
                lower += acc.norm();
            } else {
                upper += acc.norm();
            }
        }
        out.push([lower / quarter as f64, upper / quarter as f64]);
    }
    out
}
