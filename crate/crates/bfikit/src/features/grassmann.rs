//! Subspace geometry between steering matrices.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::FeatureError;

/// Orthonormality slack accepted on [`grassmann_distance`] inputs.
pub const SUBSPACE_TOL: f64 = 1e-6;

/// Geodesic distance between the column spans of two orthonormal matrices.
///
/// `d = sqrt(sum theta_i^2)` where `cos theta_i` are the singular values of
/// `A^H B`, clamped into `[0, 1]`. The operands are ordered canonically
/// before the product so the result is exactly symmetric in floating point.
pub fn grassmann_distance(
    a: &DMatrix<Complex64>,
    b: &DMatrix<Complex64>,
) -> Result<f64, FeatureError> {
    if a.shape() != b.shape() {
        return Err(FeatureError::ShapeMismatch(format!(
            "subspace shapes {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    for (name, m) in [("left", a), ("right", b)] {
        let dev = orthonormality_deviation(m);
        if dev > SUBSPACE_TOL {
            return Err(FeatureError::NonOrthonormal {
                side: name,
                deviation: dev,
            });
        }
    }
    if a == b {
        // The SVD of A^H A returns singular values a hair under one, whose
        // acos would report a distance near 1e-8 between identical frames.
        return Ok(0.0);
    }
    let (first, second) = if lex_le(a, b) { (a, b) } else { (b, a) };
    let product = first.adjoint() * second;
    let sigma = product.svd(false, false).singular_values;
    let sum: f64 = sigma
        .iter()
        .map(|s| {
            let theta = s.clamp(0.0, 1.0).acos();
            theta * theta
        })
        .sum();
    Ok(sum.sqrt())
}

/// Orthonormalizes columns in place order with deterministic completion.
///
/// Columns are processed by Gram-Schmidt with one re-orthogonalization pass.
/// A column that collapses onto the span of its predecessors is replaced by
/// the first canonical basis vector with a usable orthogonal remainder, so
/// rank-deficient inputs still yield a valid orthonormal frame and equal
/// inputs yield equal outputs.
pub fn orthonormalize_columns(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let (rows, cols) = m.shape();
    assert!(cols <= rows, "cannot orthonormalize {cols} columns in {rows}-dim space");
    let mut q = m.clone();
    for j in 0..cols {
        let mut v = q.column(j).into_owned();
        for _pass in 0..2 {
            for i in 0..j {
                let qi = q.column(i);
                let coeff: Complex64 = qi.iter().zip(v.iter()).map(|(a, b)| a.conj() * b).sum();
                v.iter_mut().zip(qi.iter()).for_each(|(x, a)| *x -= coeff * a);
            }
        }
        let norm = v.norm();
        if norm > 1e-10 {
            v /= Complex64::new(norm, 0.0);
        } else {
            v = completion_vector(&q, j, rows);
        }
        q.set_column(j, &v);
    }
    q
}

/// First canonical basis vector with a solid orthogonal remainder against
/// the accepted columns.
fn completion_vector(
    q: &DMatrix<Complex64>,
    cols_done: usize,
    rows: usize,
) -> nalgebra::DVector<Complex64> {
    for r in 0..rows {
        let mut v = nalgebra::DVector::<Complex64>::zeros(rows);
        v[r] = Complex64::new(1.0, 0.0);
        for i in 0..cols_done {
            let qi = q.column(i);
            let coeff: Complex64 = qi.iter().zip(v.iter()).map(|(a, b)| a.conj() * b).sum();
            v.iter_mut().zip(qi.iter()).for_each(|(x, a)| *x -= coeff * a);
        }
        let norm = v.norm();
        if norm > 0.5 {
            return v / Complex64::new(norm, 0.0);
        }
    }
    unreachable!("fewer columns than rows always leaves room for completion");
}

fn orthonormality_deviation(m: &DMatrix<Complex64>) -> f64 {
    let gram = m.adjoint() * m;
    let k = gram.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..k {
        for j in 0..k {
            let want = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((gram[(i, j)] - Complex64::new(want, 0.0)).norm());
        }
    }
    worst
}

/// Deterministic total order on matrices by element bytes.
fn lex_le(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> bool {
    for (x, y) in a.iter().zip(b.iter()) {
        for (p, q) in [(x.re, y.re), (x.im, y.im)] {
            match p.total_cmp(&q) {
                std::cmp::Ordering::Less => return true,
                std::cmp::Ordering::Greater => return false,
                std::cmp::Ordering::Equal => {}
            }
        }
    }
    true
}
