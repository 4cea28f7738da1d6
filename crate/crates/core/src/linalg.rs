//! Thin wrappers over nalgebra for the handful of dense factorizations we need.

use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)] // unused when std is linked into the build
use num_traits::Float;

/// Numerical rank with a tolerance relative to the largest singular value.
pub(crate) fn rank(rows: usize, cols: usize, data: &[f64], rel_tol: f64) -> usize {
    if rows == 0 || cols == 0 {
        return 0;
    }
    let m = DMatrix::from_row_slice(rows, cols, data);
    let sv = m.singular_values();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * smax).count()
}

/// Orthonormal basis of the null space of a square `n x n` matrix.
pub(crate) fn null_space(n: usize, data: &[f64], rel_tol: f64) -> Vec<Vec<f64>> {
    let m = DMatrix::from_row_slice(n, n, data);
    let smax = m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if smax == 0.0 {
        return (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
    }
    let svd = m.svd(false, true);
    let v_t = svd.v_t.expect("requested v_t");
    let sv = &svd.singular_values;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let mut basis = Vec::new();
    for (k, s) in sv.iter().enumerate() {
        if *s <= rel_tol * smax {
            basis.push(v_t.row(k).iter().cloned().collect());
        }
    }
    basis
}

/// Solves `A x = b` for a small square system; `None` when singular.
pub(crate) fn solve(n: usize, a: &[f64], b: &[f64]) -> Option<Vec<f64>> {
    let m = DMatrix::from_row_slice(n, n, a);
    let rhs = DVector::from_column_slice(b);
    let x = m.lu().solve(&rhs)?;
    if x.iter().all(|v| v.is_finite()) {
        Some(x.iter().cloned().collect())
    } else {
        None
    }
}

/// Inverse of a symmetric positive definite matrix, `None` if Cholesky fails.
pub(crate) fn spd_inverse(n: usize, a: &[f64]) -> Option<Vec<f64>> {
    let m = DMatrix::from_row_slice(n, n, a);
    let chol = m.cholesky()?;
    let inv = chol.inverse();
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            out.push(inv[(i, j)]);
        }
    }
    Some(out)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y = M x` for a row-major `n x n` matrix.
pub(crate) fn mat_vec(n: usize, m: &[f64], x: &[f64]) -> Vec<f64> {
    (0..n).map(|i| dot(&m[i * n..(i + 1) * n], x)).collect()
}
