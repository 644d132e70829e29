//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, Matrix2};

use crate::C64;

pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Smallest and largest eigenvalue of the Hermitian part of `m`.
pub fn hermitian_extremes(m: &DMatrix<C64>) -> (f64, f64) {
    let h = (m + m.adjoint()) * c(0.5);
    let eig = h.symmetric_eigen();
    let lo = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// Singular values of `m`, descending.
pub fn singular_values(m: &DMatrix<C64>) -> Vec<f64> {
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().cloned().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Orthonormal basis of the numerical null space of a square matrix:
/// right singular vectors with `σ ≤ rel_tol · σ_max`.
pub fn null_space(m: &DMatrix<C64>, rel_tol: f64) -> Vec<DVector<C64>> {
    assert_eq!(m.nrows(), m.ncols(), "null_space expects a square matrix");
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested V");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cut = rel_tol * smax.max(f64::MIN_POSITIVE);
    svd.singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s <= cut)
        .map(|(k, _)| v_t.row(k).adjoint())
        .collect()
}

/// Numerical rank with relative tolerance.
pub fn rank(m: &DMatrix<C64>, rel_tol: f64) -> usize {
    let s = singular_values(m);
    let smax = s.first().cloned().unwrap_or(0.0);
    if smax == 0.0 {
        return 0;
    }
    s.iter().filter(|&&v| v > rel_tol * smax).count()
}

/// Null vector of a 2×2 matrix assumed singular (largest-row construction).
pub fn null_vector2(m: &Matrix2<C64>) -> [C64; 2] {
    let r0 = m[(0, 0)].norm() + m[(0, 1)].norm();
    let r1 = m[(1, 0)].norm() + m[(1, 1)].norm();
    let (a, b) = if r0 >= r1 { (m[(0, 0)], m[(0, 1)]) } else { (m[(1, 0)], m[(1, 1)]) };
    if a.norm() + b.norm() == 0.0 {
        return [c(1.0), c(0.0)];
    }
    let v = [-b, a];
    let n = (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
    [v[0] / n, v[1] / n]
}

/// Eigenvalues of a general complex matrix via the Schur form.
pub fn eigenvalues(m: DMatrix<C64>) -> Option<Vec<C64>> {
    m.schur().eigenvalues().map(|v| v.iter().cloned().collect())
}

/// 2-norm condition number from singular values.
pub fn condition_number(m: &DMatrix<C64>) -> f64 {
    let s = singular_values(m);
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    }
}
