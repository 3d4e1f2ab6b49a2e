//! Small dense linear-algebra helpers shared by the solvers.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

/// `XᵀX`.
pub fn gram(x: &DMatrix<f64>) -> DMatrix<f64> {
    x.tr_mul(x)
}

/// `Xᵀ diag(w) X`.
pub fn weighted_gram(x: &DMatrix<f64>, w: &DVector<f64>) -> DMatrix<f64> {
    let mut scaled = x.clone();
    for (mut row, wi) in scaled.row_iter_mut().zip(w.iter()) {
        row *= *wi;
    }
    x.tr_mul(&scaled)
}

/// Cholesky factor of a symmetric matrix, `None` unless numerically
/// positive definite.
///
/// nalgebra only rejects non-positive pivots; a pivot tiny relative to the
/// diagonal scale also counts as singular here.
pub fn cholesky(m: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    let scale = m.diagonal().iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if !(scale.is_finite()) || scale == 0.0 {
        return None;
    }
    let chol = m.clone().cholesky()?;
    let l = chol.l_dirty();
    let min_pivot = (0..m.nrows()).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min);
    if min_pivot <= scale * 1e-13 {
        return None;
    }
    Some(chol)
}

/// Squared Euclidean norm.
pub fn sq_norm(v: &DVector<f64>) -> f64 {
    v.iter().map(|a| a * a).sum()
}

pub fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0f64, |a, b| a.max(b.abs()))
}
