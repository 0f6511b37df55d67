//! Embedding `F = (s_1, …, s_n, s_l y^l - s)` and the Euclidean induced metric.

use nalgebra::{DMatrix, DVector};

use super::field::SupportField;
use crate::error::{Error, Result};
use crate::linalg::min_eigenvalue;

/// Point of the hypersurface whose normal corresponds to chart node `idx`.
pub fn embedding_point(s: &SupportField, idx: usize) -> Result<DVector<f64>> {
    let grad = s.gradient(idx)?;
    let y = s.grid().coords(idx);
    Ok(embedding_from(&grad, &y, s.value(idx)))
}

pub(crate) fn embedding_from(grad: &DVector<f64>, y: &[f64], value: f64) -> DVector<f64> {
    let n = grad.len();
    let mut f = DVector::zeros(n + 1);
    f.rows_mut(0, n).copy_from(grad);
    f[n] = grad.iter().zip(y).map(|(g, yy)| g * yy).sum::<f64>() - value;
    f
}

/// Tangent vectors `F_i = (s_1i, …, s_ni, s_li y^l)` as the columns of an
/// `(n+1) × n` matrix.
pub fn tangent_frame(hess: &DMatrix<f64>, y: &[f64]) -> DMatrix<f64> {
    let n = hess.nrows();
    let yv = DVector::from_column_slice(y);
    let mut m = DMatrix::zeros(n + 1, n);
    m.view_mut((0, 0), (n, n)).copy_from(hess);
    let last = hess.tr_mul(&yv);
    for i in 0..n {
        m[(n, i)] = last[i];
    }
    m
}

/// Induced Euclidean metric `ḡ = H (y yᵀ + I) H` and its determinant.
pub fn induced_metric(s: &SupportField, idx: usize) -> Result<(DMatrix<f64>, f64)> {
    let hess = s.hessian(idx)?;
    if min_eigenvalue(&hess) <= 0.0 {
        return Err(Error::DegenerateHessian { node: idx, det: hess.determinant() });
    }
    let y = s.grid().coords(idx);
    Ok(induced_metric_from(&hess, &y))
}

pub(crate) fn induced_metric_from(hess: &DMatrix<f64>, y: &[f64]) -> (DMatrix<f64>, f64) {
    let n = hess.nrows();
    let yv = DVector::from_column_slice(y);
    let inner = &yv * yv.transpose() + DMatrix::identity(n, n);
    let gbar = hess * inner * hess;
    let det = gbar.determinant();
    (gbar, det)
}
