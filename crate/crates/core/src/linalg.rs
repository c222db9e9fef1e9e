//! Dense kernels that nalgebra handles slowly at a few thousand dimensions.
//!
//! faer provides a blocked symmetric eigensolver and matrix product; results
//! are copied back into nalgebra types, which the rest of the crate uses.

use faer::Mat;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

fn to_faer(m: &DMatrix<f64>) -> Mat<f64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn view(m: &DMatrix<f64>) -> faer::MatRef<'_, f64> {
    faer::MatRef::from_column_major_slice(m.as_slice(), m.nrows(), m.ncols())
}

fn product(lhs: faer::MatRef<'_, f64>, x: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(lhs.nrows());
    let rhs = faer::MatRef::from_column_major_slice(x.as_slice(), x.len(), 1);
    let dst = faer::MatMut::from_column_major_slice_mut(out.as_mut_slice(), lhs.nrows(), 1);
    faer::linalg::matmul::matmul(dst, faer::Accum::Replace, lhs, rhs, 1.0, faer::Par::Seq);
    out
}

/// `m x` without copying `m`.
pub fn mul_vec(m: &DMatrix<f64>, x: &DVector<f64>) -> DVector<f64> {
    assert_eq!(m.ncols(), x.len());
    product(view(m), x)
}

/// `m^T x` without copying `m`.
pub fn tr_mul_vec(m: &DMatrix<f64>, x: &DVector<f64>) -> DVector<f64> {
    assert_eq!(m.nrows(), x.len());
    product(view(m).transpose(), x)
}

/// Eigen-decomposition `m = V diag(w) V^T` of a symmetric matrix.
///
/// Only the lower triangle is read. Eigenvalues come back ascending, with
/// eigenvectors as the columns of `V`.
pub fn symmetric_eigen(m: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if m.nrows() != m.ncols() {
        return Err(Error::invalid(format!(
            "eigen-decomposition needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let n = m.nrows();
    if n == 0 {
        return Ok((DVector::zeros(0), DMatrix::zeros(0, 0)));
    }
    let eig = to_faer(m)
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|e| Error::Numerical(format!("symmetric eigensolver failed: {e:?}")))?;
    let (u, s) = (eig.U(), eig.S());
    let values = DVector::from_fn(n, |i, _| s[i]);
    let vectors = DMatrix::from_fn(n, n, |i, j| u[(i, j)]);
    Ok((values, vectors))
}

/// `a^T a`.
pub fn gram(a: &DMatrix<f64>) -> DMatrix<f64> {
    let fa = to_faer(a);
    let g = fa.transpose() * &fa;
    DMatrix::from_fn(a.ncols(), a.ncols(), |i, j| {
        // exact symmetry regardless of summation order
        if i <= j {
            g[(i, j)]
        } else {
            g[(j, i)]
        }
    })
}

/// `v diag(w) v^T`, symmetrised.
pub fn recompose(values: &DVector<f64>, vectors: &DMatrix<f64>) -> DMatrix<f64> {
    let n = values.len();
    let scaled = Mat::from_fn(n, n, |i, j| vectors[(i, j)] * values[j]);
    let fv = to_faer(vectors);
    let m = &scaled * fv.transpose();
    DMatrix::from_fn(n, n, |i, j| 0.5 * (m[(i, j)] + m[(j, i)]))
}
