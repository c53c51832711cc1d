//! Thin wrappers over dense symmetric linear algebra.

use faer::linalg::solvers::Solve;
use faer::{Mat, Side};

use crate::error::{Error, Result};

/// Row-major nested vectors into a dense matrix.
pub fn to_mat(rows: &[Vec<f64>]) -> Result<Mat<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != m) {
        return Err(Error::Shape("ragged rows".into()));
    }
    Ok(Mat::from_fn(n, m, |i, j| rows[i][j]))
}

/// Eigenvalues of a symmetric matrix (lower triangle read), non-increasing.
pub fn symmetric_eigenvalues(a: &Mat<f64>) -> Result<Vec<f64>> {
    if a.nrows() != a.ncols() {
        return Err(Error::Shape(format!("{}×{} matrix is not square", a.nrows(), a.ncols())));
    }
    let mut ev = a
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Numerical(format!("symmetric eigensolver: {e:?}")))?;
    ev.reverse();
    Ok(ev)
}

/// Singular values, non-increasing.
pub fn singular_values(a: &Mat<f64>) -> Result<Vec<f64>> {
    a.singular_values().map_err(|e| Error::Numerical(format!("svd: {e:?}")))
}

/// Solves `A x = b` for symmetric positive definite `A` by Cholesky.
pub fn cholesky_solve(a: &Mat<f64>, b: &[f64]) -> Result<Vec<f64>> {
    if a.nrows() != a.ncols() || a.nrows() != b.len() {
        return Err(Error::Shape(format!("{}×{} system with {} right-hand entries", a.nrows(), a.ncols(), b.len())));
    }
    let llt = a.llt(Side::Lower).map_err(|e| Error::Numerical(format!("cholesky: {e:?}")))?;
    let mut rhs = Mat::from_fn(b.len(), 1, |i, _| b[i]);
    llt.solve_in_place(rhs.as_mut());
    let x: Vec<f64> = (0..b.len()).map(|i| rhs[(i, 0)]).collect();
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite Cholesky solution".into()));
    }
    Ok(x)
}

/// `A x`
pub fn mat_vec(a: &Mat<f64>, x: &[f64]) -> Vec<f64> {
    (0..a.nrows()).map(|i| (0..a.ncols()).map(|j| a[(i, j)] * x[j]).sum()).collect()
}
