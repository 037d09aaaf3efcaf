//! Dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::{Error, Result};

/// Least-squares coefficients `B` (k x m) minimizing `|Y - X B|` via the
/// normal equations, with a Cholesky solve and a QR/SVD fallback.
pub fn ols(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.nrows() != y.nrows() {
        return Err(Error::Decomposition(format!(
            "row mismatch: X has {} rows, Y has {}",
            x.nrows(),
            y.nrows()
        )));
    }
    if x.nrows() < x.ncols() {
        return Err(Error::Decomposition(format!(
            "underdetermined system: {} rows for {} regressors",
            x.nrows(),
            x.ncols()
        )));
    }
    let xtx = x.transpose() * x;
    let xty = x.transpose() * y;
    if let Some(chol) = xtx.clone().cholesky() {
        let b = chol.solve(&xty);
        if b.iter().all(|v| v.is_finite()) {
            return Ok(b);
        }
    }
    let svd = x.clone().svd(true, true);
    svd.solve(y, 1e-12)
        .map_err(|e| Error::Decomposition(format!("least squares failed: {e}")))
}

/// Inverse of a symmetric positive-definite matrix.
pub fn spd_inverse(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    a.clone().cholesky().map(|c| c.inverse())
}

pub fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

/// Raises eigenvalues of a symmetric matrix to at least `floor`. Returns the
/// repaired matrix and whether any eigenvalue was lifted.
pub fn eigen_floor(a: &DMatrix<f64>, floor: f64) -> (DMatrix<f64>, bool) {
    let eig = SymmetricEigen::new(a.clone());
    if eig.eigenvalues.iter().all(|&l| l >= floor) {
        return (a.clone(), false);
    }
    let lifted = DVector::from_iterator(eig.eigenvalues.len(), eig.eigenvalues.iter().map(|&l| l.max(floor)));
    let mut out = &eig.eigenvectors * DMatrix::from_diagonal(&lifted) * eig.eigenvectors.transpose();
    symmetrize(&mut out);
    (out, true)
}

pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(a.clone())
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// log-determinant of a symmetric positive-definite matrix.
pub fn ln_det_spd(a: &DMatrix<f64>) -> Option<f64> {
    let c = a.clone().cholesky()?;
    Some(2.0 * c.l().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}
