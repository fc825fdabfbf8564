//! Dense symmetric-positive-definite helpers shared by the variational
//! fitters and the Gibbs samplers.
//!
//! All precision/covariance work goes through one Cholesky routine with a
//! single, documented jitter policy: if factorization fails, add
//! `1e-10 * mean(diag)` to the diagonal and escalate by factors of 10 up to
//! `1e-6 * mean(diag)` before giving up. The factorization is reused for
//! solves, inverses, and log-determinants so no matrix is ever inverted
//! twice along one code path.

use nalgebra::{DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Relative size of the first jitter attempt.
const JITTER_START: f64 = 1e-10;
/// Relative size of the last jitter attempt before reporting failure.
const JITTER_MAX: f64 = 1e-6;

/// Cholesky factorization with the crate's jitter-escalation policy.
pub struct SpdChol {
    chol: nalgebra::linalg::Cholesky<f64, Dyn>,
    /// Absolute jitter that had to be added to the diagonal (0 if none).
    pub jitter: f64,
}

impl SpdChol {
    /// Factor `m`, escalating diagonal jitter if needed.
    pub fn new(m: &DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::Dimension(format!(
                "SPD factorization needs a square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical("non-finite entry in SPD matrix"));
        }
        if let Some(chol) = nalgebra::linalg::Cholesky::new(m.clone()) {
            return Ok(SpdChol { chol, jitter: 0.0 });
        }
        let mean_diag = m.diagonal().iter().map(|v| v.abs()).sum::<f64>() / m.nrows().max(1) as f64;
        let scale = if mean_diag > 0.0 { mean_diag } else { 1.0 };
        let mut rel = JITTER_START;
        while rel <= JITTER_MAX {
            let mut jittered = m.clone();
            for i in 0..m.nrows() {
                jittered[(i, i)] += rel * scale;
            }
            if let Some(chol) = nalgebra::linalg::Cholesky::new(jittered) {
                return Ok(SpdChol {
                    chol,
                    jitter: rel * scale,
                });
            }
            rel *= 10.0;
        }
        Err(Error::numerical(
            "matrix not SPD after jitter escalation to 1e-6 * mean(diag)",
        ))
    }

    /// Solve `m x = b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    /// Full inverse of the factored matrix.
    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }

    /// Log-determinant of the factored matrix.
    pub fn ln_det(&self) -> f64 {
        2.0 * self.chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
    }

    /// Lower-triangular factor `L` with `m = L L^T` (for MVN sampling).
    pub fn l(&self) -> DMatrix<f64> {
        self.chol.l()
    }
}

/// Invert an SPD matrix, returning the inverse and the log-determinant of
/// the *original* matrix.
pub fn spd_inverse_ln_det(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    let chol = SpdChol::new(m)?;
    Ok((chol.inverse(), chol.ln_det()))
}

/// Force exact symmetry, `(m + m^T) / 2`; cheap insurance before Cholesky
/// when a matrix was assembled from products that are symmetric only up to
/// rounding.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    0.5 * (m + m.transpose())
}

/// Row-wise quadratic forms `diag(C S C^T)`, i.e. `c_i^T S c_i` per row,
/// without materializing the full `n x n` product.
pub fn diag_quadform(c: &DMatrix<f64>, s: &DMatrix<f64>) -> DVector<f64> {
    let cs = c * s;
    DVector::from_iterator(
        c.nrows(),
        (0..c.nrows()).map(|i| cs.row(i).iter().zip(c.row(i).iter()).map(|(a, b)| a * b).sum()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn factor_solve_inverse_agree() {
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let chol = SpdChol::new(&m).unwrap();
        assert_eq!(chol.jitter, 0.0);
        let b = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let x = chol.solve(&b);
        assert_relative_eq!((&m * &x - &b).norm(), 0.0, epsilon = 1e-12);
        let inv = chol.inverse();
        assert_relative_eq!((&m * &inv - DMatrix::<f64>::identity(3, 3)).norm(), 0.0, epsilon = 1e-12);
        // ln det against direct determinant.
        assert_relative_eq!(chol.ln_det(), m.determinant().ln(), max_relative = 1e-12);
    }

    #[test]
    fn jitter_rescues_semidefinite() {
        // Rank-1 PSD matrix: plain Cholesky fails, jitter makes it work.
        let v = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let m = &v * v.transpose();
        let chol = SpdChol::new(&m).unwrap();
        assert!(chol.jitter > 0.0);
    }

    #[test]
    fn clearly_indefinite_fails() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -5.0]);
        assert!(SpdChol::new(&m).is_err());
    }

    #[test]
    fn diag_quadform_matches_dense() {
        let c = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 0.0, 1.0, -1.0, 0.5]);
        let s = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let d = diag_quadform(&c, &s);
        let full = &c * &s * c.transpose();
        for i in 0..3 {
            assert_relative_eq!(d[i], full[(i, i)], max_relative = 1e-14);
        }
    }
}
