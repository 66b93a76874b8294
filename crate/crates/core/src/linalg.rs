use alloc::string::String;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{DesignError, Result};

/// Information matrices with a larger condition number are treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

/// Cholesky factor of a symmetric positive-definite information matrix.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    chol: Cholesky<f64, Dyn>,
}

impl SpdFactor {
    /// Factor `m`, rejecting it when its spectral condition number exceeds
    /// [`MAX_CONDITION`]. `label` and `support` only feed the error message.
    pub fn new(m: &DMatrix<f64>, label: impl FnOnce() -> String, support: usize) -> Result<Self> {
        let condition = condition_number(m);
        if !(condition < MAX_CONDITION) {
            return Err(DesignError::SingularInformation {
                candidate: label(),
                support,
                condition,
            });
        }
        match Cholesky::new(m.clone()) {
            Some(chol) => Ok(Self { chol }),
            None => Err(DesignError::SingularInformation {
                candidate: label(),
                support,
                condition: f64::INFINITY,
            }),
        }
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(rhs)
    }

    pub fn solve_mat(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(rhs)
    }
}

/// `lambda_max / lambda_min` of a symmetric matrix; infinite when not positive definite.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 1.0;
    }
    if m.iter().any(|v| !v.is_finite()) {
        return f64::INFINITY;
    }
    let eig = SymmetricEigen::new(m.clone());
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Submatrix on the given row/column indices.
pub fn principal(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |r, c| m[(idx[r], idx[c])])
}
