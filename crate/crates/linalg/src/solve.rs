use nalgebra::DMatrix;

use crate::{LinalgError, Matrix, Result};

/// Diagnostics returned alongside a least-squares solution.
#[derive(Debug, Clone, PartialEq)]
pub struct LstsqReport {
    /// Numerical rank used by the solve.
    pub rank: usize,
    /// `true` when the ridge fallback replaced a rank-deficient solve.
    pub ridge_fallback: bool,
    /// Frobenius norm of the residual `A X − B`.
    pub residual: f64,
}

/// Minimum-norm least squares `argmin ‖A x − b‖₂` via the SVD.
///
/// Singular values below `rcond · σ_max` are treated as zero.
pub fn lstsq(a: &Matrix, b: &[f64], rcond: f64) -> Result<(Vec<f64>, LstsqReport)> {
    let (x, report) = lstsq_multi(a, &Matrix::column_vector(b), rcond)?;
    Ok((x.column(0), report))
}

/// Multi-right-hand-side version of [`lstsq`].
pub fn lstsq_multi(a: &Matrix, b: &Matrix, rcond: f64) -> Result<(Matrix, LstsqReport)> {
    if a.rows() != b.rows() {
        return Err(LinalgError::Shape(format!("A has {} rows, B has {}", a.rows(), b.rows())));
    }
    if !a.all_finite() || !b.all_finite() {
        return Err(LinalgError::NonFinite("least-squares input".into()));
    }
    let an = a.to_nalgebra();
    let bn = b.to_nalgebra();
    let svd = an.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let eps = rcond * smax;
    let rank = svd.singular_values.iter().filter(|&&s| s > eps).count();
    if rank == 0 {
        return Err(LinalgError::Singular);
    }
    let x = svd.solve(&bn, eps).map_err(|_| LinalgError::Singular)?;
    let residual = (&an * &x - &bn).norm();
    Ok((Matrix::from_nalgebra(&x), LstsqReport { rank, ridge_fallback: false, residual }))
}

/// Ridge-regularized normal equations `(AᵀA + λI) X = AᵀB`, solved by Cholesky.
pub fn ridge_lstsq(a: &Matrix, b: &Matrix, lambda: f64) -> Result<(Matrix, LstsqReport)> {
    if a.rows() != b.rows() {
        return Err(LinalgError::Shape(format!("A has {} rows, B has {}", a.rows(), b.rows())));
    }
    let an = a.to_nalgebra();
    let bn = b.to_nalgebra();
    let at = an.transpose();
    let mut gram: DMatrix<f64> = &at * &an;
    for i in 0..gram.nrows() {
        gram[(i, i)] += lambda;
    }
    let rhs = &at * &bn;
    let chol = gram.cholesky().ok_or(LinalgError::Singular)?;
    let x = chol.solve(&rhs);
    let residual = (&an * &x - &bn).norm();
    Ok((
        Matrix::from_nalgebra(&x),
        LstsqReport { rank: a.cols().min(a.rows()), ridge_fallback: lambda > 0.0, residual },
    ))
}
