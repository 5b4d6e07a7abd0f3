use super::{svd, ComplexMatrix};
use crate::error::{Error, Result};

/// Relative cutoff for rank decisions inside the solvers.
pub(crate) const RANK_TOL: f64 = 1e-12;

/// Moore-Penrose pseudo-inverse. Singular values below `tol * σ_max` count as zero.
pub fn pseudo_inverse(m: &ComplexMatrix, tol: f64) -> Result<ComplexMatrix> {
    let f = svd(m)?;
    let smax = f.singulars.first().copied().unwrap_or(0.0);
    let (rows, cols) = m.shape();
    let mut out = ComplexMatrix::zeros(cols, rows);
    for (k, &s) in f.singulars.iter().enumerate() {
        if s <= tol * smax || s == 0.0 {
            continue;
        }
        let inv = 1.0 / s;
        for i in 0..cols {
            let vik = f.right[(i, k)] * inv;
            for j in 0..rows {
                out[(i, j)] += vik * f.left[(j, k)].conj();
            }
        }
    }
    Ok(out)
}

/// Minimum-norm least squares solution of `a x ≈ b`.
pub fn least_squares(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    if a.rows() != b.rows() {
        return Err(Error::DimensionMismatch {
            op: "least_squares",
            expected: format!("{} rows in b", a.rows()),
            found: format!("{} rows", b.rows()),
        });
    }
    let pinv = pseudo_inverse(a, RANK_TOL)?;
    Ok(&pinv * b)
}

/// Least squares against a single right-hand side vector.
pub fn least_squares_vec(a: &ComplexMatrix, b: &[num_complex::Complex64]) -> Result<Vec<num_complex::Complex64>> {
    let rhs = ComplexMatrix::from_col_major(b.len(), 1, b);
    Ok(least_squares(a, &rhs)?.column(0))
}
