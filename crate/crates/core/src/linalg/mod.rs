//! Dense complex matrices and the handful of kernels the estimators need.
//!
//! Storage is row-major `Complex64`. Everything here is plain value
//! semantics: operations allocate new matrices and never mutate their inputs.

mod solve;
mod svd;

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

pub use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub use solve::{least_squares, least_squares_vec, pseudo_inverse};
pub use svd::{svd, SvdFactors, SVD_MAX_SWEEPS};

use crate::error::{Error, Result};

/// Upper bound on the entry count of a Kronecker product built by [`kron`].
pub const KRON_MAX_ENTRIES: usize = 1 << 26;

/// Shorthand for building a complex scalar.
#[inline]
pub fn c64(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    /// Builds a matrix from row-major entries.
    ///
    /// Rejects empty shapes, a length mismatch, and non-finite entries.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::contract(format!("matrix shape {rows}x{cols} is empty")));
        }
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                op: "from_row_major",
                expected: format!("{} entries", rows * cols),
                found: format!("{} entries", data.len()),
            });
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::contract("matrix entries must be finite"));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from real row-major entries.
    pub fn from_real(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        Self::from_row_major(rows, cols, data.iter().map(|&x| c64(x, 0.0)).collect())
    }

    /// Zero matrix. Zero-sized shapes are allowed here (an empty support
    /// produces an `n x 0` atom block, for example).
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = c64(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Diagonal (possibly rectangular) matrix with the given real diagonal.
    pub fn from_diag(rows: usize, cols: usize, diag: &[f64]) -> Self {
        let mut m = Self::zeros(rows, cols);
        for (i, &d) in diag.iter().enumerate().take(rows.min(cols)) {
            m[(i, i)] = c64(d, 0.0);
        }
        m
    }

    /// Stacks equally long vectors as columns.
    pub fn from_columns(rows: usize, columns: &[Vec<Complex64>]) -> Self {
        let cols = columns.len();
        let mut m = Self::zeros(rows, cols);
        for (j, col) in columns.iter().enumerate() {
            assert_eq!(col.len(), rows, "column {j} has wrong length");
            for (i, &z) in col.iter().enumerate() {
                m[(i, j)] = z;
            }
        }
        m
    }

    /// Inverse of [`ComplexMatrix::vec`]: column-major reshape.
    pub fn from_col_major(rows: usize, cols: usize, v: &[Complex64]) -> Self {
        assert_eq!(v.len(), rows * cols);
        Self::from_fn(rows, cols, |i, j| v[j * rows + i])
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    /// Row-major entries.
    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn column(&self, j: usize) -> Vec<Complex64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Column-major vectorization, `vec(X)` in the usual Kronecker identities.
    pub fn vec(&self) -> Vec<Complex64> {
        let mut out = Vec::with_capacity(self.data.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                out.push(self[(i, j)]);
            }
        }
        out
    }

    /// Keeps the listed columns, in the given order.
    pub fn select_columns(&self, idx: &[usize]) -> Self {
        Self::from_fn(self.rows, idx.len(), |i, k| self[(i, idx[k])])
    }

    /// Keeps the listed rows, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        Self::from_fn(idx.len(), self.cols, |k, j| self[(idx[k], j)])
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn conj(&self) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| z * s).collect(),
        }
    }

    pub fn scale_real(&self, s: f64) -> Self {
        self.scale(c64(s, 0.0))
    }

    pub fn map(&self, mut f: impl FnMut(Complex64) -> Complex64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| f(z)).collect(),
        }
    }

    pub fn frobenius_norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.frobenius_norm_sqr().sqrt()
    }

    /// Matrix product with a shape check.
    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        if self.cols != rhs.rows {
            return Err(Error::DimensionMismatch {
                op: "matmul",
                expected: format!("{} rows on the right", self.cols),
                found: format!("{}x{}", rhs.rows, rhs.cols),
            });
        }
        Ok(self.mul_unchecked(rhs))
    }

    fn mul_unchecked(&self, rhs: &Self) -> Self {
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let orow = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a.re == 0.0 && a.im == 0.0 {
                    continue;
                }
                let rrow = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                for (o, &b) in orow.iter_mut().zip(rrow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `self * v` for a column vector.
    pub fn mul_vec(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(v.len(), self.cols, "mul_vec length mismatch");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(&a, &b)| a * b).sum())
            .collect()
    }

    /// `self^H * v` without materializing the adjoint.
    pub fn adjoint_mul_vec(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(v.len(), self.rows, "adjoint_mul_vec length mismatch");
        let mut out = vec![c64(0.0, 0.0); self.cols];
        for (i, &vi) in v.iter().enumerate() {
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += a.conj() * vi;
            }
        }
        out
    }

    /// Euclidean norm of every column.
    pub fn column_norms(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.cols];
        for i in 0..self.rows {
            for (a, z) in acc.iter_mut().zip(self.row(i)) {
                *a += z.norm_sqr();
            }
        }
        acc.into_iter().map(f64::sqrt).collect()
    }

    /// Largest entry-wise distance to `other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Number of nonzero entries.
    pub fn count_nonzero(&self) -> usize {
        self.data.iter().filter(|z| z.norm_sqr() > 0.0).count()
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;

    /// Panics on a shape mismatch; use [`ComplexMatrix::matmul`] for a checked product.
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(
            self.cols, rhs.rows,
            "matmul shape mismatch: {}x{} * {}x{}",
            self.rows, self.cols, rhs.rows, rhs.cols
        );
        self.mul_unchecked(rhs)
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.shape(), rhs.shape(), "add shape mismatch");
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.shape(), rhs.shape(), "sub shape mismatch");
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for z in self.row(i) {
                write!(f, "{:>9.4}{:+.4}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

/// Kronecker product `a ⊗ b`, refusing results above [`KRON_MAX_ENTRIES`].
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    kron_capped(a, b, KRON_MAX_ENTRIES)
}

/// Kronecker product with an explicit entry-count cap.
pub fn kron_capped(a: &ComplexMatrix, b: &ComplexMatrix, max_entries: usize) -> Result<ComplexMatrix> {
    if a.data.is_empty() || b.data.is_empty() {
        return Err(Error::contract("kron of an empty matrix"));
    }
    let rows = a.rows.checked_mul(b.rows);
    let cols = a.cols.checked_mul(b.cols);
    let entries = rows.zip(cols).and_then(|(r, c)| r.checked_mul(c));
    match entries {
        Some(n) if n <= max_entries => {}
        _ => {
            return Err(Error::contract(format!(
                "kron of {}x{} and {}x{} exceeds the {max_entries}-entry cap",
                a.rows, a.cols, b.rows, b.cols
            )))
        }
    }
    let (rows, cols) = (a.rows * b.rows, a.cols * b.cols);
    Ok(ComplexMatrix::from_fn(rows, cols, |i, j| {
        a[(i / b.rows, j / b.cols)] * b[(i % b.rows, j % b.cols)]
    }))
}

/// Inner product `x^H y`.
#[inline]
pub fn dot_conj(x: &[Complex64], y: &[Complex64]) -> Complex64 {
    x.iter().zip(y).map(|(a, b)| a.conj() * b).sum()
}

#[inline]
pub fn norm2(x: &[Complex64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}
