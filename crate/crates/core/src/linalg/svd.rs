//! One-sided (Hestenes) Jacobi SVD for complex matrices.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{c64, ComplexMatrix};
use crate::error::{Error, Result};

/// Sweep cap before [`svd`] gives up.
pub const SVD_MAX_SWEEPS: usize = 80;

/// Thin SVD `m = left * diag(singulars) * right^H`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SvdFactors {
    pub left: ComplexMatrix,
    pub singulars: Vec<f64>,
    pub right: ComplexMatrix,
}

impl SvdFactors {
    /// `left * diag(singulars) * right^H`.
    pub fn reconstruct(&self) -> ComplexMatrix {
        self.reconstruct_with(&self.singulars)
    }

    /// Rebuild using replacement singular values (extra entries ignored,
    /// missing ones treated as zero).
    pub fn reconstruct_with(&self, values: &[f64]) -> ComplexMatrix {
        let (m, k) = self.left.shape();
        let n = self.right.rows();
        let mut out = ComplexMatrix::zeros(m, n);
        for (r, &s) in values.iter().enumerate().take(k) {
            if s == 0.0 {
                continue;
            }
            for i in 0..m {
                let u = self.left[(i, r)] * s;
                if u.re == 0.0 && u.im == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out[(i, j)] += u * self.right[(j, r)].conj();
                }
            }
        }
        out
    }

    pub fn rank_at(&self, rel_tol: f64) -> usize {
        let smax = self.singulars.first().copied().unwrap_or(0.0);
        self.singulars.iter().filter(|&&s| s > rel_tol * smax).count()
    }
}

/// Thin singular value decomposition.
///
/// Singular values come back sorted descending; both factor matrices have
/// orthonormal columns even when `m` is rank deficient.
pub fn svd(m: &ComplexMatrix) -> Result<SvdFactors> {
    if m.rows() == 0 || m.cols() == 0 {
        return Err(Error::contract("svd of an empty matrix"));
    }
    if !m.is_finite() {
        return Err(Error::contract("svd input has non-finite entries"));
    }
    if m.rows() >= m.cols() {
        jacobi_tall(m)
    } else {
        let f = jacobi_tall(&m.adjoint())?;
        Ok(SvdFactors {
            left: f.right,
            singulars: f.singulars,
            right: f.left,
        })
    }
}

fn jacobi_tall(a: &ComplexMatrix) -> Result<SvdFactors> {
    let (m, n) = a.shape();
    // column-major working copies
    let mut w: Vec<Vec<Complex64>> = (0..n).map(|j| a.column(j)).collect();
    let mut v: Vec<Vec<Complex64>> = (0..n)
        .map(|j| {
            let mut e = vec![c64(0.0, 0.0); n];
            e[j] = c64(1.0, 0.0);
            e
        })
        .collect();
    let mut norms: Vec<f64> = w.iter().map(|c| sq_norm(c)).collect();
    let orth_tol = m as f64 * f64::EPSILON;
    // columns this far below the total energy count as zero
    let floor = norms.iter().sum::<f64>() * (f64::EPSILON * f64::EPSILON);

    let mut converged = n == 1;
    let mut sweeps = 0;
    while !converged {
        if sweeps == SVD_MAX_SWEEPS {
            return Err(Error::NonConvergence {
                what: "jacobi svd",
                iterations: sweeps,
            });
        }
        sweeps += 1;
        let mut rotated = false;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let alpha = norms[p];
                let beta = norms[q];
                if alpha <= floor || beta <= floor {
                    continue;
                }
                let gamma: Complex64 = w[p].iter().zip(&w[q]).map(|(x, y)| x.conj() * y).sum();
                let g = gamma.norm();
                if g <= orth_tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let phase = gamma / g;
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                // [p, q] <- [p, e^{-iφ} q] * [[c, s], [-s, c]]
                let e = phase.conj();
                rotate(&mut w, p, q, c, s, e);
                rotate(&mut v, p, q, c, s, e);
                norms[p] = sq_norm(&w[p]);
                norms[q] = sq_norm(&w[q]);
            }
        }
        converged = !rotated;
    }

    let mut order: Vec<usize> = (0..n).collect();
    let sig: Vec<f64> = norms.iter().map(|x| x.sqrt()).collect();
    order.sort_by(|&i, &j| sig[j].total_cmp(&sig[i]).then(i.cmp(&j)));

    let mut left_cols: Vec<Vec<Complex64>> = Vec::with_capacity(n);
    let mut singulars = Vec::with_capacity(n);
    let mut right_cols = Vec::with_capacity(n);
    let mut deficient = Vec::new();
    for (k, &j) in order.iter().enumerate() {
        let s = sig[j];
        if s > 0.0 && norms[j] > floor {
            left_cols.push(w[j].iter().map(|z| z / s).collect());
        } else {
            left_cols.push(vec![c64(0.0, 0.0); m]);
            deficient.push(k);
        }
        singulars.push(s);
        right_cols.push(v[j].clone());
    }
    // Null directions: complete U with an orthonormal basis.
    for k in deficient {
        left_cols[k] = complement_vector(&left_cols, k, m);
    }
    Ok(SvdFactors {
        left: ComplexMatrix::from_columns(m, &left_cols),
        singulars,
        right: ComplexMatrix::from_columns(n, &right_cols),
    })
}

fn rotate(cols: &mut [Vec<Complex64>], p: usize, q: usize, c: f64, s: f64, e: Complex64) {
    let (lo, hi) = cols.split_at_mut(q);
    let cp = &mut lo[p];
    let cq = &mut hi[0];
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let a = *x;
        let b = *y * e;
        *x = a * c - b * s;
        *y = a * s + b * c;
    }
}

fn sq_norm(x: &[Complex64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum()
}

/// Unit vector orthogonal to every nonzero column in `cols` except slot `skip`.
fn complement_vector(cols: &[Vec<Complex64>], skip: usize, m: usize) -> Vec<Complex64> {
    for basis in 0..m {
        let mut v = vec![c64(0.0, 0.0); m];
        v[basis] = c64(1.0, 0.0);
        // two passes of Gram-Schmidt
        for _ in 0..2 {
            for (k, c) in cols.iter().enumerate() {
                if k == skip || sq_norm(c) == 0.0 {
                    continue;
                }
                let proj: Complex64 = c.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
                for (vi, ci) in v.iter_mut().zip(c) {
                    *vi -= proj * ci;
                }
            }
        }
        let nrm = sq_norm(&v).sqrt();
        if nrm > 1e-6 {
            return v.into_iter().map(|z| z / nrm).collect();
        }
    }
    unreachable!("no complement direction in dimension {m}")
}
