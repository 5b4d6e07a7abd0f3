//! Phase II: rank-aware batch OMP, the gain-only fast path, and channel
//! reconstruction from the virtual (angular) channel.

use serde::{Deserialize, Serialize};

use crate::chanmodel::AngularDictionary;
use crate::error::{Error, Result};
use crate::linalg::{dot_conj, least_squares_vec, norm2, Complex64, ComplexMatrix};
use crate::sensing::FrontEnd;

pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_GAIN_ONLY_THRESHOLD: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseEstimate {
    /// Atom indices into `kron(conj(Θ_BS), Θ_MS)`, in selection order.
    pub support: Vec<usize>,
    pub gains: Vec<Complex64>,
    /// `L1 × L2` virtual channel, zero off the support.
    pub virtual_channel: ComplexMatrix,
    pub reconstructed: ComplexMatrix,
    pub residual_norm: f64,
    pub rank_budget: usize,
    /// Pursuit rounds; zero for gain-only updates.
    pub iterations: usize,
    /// `(aoa, aod)` of each support atom, for carrying supports across
    /// dictionaries.
    pub atom_angles: Vec<(f64, f64)>,
}

impl SparseEstimate {
    pub fn empty(dict: &AngularDictionary, rank_budget: usize) -> Self {
        Self {
            support: Vec::new(),
            gains: Vec::new(),
            virtual_channel: ComplexMatrix::zeros(dict.l1(), dict.l2()),
            reconstructed: ComplexMatrix::zeros(dict.n_ms(), dict.n_bs()),
            residual_norm: 0.0,
            rank_budget,
            iterations: 0,
            atom_angles: Vec::new(),
        }
    }

    pub fn from_support(
        dict: &AngularDictionary,
        support: Vec<usize>,
        gains: Vec<Complex64>,
        residual_norm: f64,
        rank_budget: usize,
        iterations: usize,
    ) -> Self {
        let mut virtual_channel = ComplexMatrix::zeros(dict.l1(), dict.l2());
        let mut atom_angles = Vec::with_capacity(support.len());
        for (&a, &g) in support.iter().zip(&gains) {
            let (i, j) = dict.decode_atom(a);
            virtual_channel[(i, j)] += g;
            atom_angles.push((dict.grid_aoas[i], dict.grid_aods[j]));
        }
        let mut est = Self {
            support,
            gains,
            virtual_channel,
            reconstructed: ComplexMatrix::zeros(dict.n_ms(), dict.n_bs()),
            residual_norm,
            rank_budget,
            iterations,
            atom_angles,
        };
        est.reconstructed = reconstruct(&est, dict);
        est
    }
}

/// Output of the pursuit on a generic linear model `y ≈ Φ x`.
#[derive(Debug, Clone, PartialEq)]
pub struct PursuitOutput {
    pub support: Vec<usize>,
    pub gains: Vec<Complex64>,
    pub residual_norm: f64,
    pub iterations: usize,
    /// `‖r‖` after each round, starting with `‖y‖`.
    pub residual_history: Vec<f64>,
}

fn restricted_ls(y: &[Complex64], phi: &ComplexMatrix, support: &[usize]) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
    let sub = phi.select_columns(support);
    let x = least_squares_vec(&sub, y)?;
    let fit = sub.mul_vec(&x);
    let r = y.iter().zip(&fit).map(|(a, b)| a - b).collect();
    Ok((x, r))
}

/// Batch OMP with exactly `budget` kept atoms. Each round adds the `batch`
/// unselected atoms of largest normalized correlation with the residual
/// (lowest index wins ties) and refits the gains by least squares.
pub fn pursuit(y: &[Complex64], phi: &ComplexMatrix, budget: usize, batch: usize, tol: f64) -> Result<PursuitOutput> {
    if phi.rows() != y.len() {
        return Err(Error::DimensionMismatch {
            op: "pursuit",
            expected: format!("{} measurements", phi.rows()),
            found: format!("{}", y.len()),
        });
    }
    if budget == 0 || batch == 0 {
        return Err(Error::contract("rank budget and batch must be at least 1"));
    }
    if budget > phi.cols() {
        return Err(Error::contract(format!("rank budget {budget} exceeds {} atoms", phi.cols())));
    }
    let y_norm = norm2(y);
    let mut out = PursuitOutput {
        support: Vec::new(),
        gains: Vec::new(),
        residual_norm: y_norm,
        iterations: 0,
        residual_history: vec![y_norm],
    };
    if y_norm == 0.0 {
        return Ok(out);
    }
    let col_norms = phi.column_norms();
    let mut selected = vec![false; phi.cols()];
    let mut residual = y.to_vec();
    while out.support.len() < budget && out.residual_norm > tol * y_norm {
        let corr = phi.adjoint_mul_vec(&residual);
        let mut order: Vec<(f64, usize)> = corr
            .iter()
            .enumerate()
            .filter(|&(j, _)| !selected[j] && col_norms[j] > 0.0)
            .map(|(j, c)| (c.norm() / col_norms[j], j))
            .collect();
        if order.is_empty() {
            break;
        }
        order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for &(_, j) in order.iter().take(batch) {
            selected[j] = true;
            out.support.push(j);
        }
        let (x, r) = restricted_ls(y, phi, &out.support)?;
        out.gains = x;
        residual = r;
        out.residual_norm = norm2(&residual);
        out.iterations += 1;
        out.residual_history.push(out.residual_norm);
    }
    if out.support.len() > budget {
        let mut idx: Vec<usize> = (0..out.support.len()).collect();
        idx.sort_by(|&a, &b| out.gains[b].norm().total_cmp(&out.gains[a].norm()).then(a.cmp(&b)));
        idx.truncate(budget);
        idx.sort_unstable();
        out.support = idx.iter().map(|&k| out.support[k]).collect();
        let (x, r) = restricted_ls(y, phi, &out.support)?;
        out.gains = x;
        out.residual_norm = norm2(&r);
    }
    Ok(out)
}

/// RA-BOMP on `vec(target) ≈ A x` with `A = kron(conj(Θ_BS), Θ_MS)`.
pub fn ra_bomp(target: &ComplexMatrix, dict: &AngularDictionary, rank_budget: usize, batch: usize, tol: f64) -> Result<SparseEstimate> {
    check_target(target, dict)?;
    let a = dict.kron_dictionary()?;
    let p = pursuit(&target.vec(), &a, rank_budget, batch, tol)?;
    Ok(SparseEstimate::from_support(dict, p.support, p.gains, p.residual_norm, rank_budget, p.iterations))
}

fn check_target(target: &ComplexMatrix, dict: &AngularDictionary) -> Result<()> {
    if target.shape() != (dict.n_ms(), dict.n_bs()) {
        return Err(Error::DimensionMismatch {
            op: "recovery",
            expected: format!("{}x{}", dict.n_ms(), dict.n_bs()),
            found: format!("{:?}", target.shape()),
        });
    }
    Ok(())
}

/// Least-squares gains of `y` on a frozen support of `phi`.
pub fn gain_only_model(y: &[Complex64], phi: &ComplexMatrix, support: &[usize]) -> Result<(Vec<Complex64>, f64)> {
    let (x, r) = restricted_ls(y, phi, support)?;
    Ok((x, norm2(&r)))
}

/// Refits the gains of `prev.support` to `target`; falls back to a full
/// pursuit when the support is empty.
pub fn gain_only_update(prev: &SparseEstimate, target: &ComplexMatrix, dict: &AngularDictionary) -> Result<SparseEstimate> {
    check_target(target, dict)?;
    if prev.support.is_empty() {
        return ra_bomp(target, dict, prev.rank_budget.max(1), 1, DEFAULT_TOL);
    }
    let a = dict.kron_dictionary()?;
    let (gains, res) = gain_only_model(&target.vec(), &a, &prev.support)?;
    Ok(SparseEstimate::from_support(dict, prev.support.clone(), gains, res, prev.rank_budget, 0))
}

/// Share of `‖y‖²` captured by the span of the given atoms.
pub fn projection_fraction(y: &[Complex64], phi: &ComplexMatrix, support: &[usize]) -> Result<f64> {
    let e = norm2(y).powi(2);
    if e == 0.0 {
        return Ok(1.0);
    }
    if support.is_empty() {
        return Ok(0.0);
    }
    let (_, r) = restricted_ls(y, phi, support)?;
    Ok((1.0 - norm2(&r).powi(2) / e).clamp(0.0, 1.0))
}

pub fn should_gain_only(
    rank_t: usize,
    rank_prev: usize,
    prev: &SparseEstimate,
    target: &ComplexMatrix,
    dict: &AngularDictionary,
    corr_threshold: f64,
) -> Result<bool> {
    if rank_t != rank_prev || prev.support.is_empty() {
        return Ok(false);
    }
    check_target(target, dict)?;
    let a = dict.kron_dictionary()?;
    Ok(projection_fraction(&target.vec(), &a, &prev.support)? >= corr_threshold)
}

/// `𝒳 A` for a front end and dictionary, built column by column as
/// `vec((Wᴴ θ_ms,i)(θ_bs,jᴴ F Sᵀ))` without forming either factor.
pub fn composite_dictionary(fe: &FrontEnd, dict: &AngularDictionary) -> Result<ComplexMatrix> {
    if fe.n_ms() != dict.n_ms() || fe.n_bs() != dict.n_bs() {
        return Err(Error::DimensionMismatch {
            op: "composite_dictionary",
            expected: format!("{}x{} antennas", fe.n_ms(), fe.n_bs()),
            found: format!("{}x{}", dict.n_ms(), dict.n_bs()),
        });
    }
    let u = fe.w.adjoint().matmul(&dict.theta_ms)?; // m_ms × L1
    let v = dict.theta_bs.adjoint().matmul(&fe.tx_block())?; // L2 × m_bs
    let (m_ms, m_bs) = (fe.m_ms(), fe.m_bs());
    let (l1, l2) = (dict.l1(), dict.l2());
    let mut out = ComplexMatrix::zeros(m_ms * m_bs, l1 * l2);
    for j in 0..l2 {
        for i in 0..l1 {
            let c = dict.atom_index(i, j);
            for b in 0..m_bs {
                let vb = v[(j, b)];
                for a in 0..m_ms {
                    out[(b * m_ms + a, c)] = u[(a, i)] * vb;
                }
            }
        }
    }
    Ok(out)
}

/// Maps atom angles onto the nearest atoms of another dictionary.
pub fn map_support(angles: &[(f64, f64)], dict: &AngularDictionary) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::with_capacity(angles.len());
    for &(aoa, aod) in angles {
        let a = dict.atom_index(dict.nearest_aoa(aoa), dict.nearest_aod(aod));
        if !out.contains(&a) {
            out.push(a);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEstimate {
    pub aoa: f64,
    pub aod: f64,
    pub gain: Complex64,
}

/// Support atoms as grid angles with gains, strongest first.
pub fn extract_parameters(est: &SparseEstimate, dict: &AngularDictionary) -> Vec<PathEstimate> {
    let mut out: Vec<PathEstimate> = est
        .support
        .iter()
        .zip(&est.gains)
        .map(|(&a, &gain)| {
            let (i, j) = dict.decode_atom(a);
            PathEstimate { aoa: dict.grid_aoas[i], aod: dict.grid_aods[j], gain }
        })
        .collect();
    out.sort_by(|a, b| b.gain.norm().total_cmp(&a.gain.norm()));
    out
}

/// `Θ_MS H̄ Θ_BSᴴ`.
pub fn reconstruct(est: &SparseEstimate, dict: &AngularDictionary) -> ComplexMatrix {
    let mut out = ComplexMatrix::zeros(dict.n_ms(), dict.n_bs());
    for i in 0..dict.l1() {
        for j in 0..dict.l2() {
            let g = est.virtual_channel[(i, j)];
            if g.norm_sqr() == 0.0 {
                continue;
            }
            for a in 0..dict.n_ms() {
                let lhs = g * dict.theta_ms[(a, i)];
                for b in 0..dict.n_bs() {
                    out[(a, b)] += lhs * dict.theta_bs[(b, j)].conj();
                }
            }
        }
    }
    out
}

/// Residual orthogonality measure `‖A_Jᴴ r‖`, exposed for tests.
pub fn residual_correlation(y: &[Complex64], phi: &ComplexMatrix, support: &[usize], gains: &[Complex64]) -> f64 {
    let sub = phi.select_columns(support);
    let fit = sub.mul_vec(gains);
    let r: Vec<Complex64> = y.iter().zip(&fit).map(|(a, b)| a - b).collect();
    (0..sub.cols()).map(|j| dot_conj(&sub.column(j), &r).norm_sqr()).sum::<f64>().sqrt()
}
