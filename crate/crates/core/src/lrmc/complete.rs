//! Rank-truncated, soft-shrunk SVD completion of a punctured observation.

use serde::{Deserialize, Serialize};

use super::rank::{ar_fit, ar_predict, estimate_rank, RankTrack};
use crate::error::{Error, Result};
use crate::linalg::{pseudo_inverse, svd, Complex64, ComplexMatrix};
use crate::sensing::{block_rank, FrontEnd, Observation};

pub const DEFAULT_TOL_EPS: f64 = 1e-6;
pub const DEFAULT_MAX_ITERS: usize = 500;

/// Shrinkage weight scaled to the matrix size.
pub fn default_mu(rows: usize, cols: usize) -> f64 {
    1e-3 * ((rows * cols) as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RankPolicy {
    /// Start one below the AR prediction and grow while the spectrum of the
    /// current iterate asks for more.
    Adaptive,
    Fixed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompletionParams {
    pub max_iters: usize,
    pub tol_eps: f64,
    pub mu: f64,
    pub policy: RankPolicy,
}

impl CompletionParams {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            max_iters: DEFAULT_MAX_ITERS,
            tol_eps: DEFAULT_TOL_EPS,
            mu: default_mu(rows, cols),
            policy: RankPolicy::Adaptive,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResult {
    pub completed: ComplexMatrix,
    pub rank_used: usize,
    pub iterations: usize,
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    /// `‖P_Ω(Ỹ − Z)‖ / ‖P_Ω(Ỹ)‖` for the last low-rank iterate `Z`.
    pub observed_residual: f64,
}

#[inline]
pub fn soft_shrink(nu: f64, mu: f64) -> f64 {
    nu.signum() * (nu.abs() - mu).max(0.0)
}

/// Completes `obs.y` on the entries outside `obs.mask` and appends the
/// chosen rank to `track.history` (after refitting the AR model).
pub fn r1mc_complete(obs: &Observation, track: &mut RankTrack, params: &CompletionParams) -> Result<CompletionResult> {
    let res = complete_matrix(&obs.y, obs.mask.bits(), obs.noise_var, track, params)?;
    track.history.push(res.rank_used);
    *track = ar_fit(track);
    Ok(res)
}

/// Core loop on a raw matrix and row-major mask. Does not touch the history.
pub fn complete_matrix(
    y: &ComplexMatrix,
    mask: &[bool],
    noise_var: f64,
    track: &RankTrack,
    params: &CompletionParams,
) -> Result<CompletionResult> {
    let (rows, cols) = y.shape();
    if mask.len() != rows * cols {
        return Err(Error::DimensionMismatch {
            op: "r1mc_complete",
            expected: format!("{} mask bits", rows * cols),
            found: format!("{}", mask.len()),
        });
    }
    if !mask.iter().any(|&b| b) {
        return Err(Error::NoObservations);
    }
    if !y.is_finite() {
        return Err(Error::contract("observation has non-finite entries"));
    }
    if params.mu < 0.0 || params.mu.is_nan() {
        return Err(Error::contract("mu must be non-negative"));
    }
    let rmax = rows.min(cols);
    let xi = track.xi;

    // zero-filled start
    let data = ComplexMatrix::from_fn(rows, cols, |i, j| {
        if mask[i * cols + j] { y[(i, j)] } else { Complex64::new(0.0, 0.0) }
    });
    let data_norm = data.frobenius_norm();

    if mask.iter().all(|&b| b) {
        let rank_used = match params.policy {
            RankPolicy::Fixed(r) => r.clamp(1, rmax),
            RankPolicy::Adaptive => estimate_rank(&svd(&data)?.singulars, noise_var, (rows, cols), xi)?,
        };
        return Ok(CompletionResult {
            completed: data,
            rank_used,
            iterations: 0,
            objective_trace: Vec::new(),
            converged: true,
            observed_residual: 0.0,
        });
    }
    if data_norm == 0.0 {
        return Ok(CompletionResult {
            completed: data,
            rank_used: 1,
            iterations: 0,
            objective_trace: Vec::new(),
            converged: true,
            observed_residual: 0.0,
        });
    }

    let (mut r, mut settled) = match params.policy {
        RankPolicy::Fixed(r) => (r.clamp(1, rmax), true),
        RankPolicy::Adaptive => (ar_predict(track, (rows, cols)).saturating_sub(1).max(1), false),
    };

    let mut current = data.clone();
    let mut trace = Vec::new();
    let mut converged = false;
    let mut residual = 1.0;
    let mut iterations = 0;
    let stage_tol = 10.0 * params.tol_eps;

    for n in 1..=params.max_iters {
        iterations = n;
        let f = svd(&current)?;
        let shrunk: Vec<f64> = f.singulars.iter().take(r).map(|&s| soft_shrink(s, params.mu)).collect();
        let z = f.reconstruct_with(&shrunk);

        let mut obs_res = 0.0;
        let mut change = 0.0;
        let mut next = z.clone();
        for i in 0..rows {
            for j in 0..cols {
                if mask[i * cols + j] {
                    obs_res += (data[(i, j)] - z[(i, j)]).norm_sqr();
                    next[(i, j)] = data[(i, j)];
                }
                change += (next[(i, j)] - current[(i, j)]).norm_sqr();
            }
        }
        let nuclear: f64 = shrunk.iter().sum();
        trace.push(0.5 * obs_res + params.mu * nuclear);
        residual = obs_res.sqrt() / data_norm;
        let change = change.sqrt() / next.frobenius_norm().max(f64::MIN_POSITIVE);
        current = next;

        if !settled && (residual < stage_tol || change < stage_tol) {
            let est = estimate_rank(&svd(&current)?.singulars, noise_var, (rows, cols), xi)?;
            if est > r && r < rmax {
                r += 1;
                continue;
            }
            settled = true;
        }
        if settled && (residual < params.tol_eps || change < params.tol_eps) {
            converged = true;
            break;
        }
    }

    Ok(CompletionResult {
        completed: current,
        rank_used: r,
        iterations,
        objective_trace: trace,
        converged,
        observed_residual: residual,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinedEstimate {
    pub h: ComplexMatrix,
    /// Set when either front-end block has rank below its RF-chain count.
    pub ill_conditioned: bool,
}

/// `Ĥ = pinv(Wᴴ) Ŷ pinv(F Sᵀ)`.
pub fn refine_channel_estimate(res: &CompletionResult, fe: &FrontEnd) -> Result<RefinedEstimate> {
    refine_matrix(&res.completed, fe)
}

pub fn refine_matrix(completed: &ComplexMatrix, fe: &FrontEnd) -> Result<RefinedEstimate> {
    let wh = fe.w.adjoint();
    let tx = fe.tx_block();
    let h = pseudo_inverse(&wh, 1e-10)?
        .matmul(completed)?
        .matmul(&pseudo_inverse(&tx, 1e-10)?)?;
    let ill_conditioned = block_rank(&wh)? < fe.m_ms() || block_rank(&tx)? < fe.m_bs();
    Ok(RefinedEstimate { h, ill_conditioned })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c64;
    use crate::rng::rng_from_seed;
    use crate::sensing::{make_front_end, Mask};
    use crate::testutil::random_matrix;
    use rand::seq::index::sample;

    fn random_mask(rows: usize, cols: usize, keep: usize, seed: u64) -> Vec<bool> {
        let mut rng = rng_from_seed(seed);
        let mut m = vec![false; rows * cols];
        for k in sample(&mut rng, rows * cols, keep) {
            m[k] = true;
        }
        m
    }

    fn rel_err(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
        (a - b).frobenius_norm() / b.frobenius_norm()
    }

    fn params(mu: f64, policy: RankPolicy, max_iters: usize) -> CompletionParams {
        CompletionParams { max_iters, tol_eps: 1e-10, mu, policy }
    }

    #[test]
    fn soft_shrink_examples() {
        assert_eq!(soft_shrink(3.0, 1.0), 2.0);
        assert_eq!(soft_shrink(-0.5, 1.0), 0.0);
        assert_eq!(soft_shrink(-3.0, 1.0), -2.0);
    }

    #[test]
    fn full_observation_is_identity() {
        let y = random_matrix(6, 5, 1);
        let track = RankTrack::new(1, 0.95).unwrap();
        let r = complete_matrix(&y, &[true; 30], 0.0, &track, &CompletionParams::new(6, 5)).unwrap();
        assert_eq!(r.completed, y);
        assert_eq!(r.iterations, 0);
        assert!(r.converged);
        assert_eq!(r.observed_residual, 0.0);
    }

    #[test]
    fn rank_one_eight_by_eight_sixty_percent() {
        let u = random_matrix(8, 1, 2).scale_real(1.0 / random_matrix(8, 1, 2).frobenius_norm());
        let v = random_matrix(1, 8, 3).scale_real(1.0 / random_matrix(1, 8, 3).frobenius_norm());
        let truth = &u * &v;
        let mask = random_mask(8, 8, 38, 4);
        let track = RankTrack::new(1, 0.95).unwrap();
        let r = complete_matrix(&truth, &mask, 0.0, &track, &params(0.0, RankPolicy::Fixed(1), 200)).unwrap();
        assert!(r.iterations <= 200);
        assert!(rel_err(&r.completed, &truth) <= 1e-6, "{}", rel_err(&r.completed, &truth));
    }

    #[test]
    fn adaptive_rank_grows_to_truth() {
        let truth = &random_matrix(16, 3, 5) * &random_matrix(3, 16, 6);
        let mask = random_mask(16, 16, 200, 7);
        let track = RankTrack::new(1, 0.95).unwrap();
        let r = complete_matrix(&truth, &mask, 0.0, &track, &params(0.0, RankPolicy::Adaptive, 2000)).unwrap();
        assert_eq!(r.rank_used, 3);
        assert!(r.converged);
        assert!(rel_err(&r.completed, &truth) < 1e-6);
    }

    #[test]
    fn observed_entries_are_bit_identical_and_trace_monotone() {
        for seed in 0..10 {
            let truth = &random_matrix(10, 2, seed) * &random_matrix(2, 12, seed + 100);
            let noisy = truth.map(|z| z + c64(1e-2, -1e-2));
            let mask = random_mask(10, 12, 80, seed);
            let track = RankTrack::new(1, 0.95).unwrap();
            let r = complete_matrix(&noisy, &mask, 1e-4, &track, &params(0.05, RankPolicy::Adaptive, 300)).unwrap();
            for i in 0..10 {
                for j in 0..12 {
                    if mask[i * 12 + j] {
                        assert_eq!(r.completed[(i, j)], noisy[(i, j)]);
                    }
                }
            }
            for w in r.objective_trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-9 * w[0].abs().max(1.0), "{w:?}");
            }
        }
    }

    #[test]
    fn errors() {
        let y = random_matrix(3, 3, 1);
        let track = RankTrack::new(1, 0.95).unwrap();
        let p = CompletionParams::new(3, 3);
        assert!(matches!(complete_matrix(&y, &[false; 9], 0.0, &track, &p), Err(Error::NoObservations)));
        let mut bad = y.clone();
        bad[(0, 0)] = c64(f64::NAN, 0.0);
        // construction via IndexMut bypasses the finiteness check
        assert!(matches!(complete_matrix(&bad, &[true; 9], 0.0, &track, &p), Err(Error::Contract(_))));
    }

    #[test]
    fn history_records_rank() {
        let fe = make_front_end(4, 4, 4, 4, 0).unwrap();
        let y = &random_matrix(4, 1, 1) * &random_matrix(1, 4, 2);
        let mut mask = Mask::full(4, 4);
        mask.set(0, 0, false);
        let obs = Observation { y, mask: mask.clone(), measured: Mask::full(4, 4), front_end: fe, noise_var: 0.0, time_index: 0 };
        let mut track = RankTrack::new(1, 0.95).unwrap();
        let r = r1mc_complete(&obs, &mut track, &CompletionParams::new(4, 4)).unwrap();
        assert_eq!(track.history, vec![r.rank_used]);
        assert_eq!(r.rank_used, 1);
    }

    #[test]
    fn refine_inverts_unitary_front_end() {
        // DFT-like combiner and precoder are unitary.
        let cfg = crate::chanmodel::ChannelConfig::default();
        let d = crate::chanmodel::build_dictionary(&cfg, 8, 8).unwrap();
        let fe = FrontEnd { f: d.theta_bs.clone(), w: d.theta_ms.clone(), training: ComplexMatrix::identity(8) };
        let h = random_matrix(8, 8, 3);
        let y = crate::sensing::noiseless_measurement(&h, &fe).unwrap();
        let est = refine_matrix(&y, &fe).unwrap();
        assert!(est.h.max_abs_diff(&h) < 1e-10);
        assert!(!est.ill_conditioned);
        let zero = refine_matrix(&ComplexMatrix::zeros(8, 8), &fe).unwrap();
        assert_eq!(zero.h.frobenius_norm(), 0.0);
    }

    #[test]
    fn refine_with_fewer_combiners_is_orthogonal_projection() {
        let fe = make_front_end(8, 8, 8, 4, 11).unwrap();
        let h = random_matrix(8, 8, 12);
        let y = crate::sensing::noiseless_measurement(&h, &fe).unwrap();
        let est = refine_matrix(&y, &fe).unwrap();
        // the error lives in the null space of Wᴴ
        let resid = &h - &est.h;
        let leak = (&fe.w.adjoint() * &resid).frobenius_norm();
        assert!(leak < 1e-9 * h.frobenius_norm(), "{leak}");
        // and the estimate lies in range(W)
        let p = &fe.w * &pseudo_inverse(&fe.w, 1e-10).unwrap();
        assert!((&p * &est.h).max_abs_diff(&est.h) < 1e-9);
    }
}
