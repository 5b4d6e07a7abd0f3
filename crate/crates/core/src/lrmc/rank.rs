//! Rank estimators and the autoregressive rank predictor.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{least_squares_vec, Complex64, ComplexMatrix};

pub const MAX_AR_ORDER: usize = 3;
/// Only the most recent entries of the rank history feed the AR fit.
pub const AR_WINDOW: usize = 16;
/// Margin over the asymptotic top singular value of a pure-noise matrix.
pub const NOISE_EDGE_MARGIN: f64 = 1.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankTrack {
    pub history: Vec<usize>,
    pub ar_order: usize,
    pub ar_coeffs: Vec<f64>,
    pub scale: f64,
    pub xi: f64,
}

impl RankTrack {
    pub fn new(ar_order: usize, xi: f64) -> Result<Self> {
        if ar_order == 0 || ar_order > MAX_AR_ORDER {
            return Err(Error::contract(format!("ar_order must be in 1..={MAX_AR_ORDER}")));
        }
        check_xi(xi)?;
        Ok(Self {
            history: Vec::new(),
            ar_order,
            ar_coeffs: persistence(ar_order),
            scale: 0.0,
            xi,
        })
    }

    pub fn last(&self) -> Option<usize> {
        self.history.last().copied()
    }
}

fn persistence(order: usize) -> Vec<f64> {
    let mut a = vec![0.0; order];
    a[0] = 1.0;
    a
}

fn check_xi(xi: f64) -> Result<()> {
    if xi > 0.0 && xi < 1.0 {
        Ok(())
    } else {
        Err(Error::contract(format!("xi = {xi} outside (0, 1)")))
    }
}

/// Smallest `k` whose leading singular values hold a `xi` share of the total.
pub fn effective_rank(singulars: &[f64], xi: f64) -> Result<usize> {
    check_xi(xi)?;
    if singulars.is_empty() {
        return Err(Error::contract("effective_rank of an empty spectrum"));
    }
    let total: f64 = singulars.iter().sum();
    if total <= 0.0 {
        return Ok(1);
    }
    let target = xi * total * (1.0 - 1e-12);
    let mut acc = 0.0;
    for (k, s) in singulars.iter().enumerate() {
        acc += s;
        if acc >= target {
            return Ok(k + 1);
        }
    }
    Ok(singulars.len())
}

/// Position of the sharpest drop `σ_{i+1} / σ_i` (1-based, ties to the smaller `i`).
pub fn rank_gap_estimate(singulars: &[f64]) -> usize {
    let mut best = 1;
    let mut best_ratio = f64::INFINITY;
    for i in 0..singulars.len().saturating_sub(1) {
        if singulars[i] <= 0.0 {
            continue;
        }
        let r = singulars[i + 1] / singulars[i];
        if r < best_ratio {
            best_ratio = r;
            best = i + 1;
        }
    }
    best
}

/// Approximate largest singular value of a `rows × cols` matrix of i.i.d.
/// complex noise with per-entry variance `noise_var`, with margin.
pub fn noise_edge(noise_var: f64, rows: usize, cols: usize) -> f64 {
    noise_var.max(0.0).sqrt() * ((rows as f64).sqrt() + (cols as f64).sqrt()) * NOISE_EDGE_MARGIN
}

/// Rank of a noisy spectrum: singular values under the noise edge are
/// trimmed, then [`effective_rank`] runs on what remains.
pub fn estimate_rank(singulars: &[f64], noise_var: f64, dims: (usize, usize), xi: f64) -> Result<usize> {
    check_xi(xi)?;
    let smax = singulars.first().copied().unwrap_or(0.0);
    let floor = if noise_var > 0.0 {
        noise_edge(noise_var, dims.0, dims.1)
    } else {
        1e-6 * smax
    };
    let keep = singulars.iter().take_while(|&&s| s > floor).count();
    if keep == 0 {
        return Ok(1);
    }
    effective_rank(&singulars[..keep], xi)
}

/// Intercept-free least-squares AR fit on the recent rank history. Falls
/// back to persistence when the history is too short.
pub fn ar_fit(track: &RankTrack) -> RankTrack {
    let p = track.ar_order;
    let mut out = track.clone();
    let start = track.history.len().saturating_sub(AR_WINDOW);
    let h: Vec<f64> = track.history[start..].iter().map(|&r| r as f64).collect();
    if h.len() < p + 1 {
        out.ar_coeffs = persistence(p);
        out.scale = 0.0;
        return out;
    }
    let rows = h.len() - p;
    let mut x = ComplexMatrix::zeros(rows, p);
    let mut y = Vec::with_capacity(rows);
    for (r, t) in (p..h.len()).enumerate() {
        for j in 0..p {
            x[(r, j)] = Complex64::new(h[t - 1 - j], 0.0);
        }
        y.push(Complex64::new(h[t], 0.0));
    }
    match least_squares_vec(&x, &y) {
        Ok(a) => {
            out.ar_coeffs = a.iter().map(|z| z.re).collect();
            let pred = x.mul_vec(&a);
            let sse: f64 = pred.iter().zip(&y).map(|(p, t)| (p - t).norm_sqr()).sum();
            out.scale = (sse / rows as f64).sqrt();
        }
        Err(_) => {
            out.ar_coeffs = persistence(p);
            out.scale = 0.0;
        }
    }
    out
}

/// Deterministic one-step rank prediction, clamped to `[1, min(dims)]`.
pub fn ar_predict(track: &RankTrack, dims: (usize, usize)) -> usize {
    let Some(last) = track.last() else {
        return 1;
    };
    let cap = dims.0.min(dims.1).max(1);
    let n = track.history.len();
    let value = if n < track.ar_coeffs.len() {
        last as f64
    } else {
        track
            .ar_coeffs
            .iter()
            .enumerate()
            .map(|(j, a)| a * track.history[n - 1 - j] as f64)
            .sum()
    };
    let fl = value.floor();
    let rounded = if ((value - fl) - 0.5).abs() < 1e-12 {
        // exact tie: lean toward the previous rank
        if (fl - last as f64).abs() <= (fl + 1.0 - last as f64).abs() { fl } else { fl + 1.0 }
    } else {
        value.round()
    };
    if !rounded.is_finite() || rounded < 1.0 {
        return 1;
    }
    (rounded as usize).clamp(1, cap)
}
