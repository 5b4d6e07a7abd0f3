//! Rank-aware measurement design: focus the next receive grid and combiner
//! on the dominant angular clusters of the current estimate.

use std::f64::consts::FRAC_PI_2;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::chanmodel::{steering_unchecked, AngularDictionary};
use crate::error::{Error, Result};
use crate::linalg::{Complex64, ComplexMatrix};
use crate::recovery::SparseEstimate;
use crate::rng::rng_from_seed;
use crate::sensing::random_phase_matrix;

const EDGE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RammdConfig {
    pub enabled: bool,
    /// Full width of each focus window, degrees.
    pub delta_theta_deg: f64,
    /// Points per focus window; `None` uses the base dictionary's L1.
    pub sub_grid_size: Option<usize>,
    /// Randomized exploration atoms; `None` uses `max(2, ⌈0.1·L1⌉)`.
    pub explore_count: Option<usize>,
    /// Cap on receive atoms of the refined dictionary.
    pub max_rx_atoms: usize,
    pub spacing_ratio: f64,
}

impl Default for RammdConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            delta_theta_deg: 5.0,
            sub_grid_size: None,
            explore_count: None,
            max_rx_atoms: 256,
            spacing_ratio: 0.5,
        }
    }
}

impl RammdConfig {
    pub fn delta_theta_rad(&self) -> f64 {
        self.delta_theta_deg.to_radians()
    }

    pub fn sub_grid_for(&self, base_l1: usize) -> usize {
        self.sub_grid_size.unwrap_or(base_l1).max(2)
    }

    pub fn explore_for(&self, l1: usize) -> usize {
        self.explore_count.unwrap_or_else(|| 2.max((0.1 * l1 as f64).ceil() as usize))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta_theta_deg > 0.0 && self.delta_theta_deg < 180.0) {
            return Err(Error::Config("delta_theta_deg must lie in (0, 180)".into()));
        }
        if self.max_rx_atoms < 2 {
            return Err(Error::Config("max_rx_atoms must be at least 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngularFocus {
    pub centroids: Vec<f64>,
    pub half_width: f64,
    pub refined_grids: Vec<Vec<f64>>,
    pub explore_count: usize,
}

impl AngularFocus {
    /// `[θ_min, θ_max]` of window `i`, clipped to the visible range.
    pub fn window(&self, i: usize) -> (f64, f64) {
        focus_window(self.centroids[i], self.half_width)
    }

    pub fn contains(&self, theta: f64) -> bool {
        (0..self.centroids.len()).any(|i| {
            let (lo, hi) = self.window(i);
            theta >= lo && theta <= hi
        })
    }
}

fn focus_window(c: f64, half: f64) -> (f64, f64) {
    let lim = FRAC_PI_2 - EDGE;
    ((c - half).max(-lim), (c + half).min(lim))
}

/// `θ̃_ℓ = (θ_max − θ_min)·ℓ/L + θ_min`, `ℓ = 1..=L`.
pub fn sub_grid(lo: f64, hi: f64, l: usize) -> Vec<f64> {
    (1..=l).map(|k| (hi - lo) * k as f64 / l as f64 + lo).collect()
}

/// Per-cell energies `|θ_ms,iᴴ Ĥ θ_bs,j|`, row-major `L1 × L2`.
pub fn angular_energy_map(h_est: &ComplexMatrix, dict: &AngularDictionary) -> Result<Vec<f64>> {
    if h_est.shape() != (dict.n_ms(), dict.n_bs()) {
        return Err(Error::DimensionMismatch {
            op: "angular_energy",
            expected: format!("{}x{}", dict.n_ms(), dict.n_bs()),
            found: format!("{:?}", h_est.shape()),
        });
    }
    let proj = dict.theta_ms.adjoint().matmul(h_est)?.matmul(&dict.theta_bs)?;
    Ok(proj.as_slice().iter().map(|z| z.norm()).collect())
}

/// Per-AoA energy profile: the map summed over AoD indices.
pub fn angular_energy(h_est: &ComplexMatrix, dict: &AngularDictionary) -> Result<Vec<f64>> {
    let map = angular_energy_map(h_est, dict)?;
    Ok(map.chunks(dict.l2()).map(|row| row.iter().sum()).collect())
}

/// Greedy peak picking over the AoA grid of `dict`. Local maxima of the
/// profile are taken first so main-lobe shoulders of a strong path do not
/// crowd out weaker paths. A candidate closer than the full window width to
/// an already chosen centroid is skipped.
pub fn select_centroids(profile: &[f64], rank_budget: usize, dict: &AngularDictionary, cfg: &RammdConfig) -> Result<AngularFocus> {
    select_centroids_preferring(profile, rank_budget, dict, cfg, &[])
}

/// As [`select_centroids`], but grid indices in `preferred` (the AoAs of
/// the detected paths) rank ahead of every other candidate.
pub fn select_centroids_preferring(
    profile: &[f64],
    rank_budget: usize,
    dict: &AngularDictionary,
    cfg: &RammdConfig,
    preferred: &[usize],
) -> Result<AngularFocus> {
    if profile.len() != dict.l1() {
        return Err(Error::DimensionMismatch {
            op: "select_centroids",
            expected: format!("{} profile entries", dict.l1()),
            found: format!("{}", profile.len()),
        });
    }
    if rank_budget == 0 || rank_budget > dict.l1() {
        return Err(Error::contract(format!("rank budget {rank_budget} outside 1..={}", dict.l1())));
    }
    let guard = cfg.delta_theta_rad();
    let mut order: Vec<usize> = (0..profile.len()).collect();
    let peak = |i: usize| {
        (i == 0 || profile[i] >= profile[i - 1]) && (i + 1 == profile.len() || profile[i] >= profile[i + 1])
    };
    let tier = |i: usize| if preferred.contains(&i) { 0 } else if peak(i) { 1 } else { 2 };
    order.sort_by(|&a, &b| tier(a).cmp(&tier(b)).then(profile[b].total_cmp(&profile[a])).then(a.cmp(&b)));
    let mut centroids: Vec<f64> = Vec::with_capacity(rank_budget);
    for i in order {
        if centroids.len() == rank_budget {
            break;
        }
        let theta = dict.grid_aoas[i];
        if centroids.iter().all(|c| (c - theta).abs() >= guard) {
            centroids.push(theta);
        }
    }
    let half_width = guard / 2.0;
    let l = cfg.sub_grid_for(dict.l1());
    let refined_grids = centroids
        .iter()
        .map(|&c| {
            let (lo, hi) = focus_window(c, half_width);
            sub_grid(lo, hi, l)
        })
        .collect();
    Ok(AngularFocus {
        centroids,
        half_width,
        refined_grids,
        explore_count: cfg.explore_for(l),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinedDictionary {
    pub dict: AngularDictionary,
    pub explore_angles: Vec<f64>,
    /// Set when the windows left no room and exploration angles were drawn
    /// without the outside-window constraint.
    pub windows_cover_range: bool,
}

/// Receive grid = focus sub-grids plus exploration angles outside every
/// window; transmit grid copied from `base`.
pub fn refine_dictionary(focus: &AngularFocus, base: &AngularDictionary, cfg: &RammdConfig, rng_seed: u64) -> Result<RefinedDictionary> {
    if focus.centroids.is_empty() {
        return Err(Error::contract("focus has no centroids"));
    }
    let mut rng = rng_from_seed(rng_seed);
    let n_win = focus.centroids.len();
    let explore = focus.explore_count.min(cfg.max_rx_atoms.saturating_sub(2 * n_win));
    let per_window = focus.refined_grids.iter().map(|g| g.len()).max().unwrap_or(2);
    let per_window = per_window.min((cfg.max_rx_atoms - explore) / n_win).max(2);

    let mut angles: Vec<f64> = Vec::with_capacity(n_win * per_window + explore);
    for (i, g) in focus.refined_grids.iter().enumerate() {
        if g.len() == per_window {
            angles.extend_from_slice(g);
        } else {
            let (lo, hi) = focus.window(i);
            angles.extend(sub_grid(lo, hi, per_window));
        }
    }

    let lim = FRAC_PI_2 - EDGE;
    let mut explore_angles = Vec::with_capacity(explore);
    let mut windows_cover_range = false;
    for _ in 0..explore {
        let mut theta = rng.random_range(-lim..lim);
        let mut tries = 0;
        while focus.contains(theta) && tries < 10_000 {
            theta = rng.random_range(-lim..lim);
            tries += 1;
        }
        if focus.contains(theta) {
            windows_cover_range = true;
        }
        explore_angles.push(theta);
    }
    angles.extend_from_slice(&explore_angles);
    angles.sort_by(f64::total_cmp);
    angles.dedup_by(|a, b| (*a - *b).abs() < 1e-12);

    let dict = AngularDictionary::from_angles(base.n_ms(), angles, base.n_bs(), base.grid_aods.clone(), cfg.spacing_ratio)?;
    Ok(RefinedDictionary { dict, explore_angles, windows_cover_range })
}

/// Combiner for the next instance: one steering beam per centroid, the
/// remaining RF chains on random phases.
pub fn focused_combiner(focus: &AngularFocus, n_ms: usize, m_ms: usize, spacing_ratio: f64, rng_seed: u64) -> ComplexMatrix {
    let mut rng = rng_from_seed(rng_seed);
    let random = random_phase_matrix(n_ms, m_ms, &mut rng);
    let mut cols: Vec<Vec<Complex64>> = Vec::with_capacity(m_ms);
    for &c in focus.centroids.iter().take(m_ms) {
        cols.push(steering_unchecked(c, n_ms, spacing_ratio));
    }
    let mut k = 0;
    while cols.len() < m_ms {
        cols.push(random.column(k));
        k += 1;
    }
    ComplexMatrix::from_columns(n_ms, &cols)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RammdOutput {
    pub dict: AngularDictionary,
    /// `None` in pass-through mode.
    pub combiner: Option<ComplexMatrix>,
    pub focus: Option<AngularFocus>,
    pub windows_cover_range: bool,
}

/// Energy profile → centroids → refined dictionary and combiner.
///
/// The profile is evaluated on the base receive grid merged with the AoAs
/// of `prev_est`'s support, so centroids can sit between base grid points.
pub fn rammd_step(
    prev_est: &SparseEstimate,
    h_est: &ComplexMatrix,
    base: &AngularDictionary,
    m_ms: usize,
    cfg: &RammdConfig,
    rng_seed: u64,
) -> Result<RammdOutput> {
    if !cfg.enabled {
        return Ok(RammdOutput { dict: base.clone(), combiner: None, focus: None, windows_cover_range: false });
    }
    let mut aoas = base.grid_aoas.clone();
    aoas.extend(prev_est.atom_angles.iter().map(|a| a.0));
    aoas.sort_by(f64::total_cmp);
    aoas.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    let profile_dict = AngularDictionary::from_angles(base.n_ms(), aoas, base.n_bs(), base.grid_aods.clone(), cfg.spacing_ratio)?;
    let profile = angular_energy(h_est, &profile_dict)?;
    let budget = prev_est.rank_budget.clamp(1, profile_dict.l1());
    let preferred: Vec<usize> = prev_est
        .atom_angles
        .iter()
        .filter_map(|a| profile_dict.grid_aoas.iter().position(|g| (g - a.0).abs() < 1e-12))
        .collect();
    let mut focus = select_centroids_preferring(&profile, budget, &profile_dict, cfg, &preferred)?;
    // the sub-grid size follows the base grid, not the merged profile grid
    let l = cfg.sub_grid_for(base.l1());
    focus.refined_grids = focus
        .centroids
        .iter()
        .map(|&c| {
            let (lo, hi) = focus_window(c, focus.half_width);
            sub_grid(lo, hi, l)
        })
        .collect();
    focus.explore_count = cfg.explore_for(l);

    let refined = refine_dictionary(&focus, base, cfg, crate::rng::derive_seed(rng_seed, &[1]))?;
    let combiner = focused_combiner(&focus, base.n_ms(), m_ms, cfg.spacing_ratio, crate::rng::derive_seed(rng_seed, &[2]));
    Ok(RammdOutput {
        dict: refined.dict,
        combiner: Some(combiner),
        focus: Some(focus),
        windows_cover_range: refined.windows_cover_range,
    })
}
