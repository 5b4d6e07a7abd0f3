//! Clustered narrowband mmWave channel generation and angular dictionaries.
//!
//! A realization is a sum of rays, each contributing a rank-one term
//! `gain * a_ms(aoa) * a_bs(aod)^H`, weighted per delay tap by a
//! raised-cosine pulse and summed over taps. Time evolution redraws the
//! gains (fast fading), random-walks the cluster angles, and optionally adds
//! or removes clusters, which is what moves the channel rank over time.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::{svd, Complex64, ComplexMatrix};
use crate::error::{Error, Result};
use crate::rng::{complex_gaussian, rng_from_seed, standard_normal, SimRng};

/// Angles are kept this far inside the open interval (−π/2, π/2).
const ANGLE_MARGIN: f64 = 1e-6;

/// Relative singular-value cutoff that defines numerical rank.
pub const NUMERICAL_RANK_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    pub n_bs: usize,
    pub n_ms: usize,
    pub n_clusters: usize,
    pub rays_per_cluster: usize,
    /// Maximum intra-cluster ray offset, degrees.
    pub angle_spread_deg: f64,
    pub carrier_hz: f64,
    pub sample_period_s: f64,
    pub delay_taps: usize,
    pub speed_kmh: f64,
    /// Element spacing over wavelength.
    pub spacing_ratio: f64,
    pub path_loss: f64,
    /// Raised-cosine roll-off in `[0, 1]`.
    pub rolloff: f64,
    pub on_grid: bool,
    /// Minimum spacing between cluster angles, in dictionary grid bins
    /// (sin-angle units of `2 / L`). On-grid clusters always get distinct
    /// AoA and AoD bins.
    pub min_separation_bins: usize,
    /// Time between consecutive estimation instances.
    pub frame_interval_s: f64,
    /// Distance to the scatterers; angular drift rate is `speed / distance`.
    pub scatterer_distance_m: f64,
    pub birth_prob: f64,
    pub death_prob: f64,
    pub max_clusters: usize,
    /// Instances `t` at which a cluster is forced to appear (applied when
    /// evolving from `t - 1` to `t`).
    pub forced_births: Vec<u64>,
    pub forced_deaths: Vec<u64>,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            n_bs: 8,
            n_ms: 8,
            n_clusters: 2,
            rays_per_cluster: 1,
            angle_spread_deg: 0.0,
            carrier_hz: 28e9,
            sample_period_s: 1e-7,
            delay_taps: 1,
            speed_kmh: 120.0,
            spacing_ratio: 0.5,
            path_loss: 1.0,
            rolloff: 0.25,
            on_grid: true,
            min_separation_bins: 4,
            frame_interval_s: 1e-3,
            scatterer_distance_m: 50.0,
            birth_prob: 0.0,
            death_prob: 0.0,
            max_clusters: 4,
            forced_births: Vec::new(),
            forced_deaths: Vec::new(),
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.n_bs == 0 || self.n_ms == 0 {
            return bad("antenna counts must be positive");
        }
        if self.n_clusters == 0 || self.rays_per_cluster == 0 {
            return bad("n_clusters and rays_per_cluster must be positive");
        }
        if self.max_clusters < self.n_clusters {
            return bad("max_clusters must be at least n_clusters");
        }
        if !(self.spacing_ratio > 0.0) {
            return bad("spacing_ratio must be positive");
        }
        if self.delay_taps == 0 {
            return bad("delay_taps must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.rolloff) {
            return bad("rolloff must lie in [0, 1]");
        }
        if !(self.path_loss > 0.0) || !(self.sample_period_s > 0.0) {
            return bad("path_loss and sample_period_s must be positive");
        }
        if !(0.0..=1.0).contains(&self.birth_prob) || !(0.0..=1.0).contains(&self.death_prob) {
            return bad("birth/death probabilities must lie in [0, 1]");
        }
        if self.angle_spread_deg < 0.0 || self.speed_kmh < 0.0 {
            return bad("angle spread and speed must be non-negative");
        }
        Ok(())
    }

    pub fn angle_spread_rad(&self) -> f64 {
        self.angle_spread_deg.to_radians()
    }

    /// Per-instance standard deviation of the cluster-angle random walk.
    pub fn drift_std_rad(&self) -> f64 {
        if self.scatterer_distance_m <= 0.0 {
            return 0.0;
        }
        self.speed_kmh / 3.6 * self.frame_interval_s / self.scatterer_distance_m
    }

    pub fn wavelength_m(&self) -> f64 {
        299_792_458.0 / self.carrier_hz
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ray {
    pub gain: Complex64,
    pub aoa_offset: f64,
    pub aod_offset: f64,
    pub ray_delay: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathCluster {
    pub mean_aoa: f64,
    pub mean_aod: f64,
    pub cluster_delay: f64,
    pub rays: Vec<Ray>,
}

/// One ray as it entered the channel matrix (after grid snapping).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathParams {
    pub aoa: f64,
    pub aod: f64,
    pub gain: Complex64,
    pub delay: f64,
    /// `(aoa_index, aod_index)` into the dictionary when generated on-grid.
    pub grid: Option<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRealization {
    pub h: ComplexMatrix,
    pub taps: Vec<ComplexMatrix>,
    pub clusters: Vec<PathCluster>,
    pub paths: Vec<PathParams>,
    pub true_rank: usize,
    pub time_index: u64,
}

/// Receive and transmit steering grids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngularDictionary {
    pub theta_ms: ComplexMatrix,
    pub theta_bs: ComplexMatrix,
    pub grid_aoas: Vec<f64>,
    pub grid_aods: Vec<f64>,
}

/// ULA response `exp(j 2π ρ k sin θ) / √n`, `k = 0..n`.
pub fn steering_vector(theta: f64, n: usize, spacing_ratio: f64) -> Result<Vec<Complex64>> {
    if n == 0 {
        return Err(Error::contract("steering vector needs at least one antenna"));
    }
    Ok(steering_unchecked(theta, n, spacing_ratio))
}

pub(crate) fn steering_unchecked(theta: f64, n: usize, spacing_ratio: f64) -> Vec<Complex64> {
    let scale = 1.0 / (n as f64).sqrt();
    let phase = 2.0 * PI * spacing_ratio * theta.sin();
    (0..n)
        .map(|k| Complex64::from_polar(scale, phase * k as f64))
        .collect()
}

/// Raised-cosine pulse evaluated at `x` seconds for symbol period `ts`.
pub fn raised_cosine(x: f64, ts: f64, beta: f64) -> f64 {
    let u = x / ts;
    let denom = 1.0 - (2.0 * beta * u).powi(2);
    if beta > 0.0 && denom.abs() < 1e-10 {
        // removable singularity at |u| = 1 / (2β)
        return PI / 4.0 * sinc(1.0 / (2.0 * beta));
    }
    sinc(u) * (PI * beta * u).cos() / denom
}

fn sinc(u: f64) -> f64 {
    if u.abs() < 1e-12 {
        1.0
    } else {
        (PI * u).sin() / (PI * u)
    }
}

/// Angles whose sines are uniform over (−1, 1): `sin θ_i = −1 + (2i + 1) / l`.
pub fn sin_uniform_grid(l: usize) -> Vec<f64> {
    (0..l)
        .map(|i| (-1.0 + (2 * i + 1) as f64 / l as f64).asin())
        .collect()
}

impl AngularDictionary {
    /// Dictionary with explicit receive/transmit grid angles.
    pub fn from_angles(
        n_ms: usize,
        aoas: Vec<f64>,
        n_bs: usize,
        aods: Vec<f64>,
        spacing_ratio: f64,
    ) -> Result<Self> {
        if aoas.is_empty() || aods.is_empty() {
            return Err(Error::contract("dictionary grids must be nonempty"));
        }
        let cols_ms: Vec<_> = aoas.iter().map(|&a| steering_unchecked(a, n_ms, spacing_ratio)).collect();
        let cols_bs: Vec<_> = aods.iter().map(|&a| steering_unchecked(a, n_bs, spacing_ratio)).collect();
        Ok(Self {
            theta_ms: ComplexMatrix::from_columns(n_ms, &cols_ms),
            theta_bs: ComplexMatrix::from_columns(n_bs, &cols_bs),
            grid_aoas: aoas,
            grid_aods: aods,
        })
    }

    pub fn l1(&self) -> usize {
        self.grid_aoas.len()
    }

    pub fn l2(&self) -> usize {
        self.grid_aods.len()
    }

    pub fn n_ms(&self) -> usize {
        self.theta_ms.rows()
    }

    pub fn n_bs(&self) -> usize {
        self.theta_bs.rows()
    }

    pub fn n_atoms(&self) -> usize {
        self.l1() * self.l2()
    }

    /// Column index of `(aoa_idx, aod_idx)` in `kron(conj(Θ_BS), Θ_MS)`.
    #[inline]
    pub fn atom_index(&self, aoa_idx: usize, aod_idx: usize) -> usize {
        aod_idx * self.l1() + aoa_idx
    }

    /// Inverse of [`AngularDictionary::atom_index`].
    #[inline]
    pub fn decode_atom(&self, atom: usize) -> (usize, usize) {
        (atom % self.l1(), atom / self.l1())
    }

    /// Full Kronecker sensing dictionary `kron(conj(Θ_BS), Θ_MS)`, so that
    /// `vec(Θ_MS H̄ Θ_BS^H) = A vec(H̄)`.
    pub fn kron_dictionary(&self) -> Result<ComplexMatrix> {
        crate::linalg::kron(&self.theta_bs.conj(), &self.theta_ms)
    }

    /// The vectorized atom for a single column index.
    pub fn atom(&self, atom: usize) -> Vec<Complex64> {
        let (i, j) = self.decode_atom(atom);
        let n_ms = self.n_ms();
        let mut out = Vec::with_capacity(n_ms * self.n_bs());
        for b in 0..self.n_bs() {
            let tb = self.theta_bs[(b, j)].conj();
            for a in 0..n_ms {
                out.push(tb * self.theta_ms[(a, i)]);
            }
        }
        out
    }

    pub fn nearest_aoa(&self, theta: f64) -> usize {
        nearest_by_sine(&self.grid_aoas, theta)
    }

    pub fn nearest_aod(&self, theta: f64) -> usize {
        nearest_by_sine(&self.grid_aods, theta)
    }

    /// Largest |inner product| between distinct receive columns.
    pub fn mutual_coherence_ms(&self) -> f64 {
        let g = &self.theta_ms.adjoint() * &self.theta_ms;
        let mut worst: f64 = 0.0;
        for i in 0..g.rows() {
            for j in 0..g.cols() {
                if i != j {
                    worst = worst.max(g[(i, j)].norm());
                }
            }
        }
        worst
    }
}

fn nearest_by_sine(grid: &[f64], theta: f64) -> usize {
    let s = theta.sin();
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, &g) in grid.iter().enumerate() {
        let d = (g.sin() - s).abs();
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// Uniform sin-angle dictionary with `l1` receive and `l2` transmit atoms.
pub fn build_dictionary(cfg: &ChannelConfig, l1: usize, l2: usize) -> Result<AngularDictionary> {
    if l1 < 2 || l2 < 2 {
        return Err(Error::contract("dictionary grids need at least two points"));
    }
    AngularDictionary::from_angles(
        cfg.n_ms,
        sin_uniform_grid(l1),
        cfg.n_bs,
        sin_uniform_grid(l2),
        cfg.spacing_ratio,
    )
}

fn uniform_angle(rng: &mut SimRng) -> f64 {
    rng.random_range(-FRAC_PI_2 + ANGLE_MARGIN..FRAC_PI_2 - ANGLE_MARGIN)
}

/// Reflect an angle back into (−π/2, π/2).
fn reflect_angle(mut a: f64) -> f64 {
    let lim = FRAC_PI_2 - ANGLE_MARGIN;
    for _ in 0..4 {
        if a > lim {
            a = 2.0 * lim - a;
        } else if a < -lim {
            a = -2.0 * lim - a;
        } else {
            break;
        }
    }
    a.clamp(-lim, lim)
}

fn separated(cfg: &ChannelConfig, dict: &AngularDictionary, clusters: &[PathCluster], aoa: f64, aod: f64) -> bool {
    let sep_ms = cfg.min_separation_bins as f64 * 2.0 / dict.l1() as f64;
    let sep_bs = cfg.min_separation_bins as f64 * 2.0 / dict.l2() as f64;
    clusters.iter().all(|c| {
        if cfg.on_grid {
            let (a0, a1) = (dict.nearest_aoa(c.mean_aoa), dict.nearest_aoa(aoa));
            let (d0, d1) = (dict.nearest_aod(c.mean_aod), dict.nearest_aod(aod));
            let need = cfg.min_separation_bins.max(1);
            a0.abs_diff(a1) >= need && d0.abs_diff(d1) >= need
        } else {
            (c.mean_aoa.sin() - aoa.sin()).abs() >= sep_ms && (c.mean_aod.sin() - aod.sin()).abs() >= sep_bs
        }
    })
}

fn draw_rays(cfg: &ChannelConfig, rng: &mut SimRng) -> Vec<Ray> {
    let spread = cfg.angle_spread_rad();
    let ts = cfg.sample_period_s;
    (0..cfg.rays_per_cluster)
        .map(|_| {
            let gain = complex_gaussian(rng);
            let (aoa_offset, aod_offset) = if cfg.rays_per_cluster == 1 || spread == 0.0 {
                (0.0, 0.0)
            } else {
                (rng.random_range(-spread..=spread), rng.random_range(-spread..=spread))
            };
            let ray_delay = if cfg.delay_taps > 1 { rng.random_range(0.0..0.1 * ts) } else { 0.0 };
            Ray { gain, aoa_offset, aod_offset, ray_delay }
        })
        .collect()
}

fn draw_cluster(cfg: &ChannelConfig, dict: &AngularDictionary, existing: &[PathCluster], rng: &mut SimRng) -> PathCluster {
    let mut aoa = uniform_angle(rng);
    let mut aod = uniform_angle(rng);
    for _ in 0..10_000 {
        if separated(cfg, dict, existing, aoa, aod) {
            break;
        }
        aoa = uniform_angle(rng);
        aod = uniform_angle(rng);
    }
    let cluster_delay = if cfg.delay_taps > 1 {
        rng.random_range(0.0..(cfg.delay_taps - 1) as f64 * cfg.sample_period_s)
    } else {
        0.0
    };
    PathCluster {
        mean_aoa: aoa,
        mean_aod: aod,
        cluster_delay,
        rays: draw_rays(cfg, rng),
    }
}

/// Builds taps and the aggregate matrix from cluster parameters.
pub fn assemble(
    cfg: &ChannelConfig,
    dict: &AngularDictionary,
    clusters: Vec<PathCluster>,
    time_index: u64,
) -> Result<ChannelRealization> {
    if dict.n_ms() != cfg.n_ms || dict.n_bs() != cfg.n_bs {
        return Err(Error::DimensionMismatch {
            op: "generate_channel",
            expected: format!("{}x{} antennas", cfg.n_ms, cfg.n_bs),
            found: format!("dictionary for {}x{}", dict.n_ms(), dict.n_bs()),
        });
    }
    let scale = ((cfg.n_bs * cfg.n_ms) as f64 / cfg.path_loss).sqrt();
    let mut paths = Vec::new();
    for c in &clusters {
        for r in &c.rays {
            let mut aoa = reflect_angle(c.mean_aoa - r.aoa_offset);
            let mut aod = reflect_angle(c.mean_aod - r.aod_offset);
            let mut grid = None;
            if cfg.on_grid {
                let (i, j) = (dict.nearest_aoa(aoa), dict.nearest_aod(aod));
                aoa = dict.grid_aoas[i];
                aod = dict.grid_aods[j];
                grid = Some((i, j));
            }
            paths.push(PathParams {
                aoa,
                aod,
                gain: r.gain,
                delay: c.cluster_delay + r.ray_delay,
                grid,
            });
        }
    }

    let mut taps = Vec::with_capacity(cfg.delay_taps);
    for d in 0..cfg.delay_taps {
        let mut tap = ComplexMatrix::zeros(cfg.n_ms, cfg.n_bs);
        for p in &paths {
            let pulse = if cfg.delay_taps == 1 && p.delay == 0.0 {
                1.0
            } else {
                raised_cosine(d as f64 * cfg.sample_period_s - p.delay, cfg.sample_period_s, cfg.rolloff)
            };
            let w = p.gain * (scale * pulse);
            if w.norm_sqr() == 0.0 {
                continue;
            }
            let a_ms = steering_unchecked(p.aoa, cfg.n_ms, cfg.spacing_ratio);
            let a_bs = steering_unchecked(p.aod, cfg.n_bs, cfg.spacing_ratio);
            for (i, am) in a_ms.iter().enumerate() {
                let lhs = w * am;
                for (j, ab) in a_bs.iter().enumerate() {
                    tap[(i, j)] += lhs * ab.conj();
                }
            }
        }
        taps.push(tap);
    }
    // e^{-j2πd} = 1 for integer taps: the aggregate is the plain tap sum.
    let mut h = ComplexMatrix::zeros(cfg.n_ms, cfg.n_bs);
    for t in &taps {
        h = &h + t;
    }

    let true_rank = if cfg.on_grid {
        let mut pairs: Vec<(usize, usize)> = paths.iter().filter_map(|p| p.grid).collect();
        pairs.sort_unstable();
        pairs.dedup();
        pairs.len().max(1)
    } else {
        numerical_rank(&h)?.max(1)
    };

    Ok(ChannelRealization {
        h,
        taps,
        clusters,
        paths,
        true_rank,
        time_index,
    })
}

/// Count of singular values above `NUMERICAL_RANK_TOL * σ_1`.
pub fn numerical_rank(m: &ComplexMatrix) -> Result<usize> {
    Ok(svd(m)?.rank_at(NUMERICAL_RANK_TOL))
}

/// Draws the channel at instance `t`. Deterministic in `rng_seed`.
pub fn generate_channel(
    cfg: &ChannelConfig,
    dict: &AngularDictionary,
    t: u64,
    rng_seed: u64,
) -> Result<ChannelRealization> {
    cfg.validate()?;
    let mut rng = rng_from_seed(rng_seed);
    let mut clusters: Vec<PathCluster> = Vec::with_capacity(cfg.n_clusters);
    for _ in 0..cfg.n_clusters {
        let c = draw_cluster(cfg, dict, &clusters, &mut rng);
        clusters.push(c);
    }
    assemble(cfg, dict, clusters, t)
}

/// Advances a realization by one instance: new gains, drifted angles, and
/// possible cluster birth/death.
pub fn evolve_channel(
    prev: &ChannelRealization,
    cfg: &ChannelConfig,
    dict: &AngularDictionary,
    rng_seed: u64,
) -> Result<ChannelRealization> {
    cfg.validate()?;
    let mut rng = rng_from_seed(rng_seed);
    let t = prev.time_index + 1;
    let drift = cfg.drift_std_rad();
    let mut clusters: Vec<PathCluster> = prev
        .clusters
        .iter()
        .map(|c| {
            let da = drift * standard_normal(&mut rng);
            let dd = drift * standard_normal(&mut rng);
            PathCluster {
                mean_aoa: reflect_angle(c.mean_aoa + da),
                mean_aod: reflect_angle(c.mean_aod + dd),
                cluster_delay: c.cluster_delay,
                rays: c
                    .rays
                    .iter()
                    .map(|r| Ray {
                        gain: complex_gaussian(&mut rng),
                        ..r.clone()
                    })
                    .collect(),
            }
        })
        .collect();

    // Draw both uniforms unconditionally so the random stream layout does
    // not depend on the probabilities.
    let u_death: f64 = rng.random();
    let u_birth: f64 = rng.random();
    let forced_death = cfg.forced_deaths.contains(&t);
    let forced_birth = cfg.forced_births.contains(&t);
    if (forced_death || u_death < cfg.death_prob) && clusters.len() > 1 {
        let victim = rng.random_range(0..clusters.len());
        clusters.remove(victim);
    }
    if (forced_birth || u_birth < cfg.birth_prob) && clusters.len() < cfg.max_clusters {
        let c = draw_cluster(cfg, dict, &clusters, &mut rng);
        clusters.push(c);
    }
    assemble(cfg, dict, clusters, t)
}
