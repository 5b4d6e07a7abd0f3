//! Per-timeline orchestration: observe, puncture, complete, recover, focus.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::chanmodel::{build_dictionary, evolve_channel, generate_channel, AngularDictionary, ChannelConfig, ChannelRealization};
use crate::error::{Error, Result};
use crate::harness::metrics::nmse;
use crate::linalg::{svd, Complex64, ComplexMatrix};
use crate::lrmc::{
    estimate_rank, r1mc_complete, refine_matrix, CompletionParams, RankPolicy, RankTrack, DEFAULT_MAX_ITERS,
    DEFAULT_TOL_EPS,
};
use crate::rammd::{rammd_step, RammdConfig};
use crate::recovery::{
    composite_dictionary, gain_only_model, map_support, projection_fraction, pursuit, SparseEstimate,
    DEFAULT_GAIN_ONLY_THRESHOLD, DEFAULT_TOL,
};
use crate::rng::derive_seed;
use crate::sensing::{make_front_end, observe, puncture, restrict_measurements, FrontEnd, Observation, PunctureMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Proposed,
    FixedRank,
    OmpBaseline,
    LsBaseline,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Proposed, Method::FixedRank, Method::OmpBaseline, Method::LsBaseline];

    pub fn name(self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::FixedRank => "fixed_rank",
            Method::OmpBaseline => "omp_baseline",
            Method::LsBaseline => "ls_baseline",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// What Phase II fits its sparse model to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase2Input {
    /// Observed entries of Ỹ through the composite operator `𝒳 A`.
    Observed,
    /// All entries of the completed Ŷ through `𝒳 A`.
    Completed,
    /// The back-projected channel `pinv(Wᴴ) Ŷ pinv(F Sᵀ)` through `A`.
    Refined,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RammdScope {
    /// Focus both the next combiner and the next recovery dictionary.
    Both,
    /// Focus only the recovery dictionary; combiners stay random.
    Phase2Only,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub xi: f64,
    /// `None` → `1e-3 · √(rows · cols)`.
    pub mu: Option<f64>,
    pub tol_eps: f64,
    pub max_iters: usize,
    pub ar_order: usize,
    pub delta_theta_deg: f64,
    pub batch: usize,
    pub explore_count: Option<usize>,
    pub sub_grid_size: Option<usize>,
    pub max_rx_atoms: usize,
    pub gain_only_threshold: f64,
    pub recovery_tol: f64,
    pub phase2_input: Phase2Input,
    pub rammd: bool,
    pub rammd_scope: RammdScope,
    pub puncture_mode: PunctureMode,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            xi: 0.99,
            mu: None,
            tol_eps: DEFAULT_TOL_EPS,
            max_iters: DEFAULT_MAX_ITERS,
            ar_order: 1,
            delta_theta_deg: 5.0,
            batch: 1,
            explore_count: None,
            sub_grid_size: None,
            max_rx_atoms: 256,
            gain_only_threshold: DEFAULT_GAIN_ONLY_THRESHOLD,
            recovery_tol: DEFAULT_TOL,
            phase2_input: Phase2Input::Observed,
            rammd: true,
            rammd_scope: RammdScope::Both,
            puncture_mode: PunctureMode::Missing,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grids {
    pub l1: usize,
    pub l2: usize,
}

impl Default for Grids {
    fn default() -> Self {
        Self { l1: 32, l2: 32 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrontEndDims {
    pub m_bs: usize,
    pub m_ms: usize,
}

impl Default for FrontEndDims {
    fn default() -> Self {
        Self { m_bs: 8, m_ms: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub channel: ChannelConfig,
    pub grids: Grids,
    pub front_end: FrontEndDims,
    pub solver: SolverConfig,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.channel.validate()?;
        let s = &self.solver;
        if self.grids.l1 < 2 || self.grids.l2 < 2 {
            return Err(Error::Config("grid sizes must be at least 2".into()));
        }
        let fe = self.front_end;
        if fe.m_bs == 0 || fe.m_ms == 0 || fe.m_bs > self.channel.n_bs || fe.m_ms > self.channel.n_ms {
            return Err(Error::Config("RF chains must be in 1..=antennas".into()));
        }
        if !(s.xi > 0.0 && s.xi < 1.0) {
            return Err(Error::Config("xi must lie in (0, 1)".into()));
        }
        if s.ar_order == 0 || s.ar_order > crate::lrmc::MAX_AR_ORDER {
            return Err(Error::Config("ar_order must be 1, 2 or 3".into()));
        }
        if s.batch == 0 || s.max_iters == 0 {
            return Err(Error::Config("batch and max_iters must be positive".into()));
        }
        if matches!(s.mu, Some(m) if !(m >= 0.0)) {
            return Err(Error::Config("mu must be non-negative".into()));
        }
        if !(s.tol_eps > 0.0) || !(0.0..=1.0).contains(&s.gain_only_threshold) {
            return Err(Error::Config("tol_eps must be positive and gain_only_threshold in [0, 1]".into()));
        }
        self.rammd_config().validate()
    }

    pub fn rammd_config(&self) -> RammdConfig {
        RammdConfig {
            enabled: self.solver.rammd,
            delta_theta_deg: self.solver.delta_theta_deg,
            sub_grid_size: self.solver.sub_grid_size,
            explore_count: self.solver.explore_count,
            max_rx_atoms: self.solver.max_rx_atoms,
            spacing_ratio: self.channel.spacing_ratio,
        }
    }

    pub fn completion_params(&self, policy: RankPolicy) -> CompletionParams {
        let (m, n) = (self.front_end.m_ms, self.front_end.m_bs);
        CompletionParams {
            max_iters: self.solver.max_iters,
            tol_eps: self.solver.tol_eps,
            mu: self.solver.mu.unwrap_or_else(|| crate::lrmc::default_mu(m, n)),
            policy,
        }
    }

    pub fn base_dictionary(&self) -> Result<AngularDictionary> {
        build_dictionary(&self.channel, self.grids.l1, self.grids.l2)
    }
}

/// Per-step operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepConditions {
    pub snr_db: f64,
    pub miss_frac: f64,
    /// Retained fraction of measurement entries before puncturing.
    pub pilot_overhead: f64,
}

impl StepConditions {
    pub fn new(snr_db: f64, miss_frac: f64) -> Self {
        Self { snr_db, miss_frac, pilot_overhead: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineState {
    pub time_index: u64,
    pub rank_track: RankTrack,
    pub prev_estimate: Option<SparseEstimate>,
    /// Recovery dictionary prepared for this instance (focused or base).
    pub dict: AngularDictionary,
    pub base_dict: AngularDictionary,
    /// Front end that will sound this instance.
    pub front_end: FrontEnd,
    pub method: Method,
    /// Rank frozen at t = 0 by `fixed_rank`.
    pub pinned_rank: Option<usize>,
}

impl TimelineState {
    pub fn new(cfg: &PipelineConfig, method: Method, rng_seed: u64) -> Result<Self> {
        cfg.validate()?;
        let base = cfg.base_dictionary()?;
        let fe = next_front_end(cfg, rng_seed)?;
        Ok(Self {
            time_index: 0,
            rank_track: RankTrack::new(cfg.solver.ar_order, cfg.solver.xi)?,
            prev_estimate: None,
            dict: base.clone(),
            base_dict: base,
            front_end: fe,
            method,
            pinned_rank: None,
        })
    }

    fn focused(&self) -> bool {
        self.dict != self.base_dict
    }
}

fn next_front_end(cfg: &PipelineConfig, seed: u64) -> Result<FrontEnd> {
    let c = &cfg.channel;
    make_front_end(c.n_bs, cfg.front_end.m_bs, c.n_ms, cfg.front_end.m_ms, derive_seed(seed, &[0xFE]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub time_index: u64,
    pub method: Method,
    pub nmse: f64,
    pub rank_true: usize,
    pub rank_est: usize,
    pub iters_phase1: usize,
    pub iters_phase2: usize,
    pub phase1_converged: bool,
    pub gain_only: bool,
    pub focused_dictionary: bool,
    pub runtime_ms: f64,
    pub h_true: ComplexMatrix,
    pub h_est: ComplexMatrix,
    pub front_end: FrontEnd,
    pub noise_var: f64,
    pub observed_fraction: f64,
}

/// Synthesizes the observation for one instance: noise, pilot-overhead
/// thinning, then puncturing.
pub fn synthesize(truth: &ChannelRealization, fe: &FrontEnd, cond: &StepConditions, mode: PunctureMode, seed: u64) -> Result<Observation> {
    let obs = observe(truth, fe, cond.snr_db, derive_seed(seed, &[0x01]))?;
    let obs = restrict_measurements(&obs, cond.pilot_overhead, derive_seed(seed, &[0x02]))?;
    puncture(&obs, cond.miss_frac, mode, derive_seed(seed, &[0x03]))
}

/// Entries of `y` and rows of `phi` at the given column-major positions.
fn select_measurements(y: &ComplexMatrix, phi: &ComplexMatrix, rows: &[usize]) -> (Vec<Complex64>, ComplexMatrix) {
    let v = y.vec();
    (rows.iter().map(|&k| v[k]).collect(), phi.select_rows(rows))
}

struct Phase2 {
    est: SparseEstimate,
    gain_only: bool,
}

fn phase2(
    y: &[Complex64],
    phi: &ComplexMatrix,
    dict: &AngularDictionary,
    rank: usize,
    prev: Option<&SparseEstimate>,
    prev_rank: Option<usize>,
    cfg: &PipelineConfig,
) -> Result<Phase2> {
    let budget = rank.min(phi.cols());
    if let (Some(prev), Some(pr)) = (prev, prev_rank) {
        if pr == rank && !prev.support.is_empty() {
            let support = map_support(&prev.atom_angles, dict);
            if projection_fraction(y, phi, &support)? >= cfg.solver.gain_only_threshold {
                let (gains, res) = gain_only_model(y, phi, &support)?;
                return Ok(Phase2 {
                    est: SparseEstimate::from_support(dict, support, gains, res, budget, 0),
                    gain_only: true,
                });
            }
        }
    }
    let p = pursuit(y, phi, budget, cfg.solver.batch, cfg.solver.recovery_tol)?;
    Ok(Phase2 {
        est: SparseEstimate::from_support(dict, p.support, p.gains, p.residual_norm, budget, p.iterations),
        gain_only: false,
    })
}

/// One estimation instance. Returns the state for the next instance.
pub fn step(
    state: &TimelineState,
    truth: &ChannelRealization,
    cond: &StepConditions,
    cfg: &PipelineConfig,
    rng_seed: u64,
) -> Result<(TimelineState, StepReport)> {
    if truth.h.shape() != (state.front_end.n_ms(), state.front_end.n_bs()) {
        return Err(Error::DimensionMismatch {
            op: "step",
            expected: format!("{}x{}", state.front_end.n_ms(), state.front_end.n_bs()),
            found: format!("{:?}", truth.h.shape()),
        });
    }
    let fe = state.front_end.clone();
    let obs = synthesize(truth, &fe, cond, cfg.solver.puncture_mode, rng_seed)?;
    let mut next = state.clone();
    let mut gain_only = false;
    let mut focused = false;
    let mut phase1 = (0usize, true);

    let started = Instant::now();
    let (h_est, rank_est, iters2, est) = match state.method {
        Method::LsBaseline => {
            let h = refine_matrix(&obs.y, &fe)?.h;
            let rank = estimate_rank(&svd(&obs.y)?.singulars, obs.noise_var, obs.y.shape(), cfg.solver.xi)?;
            (h, rank, 0, None)
        }
        Method::OmpBaseline => {
            // no completion: missing entries enter the fit as zeros
            let phi = composite_dictionary(&fe, &state.base_dict)?;
            let budget = (cfg.channel.n_clusters * cfg.channel.rays_per_cluster).min(phi.cols());
            let p = pursuit(&obs.y.vec(), &phi, budget, 1, cfg.solver.recovery_tol)?;
            let est = SparseEstimate::from_support(&state.base_dict, p.support, p.gains, p.residual_norm, budget, p.iterations);
            (est.reconstructed.clone(), budget, p.iterations, None)
        }
        Method::Proposed | Method::FixedRank => {
            let policy = match (state.method, state.pinned_rank) {
                (Method::FixedRank, Some(r)) => RankPolicy::Fixed(r),
                _ => RankPolicy::Adaptive,
            };
            let comp = r1mc_complete(&obs, &mut next.rank_track, &cfg.completion_params(policy))?;
            phase1 = (comp.iterations, comp.converged);
            let rank = comp.rank_used;
            if state.method == Method::FixedRank && next.pinned_rank.is_none() {
                next.pinned_rank = Some(rank);
            }
            let prev_rank = state.rank_track.last();
            // a rank change invalidates the focus built for the old rank
            let dict = if prev_rank == Some(rank) { &state.dict } else { &state.base_dict };
            focused = dict != &state.base_dict;

            let p2 = match cfg.solver.phase2_input {
                Phase2Input::Observed => {
                    let phi = composite_dictionary(&fe, dict)?;
                    let (y, phi) = select_measurements(&obs.y, &phi, &obs.mask.vec_indices());
                    phase2(&y, &phi, dict, rank, state.prev_estimate.as_ref(), prev_rank, cfg)?
                }
                Phase2Input::Completed => {
                    let phi = composite_dictionary(&fe, dict)?;
                    phase2(&comp.completed.vec(), &phi, dict, rank, state.prev_estimate.as_ref(), prev_rank, cfg)?
                }
                Phase2Input::Refined => {
                    let target = refine_matrix(&comp.completed, &fe)?.h;
                    let a = dict.kron_dictionary()?;
                    phase2(&target.vec(), &a, dict, rank, state.prev_estimate.as_ref(), prev_rank, cfg)?
                }
            };
            gain_only = p2.gain_only;
            let iters = p2.est.iterations;
            (p2.est.reconstructed.clone(), rank, iters, Some(p2.est))
        }
    };
    let runtime_ms = started.elapsed().as_secs_f64() * 1e3;

    next.time_index = state.time_index + 1;
    let mut fe_next = next_front_end(cfg, rng_seed)?;
    next.dict = state.base_dict.clone();
    if let Some(est) = &est {
        if cfg.solver.rammd && !est.support.is_empty() {
            let out = rammd_step(est, &h_est, &state.base_dict, cfg.front_end.m_ms, &cfg.rammd_config(), derive_seed(rng_seed, &[0x04]))?;
            next.dict = out.dict;
            if let (Some(w), RammdScope::Both) = (out.combiner, cfg.solver.rammd_scope) {
                fe_next = fe_next.with_combiner(w)?;
            }
        }
    }
    next.front_end = fe_next;
    next.prev_estimate = est;

    let report = StepReport {
        time_index: state.time_index,
        method: state.method,
        nmse: nmse(&truth.h, &h_est)?,
        rank_true: truth.true_rank,
        rank_est,
        iters_phase1: phase1.0,
        iters_phase2: iters2,
        phase1_converged: phase1.1,
        gain_only,
        focused_dictionary: focused,
        runtime_ms,
        h_true: truth.h.clone(),
        h_est,
        front_end: fe,
        noise_var: obs.noise_var,
        observed_fraction: obs.observed_fraction(),
    };
    debug_assert!(!next.focused() || cfg.solver.rammd);
    Ok((next, report))
}

/// Seed of the channel trajectory; shared by every method for pairing.
pub fn channel_seed(rng_seed: u64, t: u64) -> u64 {
    derive_seed(rng_seed, &[0xC4A7, t])
}

/// Seed of the per-instance sensing randomness; shared by every method.
pub fn step_seed(rng_seed: u64, t: u64) -> u64 {
    derive_seed(rng_seed, &[0x57E9, t])
}

/// Ground-truth trajectory for `n_steps` instances.
pub fn channel_trajectory(cfg: &PipelineConfig, n_steps: usize, rng_seed: u64) -> Result<Vec<ChannelRealization>> {
    let dict = cfg.base_dictionary()?;
    let mut out = Vec::with_capacity(n_steps);
    let mut ch = generate_channel(&cfg.channel, &dict, 0, channel_seed(rng_seed, 0))?;
    for t in 0..n_steps as u64 {
        if t > 0 {
            ch = evolve_channel(&ch, &cfg.channel, &dict, channel_seed(rng_seed, t))?;
        }
        out.push(ch.clone());
    }
    Ok(out)
}

/// Runs one method over a fresh timeline. Deterministic per seed.
pub fn run_timeline(cfg: &PipelineConfig, method: Method, cond: &StepConditions, n_steps: usize, rng_seed: u64) -> Result<Vec<StepReport>> {
    if n_steps == 0 {
        return Err(Error::contract("n_steps must be at least 1"));
    }
    let truths = channel_trajectory(cfg, n_steps, rng_seed)?;
    run_on_trajectory(cfg, method, cond, &truths, rng_seed)
}

pub fn run_on_trajectory(
    cfg: &PipelineConfig,
    method: Method,
    cond: &StepConditions,
    truths: &[ChannelRealization],
    rng_seed: u64,
) -> Result<Vec<StepReport>> {
    let mut state = TimelineState::new(cfg, method, step_seed(rng_seed, u64::MAX))?;
    let mut out = Vec::with_capacity(truths.len());
    for (t, truth) in truths.iter().enumerate() {
        let (next, rep) = step(&state, truth, cond, cfg, step_seed(rng_seed, t as u64))?;
        out.push(rep);
        state = next;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_path_cfg() -> PipelineConfig {
        PipelineConfig {
            channel: ChannelConfig { n_clusters: 1, speed_kmh: 0.0, ..Default::default() },
            ..Default::default()
        }
    }

    #[test]
    fn noiseless_single_path_is_exact() {
        let cfg = one_path_cfg();
        let reps = run_timeline(&cfg, Method::Proposed, &StepConditions::new(f64::INFINITY, 0.0), 1, 3).unwrap();
        assert_eq!(reps.len(), 1);
        assert!(reps[0].nmse <= 1e-8, "{}", reps[0].nmse);
        assert_eq!(reps[0].rank_est, 1);
    }

    #[test]
    fn timelines_are_deterministic() {
        let cfg = PipelineConfig::default();
        let cond = StepConditions::new(20.0, 0.1);
        let strip = |v: Vec<StepReport>| v.into_iter().map(|r| StepReport { runtime_ms: 0.0, ..r }).collect::<Vec<_>>();
        for m in Method::ALL {
            let a = strip(run_timeline(&cfg, m, &cond, 3, 42).unwrap());
            let b = strip(run_timeline(&cfg, m, &cond, 3, 42).unwrap());
            assert_eq!(a, b, "{m}");
        }
    }

    #[test]
    fn stable_channel_takes_gain_only_path() {
        let cfg = PipelineConfig {
            channel: ChannelConfig { n_clusters: 2, speed_kmh: 0.0, ..Default::default() },
            ..Default::default()
        };
        let reps = run_timeline(&cfg, Method::Proposed, &StepConditions::new(30.0, 0.0), 2, 7).unwrap();
        assert!(!reps[0].gain_only);
        assert!(reps[1].gain_only);
        assert_eq!(reps[1].iters_phase2, 0);
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(Method::parse(m.name()).unwrap(), m);
        }
        assert!(Method::parse("nope").is_err());
    }
}
