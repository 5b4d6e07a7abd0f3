//! Monte-Carlo experiment runner: configuration, sweeps, result rows.

pub mod metrics;
pub mod output;
pub mod selftest;

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chanmodel::ChannelConfig;
use crate::error::{Error, Result};
use crate::pipeline::{
    channel_trajectory, run_on_trajectory, FrontEndDims, Grids, Method, PipelineConfig, SolverConfig, StepConditions,
};
use crate::rng::derive_seed;

pub use metrics::{ber, median, nmse, percentile, success_probability};
pub use output::{parse_csv, summarize, write_csv, write_outputs, SummaryRow};

/// Recorded in every manifest.
pub const PILOT_OVERHEAD_SEMANTICS: &str =
    "pilot_overhead is the fraction of the m_ms x m_bs measurement entries retained per instance, before puncturing";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub channel: ChannelConfig,
    pub grids: Grids,
    pub front_end: FrontEndDims,
    pub solver: SolverConfig,
    pub snr_db_list: Vec<f64>,
    pub miss_frac_list: Vec<f64>,
    pub pilot_overhead_list: Vec<f64>,
    pub n_trials: usize,
    pub n_steps: usize,
    pub methods: Vec<Method>,
    pub seed: u64,
    pub success_threshold: f64,
    pub ber_bits: usize,
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            channel: ChannelConfig::default(),
            grids: Grids::default(),
            front_end: FrontEndDims::default(),
            solver: SolverConfig::default(),
            snr_db_list: vec![0.0, 10.0, 20.0, 30.0],
            miss_frac_list: vec![0.1],
            pilot_overhead_list: vec![1.0],
            n_trials: 100,
            n_steps: 10,
            methods: Method::ALL.to_vec(),
            seed: 2024,
            success_threshold: 1e-2,
            ber_bits: 2000,
            workers: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            channel: self.channel.clone(),
            grids: self.grids,
            front_end: self.front_end,
            solver: self.solver.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.snr_db_list.is_empty() || self.miss_frac_list.is_empty() || self.pilot_overhead_list.is_empty() {
            return bad("snr_db_list, miss_frac_list and pilot_overhead_list must be nonempty");
        }
        if self.snr_db_list.iter().any(|s| s.is_nan()) {
            return bad("snr_db_list contains NaN");
        }
        if self.miss_frac_list.iter().any(|m| !(0.0..1.0).contains(m)) {
            return bad("miss_frac values must lie in [0, 1)");
        }
        if self.pilot_overhead_list.iter().any(|p| !(*p > 0.0 && *p <= 1.0)) {
            return bad("pilot_overhead values must lie in (0, 1]");
        }
        if self.n_trials == 0 || self.n_steps == 0 {
            return bad("n_trials and n_steps must be at least 1");
        }
        if self.methods.is_empty() {
            return bad("methods must be nonempty");
        }
        if !(self.success_threshold > 0.0) {
            return bad("success_threshold must be positive");
        }
        if self.ber_bits < 1000 {
            return bad("ber_bits must be at least 1000");
        }
        self.pipeline().validate()
    }

    pub fn trial_seed(&self, trial: usize) -> u64 {
        derive_seed(self.seed, &[trial as u64])
    }
}

/// One row per (cell, trial, method, time instance).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ResultRow {
    pub trial: u64,
    pub time_index: u64,
    pub method: String,
    pub snr_db: f64,
    pub miss_frac: f64,
    pub pilot_overhead: f64,
    pub n_bs: usize,
    pub n_ms: usize,
    pub nmse: f64,
    pub ber: f64,
    pub rank_true: usize,
    pub rank_est: usize,
    pub success: bool,
    pub iters_phase1: usize,
    pub iters_phase2: usize,
    pub runtime_ms: f64,
    /// Empty unless the timeline failed.
    pub error: String,
}

/// One sweep point: operating conditions plus the config it runs under.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub axis: String,
    pub axis_value: String,
    pub cond: StepConditions,
    pub cfg: ExperimentConfig,
}

/// Sweep axes exposed on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Snr,
    Overhead,
    Miss,
    Nbs,
    Spread,
}

impl Axis {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "snr" => Ok(Axis::Snr),
            "overhead" => Ok(Axis::Overhead),
            "miss" => Ok(Axis::Miss),
            "nbs" => Ok(Axis::Nbs),
            "spread" => Ok(Axis::Spread),
            _ => Err(Error::Config(format!("unknown sweep axis `{s}`"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Axis::Snr => "snr",
            Axis::Overhead => "overhead",
            Axis::Miss => "miss",
            Axis::Nbs => "nbs",
            Axis::Spread => "spread",
        }
    }
}

fn label(x: f64) -> String {
    output::fmt9(x)
}

/// Cartesian product of the config's SNR, miss and overhead lists.
pub fn cells(cfg: &ExperimentConfig) -> Vec<Cell> {
    let mut out = Vec::new();
    for &snr in &cfg.snr_db_list {
        for &miss in &cfg.miss_frac_list {
            for &ov in &cfg.pilot_overhead_list {
                out.push(Cell {
                    axis: "grid".into(),
                    axis_value: format!("snr={};miss={};overhead={}", label(snr), label(miss), label(ov)),
                    cond: StepConditions { snr_db: snr, miss_frac: miss, pilot_overhead: ov },
                    cfg: cfg.clone(),
                });
            }
        }
    }
    out
}

/// Cells for a one-dimensional sweep. List axes replace the matching list;
/// `nbs` and `spread` rebuild the channel per value.
pub fn sweep_cells(cfg: &ExperimentConfig, axis: Axis, values: &[f64]) -> Result<Vec<Cell>> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let mut out = Vec::new();
    for &v in values {
        let mut c = cfg.clone();
        match axis {
            Axis::Snr => c.snr_db_list = vec![v],
            Axis::Overhead => c.pilot_overhead_list = vec![v],
            Axis::Miss => c.miss_frac_list = vec![v],
            Axis::Nbs => {
                if v < 1.0 || v.fract() != 0.0 {
                    return Err(Error::Config(format!("n_bs value {v} is not a positive integer")));
                }
                c.channel.n_bs = v as usize;
                c.front_end.m_bs = c.front_end.m_bs.min(c.channel.n_bs);
            }
            Axis::Spread => c.channel.angle_spread_deg = v,
        }
        c.validate()?;
        for mut cell in cells(&c) {
            cell.axis = axis.name().into();
            cell.axis_value = label(v);
            out.push(cell);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub cells: Vec<Cell>,
    /// `(cell index, row)`, sorted by cell, trial, method, time.
    pub rows: Vec<(usize, ResultRow)>,
}

impl ExperimentResult {
    pub fn result_rows(&self) -> Vec<ResultRow> {
        self.rows.iter().map(|(_, r)| r.clone()).collect()
    }

    pub fn error_count(&self) -> usize {
        self.rows.iter().filter(|(_, r)| !r.error.is_empty()).count()
    }
}

fn timeline_rows(cell: &Cell, trial: usize, method: Method) -> Vec<ResultRow> {
    let cfg = &cell.cfg;
    let pcfg = cfg.pipeline();
    let seed = cfg.trial_seed(trial);
    let base = ResultRow {
        trial: trial as u64,
        method: method.name().to_string(),
        snr_db: cell.cond.snr_db,
        miss_frac: cell.cond.miss_frac,
        pilot_overhead: cell.cond.pilot_overhead,
        n_bs: cfg.channel.n_bs,
        n_ms: cfg.channel.n_ms,
        ..ResultRow::default()
    };
    let run = || -> Result<Vec<ResultRow>> {
        let truths = channel_trajectory(&pcfg, cfg.n_steps, seed)?;
        let reps = run_on_trajectory(&pcfg, method, &cell.cond, &truths, seed)?;
        reps.into_iter()
            .map(|r| {
                let b = ber(&r.h_true, &r.h_est, &r.front_end, cell.cond.snr_db, cfg.ber_bits, derive_seed(seed, &[0xBE7, r.time_index]))?;
                Ok(ResultRow {
                    time_index: r.time_index,
                    nmse: r.nmse,
                    ber: b.min(0.5),
                    rank_true: r.rank_true,
                    rank_est: r.rank_est,
                    success: r.nmse <= cfg.success_threshold,
                    iters_phase1: r.iters_phase1,
                    iters_phase2: r.iters_phase2,
                    runtime_ms: r.runtime_ms,
                    ..base.clone()
                })
            })
            .collect()
    };
    match run() {
        Ok(rows) => rows,
        Err(e) => vec![ResultRow { nmse: f64::NAN, ber: f64::NAN, error: e.to_string(), ..base }],
    }
}

/// Runs every (cell, trial, method) timeline, in parallel up to
/// `workers` threads. Row order does not depend on scheduling.
pub fn run_cells(cells: Vec<Cell>, methods: &[Method], n_trials: usize, workers: usize) -> Result<ExperimentResult> {
    let mut jobs = Vec::new();
    for c in 0..cells.len() {
        for trial in 0..n_trials {
            for (m, &method) in methods.iter().enumerate() {
                jobs.push((c, trial, m, method));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let mut blocks: Vec<((usize, usize, usize), Vec<ResultRow>)> = pool.install(|| {
        jobs.par_iter()
            .map(|&(c, trial, m, method)| ((c, trial, m), timeline_rows(&cells[c], trial, method)))
            .collect()
    });
    blocks.sort_by_key(|b| b.0);
    let rows = blocks
        .into_iter()
        .flat_map(|((c, _, _), rows)| rows.into_iter().map(move |r| (c, r)))
        .collect();
    Ok(ExperimentResult { cells, rows })
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    run_cells(cells(cfg), &cfg.methods, cfg.n_trials, cfg.workers)
}

pub fn run_sweep(cfg: &ExperimentConfig, axis: Axis, values: &[f64]) -> Result<ExperimentResult> {
    cfg.validate()?;
    run_cells(sweep_cells(cfg, axis, values)?, &cfg.methods, cfg.n_trials, cfg.workers)
}

/// NMSE versus retained measurement fraction.
pub fn pilot_overhead_sweep(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let values = cfg.pilot_overhead_list.clone();
    run_sweep(cfg, Axis::Overhead, &values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            snr_db_list: vec![20.0],
            n_trials: 2,
            n_steps: 2,
            methods: vec![Method::Proposed, Method::LsBaseline],
            ber_bits: 1000,
            workers: 2,
            ..Default::default()
        }
    }

    #[test]
    fn config_toml_round_trip_and_unknown_keys() {
        let cfg = small();
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), cfg);
        assert!(matches!(ExperimentConfig::from_toml_str("bogus = 1"), Err(Error::Config(_))));
        assert!(matches!(ExperimentConfig::from_toml_str("[channel]\nn_bss = 4"), Err(Error::Config(_))));
        assert!(matches!(ExperimentConfig::from_toml_str("n_trials = 0"), Err(Error::Config(_))));
        let partial = ExperimentConfig::from_toml_str("n_trials = 3\nmethods = [\"proposed\"]\n[channel]\nn_bs = 16").unwrap();
        assert_eq!(partial.n_trials, 3);
        assert_eq!(partial.channel.n_bs, 16);
        assert_eq!(partial.channel.n_ms, 8);
    }

    #[test]
    fn one_cell_one_trial_gives_one_row_per_step() {
        let cfg = ExperimentConfig { n_trials: 1, n_steps: 3, methods: vec![Method::Proposed], ..small() };
        let res = run_experiment(&cfg).unwrap();
        assert_eq!(res.rows.len(), 3);
        for (k, (_, r)) in res.rows.iter().enumerate() {
            assert_eq!(r.time_index, k as u64);
            assert!(r.nmse >= 0.0 && (0.0..=0.5).contains(&r.ber));
            assert_eq!(r.success, r.nmse <= cfg.success_threshold);
        }
    }

    #[test]
    fn trial_rows_do_not_depend_on_trial_count() {
        let a = run_experiment(&ExperimentConfig { n_trials: 2, ..small() }).unwrap();
        let b = run_experiment(&ExperimentConfig { n_trials: 3, workers: 1, ..small() }).unwrap();
        let strip = |rows: Vec<ResultRow>| rows.into_iter().map(|r| ResultRow { runtime_ms: 0.0, ..r }).collect::<Vec<_>>();
        let a = strip(a.result_rows());
        let b: Vec<ResultRow> = strip(b.result_rows()).into_iter().filter(|r| r.trial < 2).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn sweep_axes() {
        let cfg = small();
        let c = sweep_cells(&cfg, Axis::Nbs, &[4.0, 16.0]).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c[0].cfg.channel.n_bs, 4);
        assert_eq!(c[0].cfg.front_end.m_bs, 4);
        assert_eq!(c[1].axis_value, "16");
        assert!(sweep_cells(&cfg, Axis::Nbs, &[2.5]).is_err());
        let s = sweep_cells(&cfg, Axis::Snr, &[0.0, 10.0]).unwrap();
        assert_eq!(s[1].cond.snr_db, 10.0);
        assert!(Axis::parse("bogus").is_err());
    }

    #[test]
    fn failing_timeline_is_tagged() {
        let mut cfg = small();
        cfg.methods = vec![Method::Proposed];
        let mut cell = cells(&cfg).remove(0);
        // nonpositive overhead is rejected inside the timeline
        cell.cond.pilot_overhead = 0.0;
        let res = run_cells(vec![cell], &cfg.methods, 1, 1).unwrap();
        assert_eq!(res.error_count(), 1);
        assert!(res.rows[0].1.nmse.is_nan());
    }
}
