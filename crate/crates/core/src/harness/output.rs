//! CSV emission, aggregation and the run manifest.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::metrics::{median, percentile};
use super::{ExperimentConfig, ExperimentResult, ResultRow, PILOT_OVERHEAD_SEMANTICS};
use crate::error::Result;

pub const RESULT_COLUMNS: [&str; 17] = [
    "trial", "time_index", "method", "snr_db", "miss_frac", "pilot_overhead", "n_bs", "n_ms", "nmse", "ber",
    "rank_true", "rank_est", "success", "iters_phase1", "iters_phase2", "runtime_ms", "error",
];

/// Value rounded to 9 significant digits, printed in shortest form.
pub fn fmt9(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    format!("{}", quantize9(x))
}

pub fn quantize9(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.8e}").parse().unwrap_or(x)
}

fn row_record(r: &ResultRow) -> Vec<String> {
    vec![
        r.trial.to_string(),
        r.time_index.to_string(),
        r.method.clone(),
        fmt9(r.snr_db),
        fmt9(r.miss_frac),
        fmt9(r.pilot_overhead),
        r.n_bs.to_string(),
        r.n_ms.to_string(),
        fmt9(r.nmse),
        fmt9(r.ber),
        r.rank_true.to_string(),
        r.rank_est.to_string(),
        r.success.to_string(),
        r.iters_phase1.to_string(),
        r.iters_phase2.to_string(),
        fmt9(r.runtime_ms),
        r.error.clone(),
    ]
}

pub fn write_csv<W: Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RESULT_COLUMNS)?;
    for r in rows {
        w.write_record(row_record(r))?;
    }
    w.flush()?;
    Ok(())
}

pub fn csv_string(rows: &[ResultRow]) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

pub fn parse_csv<R: Read>(input: R) -> Result<Vec<ResultRow>> {
    let mut rd = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for rec in rd.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}

/// The CSV text with the `runtime_ms` column removed.
pub fn strip_runtime(csv_text: &str) -> Result<String> {
    let mut rd = csv::ReaderBuilder::new().has_headers(false).from_reader(csv_text.as_bytes());
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        let col = RESULT_COLUMNS.iter().position(|c| *c == "runtime_ms").unwrap();
        for rec in rd.records() {
            let rec = rec?;
            let kept: Vec<&str> = rec.iter().enumerate().filter(|(i, _)| *i != col).map(|(_, f)| f).collect();
            w.write_record(kept)?;
        }
        w.flush()?;
    }
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub axis: String,
    pub axis_value: String,
    pub method: String,
    pub snr_db: f64,
    pub miss_frac: f64,
    pub pilot_overhead: f64,
    pub n_bs: usize,
    pub n_ms: usize,
    pub count: usize,
    pub errors: usize,
    pub nmse_mean: f64,
    pub nmse_median: f64,
    pub nmse_p10: f64,
    pub nmse_p90: f64,
    pub ber_mean: f64,
    pub success_prob: f64,
    pub rank_accuracy: f64,
}

/// Aggregates per (cell, method). Error-tagged rows are counted, not averaged.
pub fn summarize(res: &ExperimentResult) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(usize, String), Vec<&ResultRow>> = BTreeMap::new();
    for (c, r) in &res.rows {
        groups.entry((*c, r.method.clone())).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((c, method), rows)| {
            let cell = &res.cells[c];
            let ok: Vec<&ResultRow> = rows.iter().copied().filter(|r| r.error.is_empty()).collect();
            let nmse: Vec<f64> = ok.iter().map(|r| r.nmse).collect();
            let mean = |v: &[f64]| if v.is_empty() { f64::NAN } else { v.iter().sum::<f64>() / v.len() as f64 };
            let frac = |pred: &dyn Fn(&ResultRow) -> bool| {
                if ok.is_empty() {
                    f64::NAN
                } else {
                    ok.iter().filter(|r| pred(r)).count() as f64 / ok.len() as f64
                }
            };
            SummaryRow {
                axis: cell.axis.clone(),
                axis_value: cell.axis_value.clone(),
                method,
                snr_db: cell.cond.snr_db,
                miss_frac: cell.cond.miss_frac,
                pilot_overhead: cell.cond.pilot_overhead,
                n_bs: cell.cfg.channel.n_bs,
                n_ms: cell.cfg.channel.n_ms,
                count: ok.len(),
                errors: rows.len() - ok.len(),
                nmse_mean: mean(&nmse),
                nmse_median: median(&nmse),
                nmse_p10: percentile(&nmse, 0.1),
                nmse_p90: percentile(&nmse, 0.9),
                ber_mean: mean(&ok.iter().map(|r| r.ber).collect::<Vec<_>>()),
                success_prob: frac(&|r| r.success),
                rank_accuracy: frac(&|r| r.rank_est == r.rank_true),
            }
        })
        .collect()
}

pub fn write_summary<W: Write>(rows: &[SummaryRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "axis", "axis_value", "method", "snr_db", "miss_frac", "pilot_overhead", "n_bs", "n_ms", "count", "errors",
        "nmse_mean", "nmse_median", "nmse_p10", "nmse_p90", "ber_mean", "success_prob", "rank_accuracy",
    ])?;
    for s in rows {
        w.write_record([
            s.axis.clone(),
            s.axis_value.clone(),
            s.method.clone(),
            fmt9(s.snr_db),
            fmt9(s.miss_frac),
            fmt9(s.pilot_overhead),
            s.n_bs.to_string(),
            s.n_ms.to_string(),
            s.count.to_string(),
            s.errors.to_string(),
            fmt9(s.nmse_mean),
            fmt9(s.nmse_median),
            fmt9(s.nmse_p10),
            fmt9(s.nmse_p90),
            fmt9(s.ber_mean),
            fmt9(s.success_prob),
            fmt9(s.rank_accuracy),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn config_hash(cfg: &ExperimentConfig) -> Result<String> {
    let text = cfg.to_toml_string()?;
    Ok(hex::encode(Sha256::digest(text.as_bytes())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config_sha256: String,
    pub seed: u64,
    pub methods: Vec<String>,
    pub sweep_axis: Option<String>,
    pub rows: usize,
    pub error_rows: usize,
    pub pilot_overhead_semantics: String,
    pub config: ExperimentConfig,
}

/// Writes `results.csv`, `summary.csv` and `run.json` into `dir`.
pub fn write_outputs(res: &ExperimentResult, cfg: &ExperimentConfig, sweep_axis: Option<&str>, dir: &Path) -> Result<Manifest> {
    std::fs::create_dir_all(dir)?;
    write_csv(&res.result_rows(), std::fs::File::create(dir.join("results.csv"))?)?;
    write_summary(&summarize(res), std::fs::File::create(dir.join("summary.csv"))?)?;
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_sha256: config_hash(cfg)?,
        seed: cfg.seed,
        methods: cfg.methods.iter().map(|m| m.name().to_string()).collect(),
        sweep_axis: sweep_axis.map(str::to_string),
        rows: res.rows.len(),
        error_rows: res.error_count(),
        pilot_overhead_semantics: PILOT_OVERHEAD_SEMANTICS.to_string(),
        config: cfg.clone(),
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| crate::Error::Config(e.to_string()))?;
    std::fs::write(dir.join("run.json"), json)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{Cell, ExperimentResult};
    use crate::pipeline::StepConditions;
    use proptest::prelude::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(fmt9(25.0), "25");
        assert_eq!(fmt9(0.1), "0.1");
        assert_eq!(fmt9(1.0 / 3.0), "0.333333333");
        assert_eq!(fmt9(123456789012.0), "123456789000");
        assert_eq!(fmt9(f64::NAN), "NaN");
        assert_eq!(fmt9(f64::INFINITY), "inf");
    }

    fn arb_row() -> impl Strategy<Value = ResultRow> {
        (
            (0u64..1000, 0u64..100, prop::sample::select(vec!["proposed", "fixed_rank", "omp_baseline", "ls_baseline"])),
            (-10.0f64..40.0, 0.0f64..1.0, 0.01f64..1.0, 1usize..64, 1usize..64),
            (0.0f64..1e3, 0.0f64..0.5, 1usize..8, 1usize..8, any::<bool>()),
            (0usize..500, 0usize..8, 0.0f64..1e4, prop::sample::select(vec!["", "no observations", "a, \"quoted\" error"])),
        )
            .prop_map(|((trial, t, m), (snr, miss, ov, nb, nm), (nmse, ber, rt, re, s), (i1, i2, ms, err))| ResultRow {
                trial,
                time_index: t,
                method: m.to_string(),
                snr_db: snr,
                miss_frac: miss,
                pilot_overhead: ov,
                n_bs: nb,
                n_ms: nm,
                nmse,
                ber,
                rank_true: rt,
                rank_est: re,
                success: s,
                iters_phase1: i1,
                iters_phase2: i2,
                runtime_ms: ms,
                error: err.to_string(),
            })
    }

    fn quantized(r: &ResultRow) -> ResultRow {
        ResultRow {
            snr_db: quantize9(r.snr_db),
            miss_frac: quantize9(r.miss_frac),
            pilot_overhead: quantize9(r.pilot_overhead),
            nmse: quantize9(r.nmse),
            ber: quantize9(r.ber),
            runtime_ms: quantize9(r.runtime_ms),
            ..r.clone()
        }
    }

    proptest! {
        #[test]
        fn csv_round_trip(rows in prop::collection::vec(arb_row(), 0..20)) {
            let rows: Vec<ResultRow> = rows.iter().map(quantized).collect();
            let text = csv_string(&rows).unwrap();
            let back = parse_csv(text.as_bytes()).unwrap();
            prop_assert_eq!(&back, &rows);
            prop_assert_eq!(csv_string(&back).unwrap(), text);
        }
    }

    #[test]
    fn header_and_strip() {
        let text = csv_string(&[ResultRow { runtime_ms: 1.5, method: "proposed".into(), ..Default::default() }]).unwrap();
        assert!(text.starts_with("trial,time_index,method,snr_db"));
        let s = strip_runtime(&text).unwrap();
        assert!(!s.contains("runtime_ms"));
        assert!(!s.contains("1.5"));
    }

    #[test]
    fn summary_excludes_error_rows() {
        let cfg = ExperimentConfig::default();
        let cell = Cell { axis: "snr".into(), axis_value: "10".into(), cond: StepConditions::new(10.0, 0.1), cfg };
        let good = |n: f64| ResultRow { method: "proposed".into(), nmse: n, success: n <= 1e-2, ..Default::default() };
        let bad = ResultRow { method: "proposed".into(), nmse: f64::NAN, error: "boom".into(), ..Default::default() };
        let res = ExperimentResult { cells: vec![cell], rows: vec![(0, good(1e-3)), (0, good(1e-1)), (0, bad)] };
        let s = summarize(&res);
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].count, 2);
        assert_eq!(s[0].errors, 1);
        assert!((s[0].nmse_mean - 0.0505).abs() < 1e-12);
        assert_eq!(s[0].success_prob, 0.5);
    }
}
