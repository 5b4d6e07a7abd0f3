//! Small deterministic end-to-end run used by `mmwave-rank selftest`.

use std::path::Path;

use super::output::{csv_string, strip_runtime, write_outputs};
use super::{run_experiment, ExperimentConfig};
use crate::error::Result;
use crate::pipeline::Method;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

pub fn selftest_config() -> ExperimentConfig {
    ExperimentConfig {
        snr_db_list: vec![10.0, 25.0],
        miss_frac_list: vec![0.1],
        n_trials: 4,
        n_steps: 3,
        methods: Method::ALL.to_vec(),
        seed: 7,
        ber_bits: 1000,
        ..Default::default()
    }
}

/// Runs the self-test experiment twice and checks row counts, error
/// freedom, reproducibility and a loose accuracy floor at 25 dB.
pub fn run_selftest(out: Option<&Path>) -> Result<Vec<Check>> {
    let cfg = selftest_config();
    let a = run_experiment(&cfg)?;
    let b = run_experiment(&ExperimentConfig { workers: 1, ..cfg.clone() })?;
    if let Some(dir) = out {
        write_outputs(&a, &cfg, None, dir)?;
    }

    let expected = cfg.snr_db_list.len() * cfg.n_trials * cfg.methods.len() * cfg.n_steps;
    let mut checks = vec![Check {
        name: "row_count",
        passed: a.rows.len() == expected,
        detail: format!("{} rows, expected {expected}", a.rows.len()),
    }];
    checks.push(Check {
        name: "no_errors",
        passed: a.error_count() == 0,
        detail: format!("{} error rows", a.error_count()),
    });
    let same = strip_runtime(&csv_string(&a.result_rows())?)? == strip_runtime(&csv_string(&b.result_rows())?)?;
    checks.push(Check { name: "reproducible", passed: same, detail: "results match across worker counts".into() });
    let hi: Vec<f64> = a
        .result_rows()
        .into_iter()
        .filter(|r| r.method == Method::Proposed.name() && r.snr_db == 25.0)
        .map(|r| r.nmse)
        .collect();
    let med = super::median(&hi);
    checks.push(Check {
        name: "proposed_accuracy",
        passed: med <= 1e-1,
        detail: format!("median NMSE at 25 dB = {med:.3e}"),
    });
    Ok(checks)
}
