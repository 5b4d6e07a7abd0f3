use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mmwave_rank::harness::output::write_outputs;
use mmwave_rank::harness::selftest::run_selftest;
use mmwave_rank::harness::{run_experiment, run_sweep, Axis, ExperimentConfig, ExperimentResult};
use mmwave_rank::pipeline::Method;
use mmwave_rank::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "mmwave-rank", version, about = "Rank-aware mmWave channel estimation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte-Carlo run over the config's SNR, miss and overhead lists.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
        /// Comma-separated subset of proposed, fixed_rank, omp_baseline, ls_baseline.
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<String>>,
    },
    /// One-dimensional sweep along an axis.
    Sweep {
        /// snr, overhead, miss, nbs or spread.
        #[arg(long)]
        axis: String,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        values: Vec<f64>,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Small deterministic end-to-end check.
    Selftest {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => Failure::Config(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

fn load(path: &Path, seed: Option<u64>, workers: Option<usize>, methods: Option<Vec<String>>) -> Result<ExperimentConfig, Failure> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(w) = workers {
        cfg.workers = w;
    }
    if let Some(ms) = methods {
        cfg.methods = ms.iter().map(|m| Method::parse(m.trim())).collect::<Result<_, _>>()?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn finish(res: &ExperimentResult, cfg: &ExperimentConfig, axis: Option<&str>, out: &Path) -> Result<(), Failure> {
    let manifest = write_outputs(res, cfg, axis, out).map_err(|e| Failure::Runtime(e.to_string()))?;
    println!("wrote {} rows to {}", manifest.rows, out.display());
    if manifest.error_rows > 0 {
        return Err(Failure::Runtime(format!("{} timelines failed; see the error column", manifest.error_rows)));
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { config, out, seed, workers, methods } => {
            let cfg = load(&config, seed, workers, methods)?;
            let res = run_experiment(&cfg)?;
            finish(&res, &cfg, None, &out)
        }
        Command::Sweep { axis, values, config, out } => {
            let cfg = load(&config, None, None, None)?;
            let ax = Axis::parse(&axis)?;
            let res = run_sweep(&cfg, ax, &values)?;
            finish(&res, &cfg, Some(ax.name()), &out)
        }
        Command::Selftest { out } => {
            let checks = run_selftest(out.as_deref())?;
            for c in &checks {
                println!("{c}");
            }
            if checks.iter().all(|c| c.passed) {
                Ok(())
            } else {
                Err(Failure::Runtime("selftest failed".into()))
            }
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
