//! Acceptance suite. Each test prints one `criterion N: PASS|FAIL ...` line.
//! Run with `cargo test -p mmwave-rank --test acceptance -- --nocapture`.

use mmwave_rank::chanmodel::{build_dictionary, generate_channel, numerical_rank, ChannelConfig};
use mmwave_rank::harness::selftest::run_selftest;
use mmwave_rank::harness::{median, run_experiment, ExperimentConfig, ResultRow};
use mmwave_rank::linalg::{least_squares_vec, norm2};
use mmwave_rank::lrmc::{complete_matrix, CompletionParams, CompletionResult, RankTrack};
use mmwave_rank::pipeline::{
    channel_trajectory, run_on_trajectory, run_timeline, Method, PipelineConfig, StepConditions,
};
use mmwave_rank::recovery::{pursuit, ra_bomp};
use mmwave_rank::rammd::{sub_grid, RammdConfig};
use mmwave_rank::rng::{complex_gaussian, derive_seed, rng_from_seed};
use mmwave_rank::sensing::{make_front_end, observe, puncture, PunctureMode};
use mmwave_rank::{Complex64, ComplexMatrix};
use rand::seq::index::sample;
use rayon::prelude::*;

fn verdict(n: usize, pass: bool, detail: String) {
    println!("criterion {n}: {} {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {n} failed: {detail}");
}

fn db(x: f64) -> f64 {
    10.0 * x.log10()
}

fn low_rank(n: usize, r: usize, seed: u64) -> ComplexMatrix {
    let mut rng = rng_from_seed(seed);
    let u = ComplexMatrix::from_fn(n, r, |_, _| complex_gaussian(&mut rng));
    let v = ComplexMatrix::from_fn(r, n, |_, _| complex_gaussian(&mut rng));
    u.matmul(&v).unwrap()
}

/// Criterion-1 instances: `(rank, relative error, result)`.
fn exact_recovery_runs() -> Vec<(usize, f64, CompletionResult)> {
    let n = 32;
    let jobs: Vec<(usize, u64)> = (1..=3).flat_map(|r| (0..100).map(move |s| (r, s))).collect();
    jobs.par_iter()
        .map(|&(r, s)| {
            let seed = derive_seed(0xC1, &[r as u64, s]);
            let m = low_rank(n, r, seed);
            let want = (3.0 * r as f64 * 64.0 * 1024f64.ln()).round() as usize;
            let k = want.min(n * n);
            let mut rng = rng_from_seed(derive_seed(seed, &[1]));
            let mut mask = vec![false; n * n];
            for i in sample(&mut rng, n * n, k) {
                mask[i] = true;
            }
            let track = RankTrack::new(1, 0.99).unwrap();
            let params = CompletionParams { mu: 0.0, ..CompletionParams::new(n, n) };
            let res = complete_matrix(&m, &mask, 0.0, &track, &params).unwrap();
            let err = (&res.completed - &m).frobenius_norm() / m.frobenius_norm();
            (r, err, res)
        })
        .collect()
}

#[test]
fn criterion_01_exact_recovery() {
    let runs = exact_recovery_runs();
    let mut worst = 100;
    for r in 1..=3 {
        let ok = runs.iter().filter(|x| x.0 == r && x.1 <= 1e-3).count();
        worst = worst.min(ok);
    }
    verdict(1, worst >= 95, format!("min successes over r=1..3: {worst}/100"));
}

#[test]
fn criterion_02_objective_monotone() {
    let cfg = ChannelConfig::default();
    let dict = build_dictionary(&cfg, 32, 32).unwrap();
    let results: Vec<(bool, usize)> = (0..50u64)
        .into_par_iter()
        .map(|s| {
            let ch = generate_channel(&cfg, &dict, 0, derive_seed(0xC2, &[s])).unwrap();
            let fe = make_front_end(8, 8, 8, 8, derive_seed(0xC2, &[s, 1])).unwrap();
            let obs = observe(&ch, &fe, 15.0, derive_seed(0xC2, &[s, 2])).unwrap();
            let obs = puncture(&obs, 0.3, PunctureMode::Missing, derive_seed(0xC2, &[s, 3])).unwrap();
            let track = RankTrack::new(1, 0.99).unwrap();
            let res = complete_matrix(&obs.y, obs.mask.bits(), obs.noise_var, &track, &CompletionParams::new(8, 8)).unwrap();
            let ok = res.objective_trace.windows(2).all(|w| w[1] <= w[0] + 1e-9);
            (ok, res.objective_trace.len())
        })
        .collect();
    let bad = results.iter().filter(|r| !r.0).count();
    let iters: usize = results.iter().map(|r| r.1).sum();
    verdict(2, bad == 0, format!("{bad}/50 traces increase; {iters} iterations checked"));
}

/// Least-squares best `k`-subset by exhaustive search.
fn exhaustive_support(y: &[Complex64], a: &ComplexMatrix, k: usize) -> Vec<usize> {
    let n = a.cols();
    let mut best = (f64::INFINITY, Vec::new());
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        let sub = a.select_columns(&idx);
        let x = least_squares_vec(&sub, y).unwrap();
        let fit = sub.mul_vec(&x);
        let res = norm2(&y.iter().zip(&fit).map(|(p, q)| p - q).collect::<Vec<_>>());
        if res < best.0 - 1e-12 {
            best = (res, idx.clone());
        }
        // next combination in lexicographic order
        let mut i = k;
        while i > 0 && idx[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            break;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
    best.1
}

#[test]
fn criterion_03_oracle_equivalence() {
    let cfg = ChannelConfig { min_separation_bins: 2, ..Default::default() };
    let dict = build_dictionary(&cfg, 8, 8).unwrap();
    let a = dict.kron_dictionary().unwrap();
    let agree: Vec<bool> = (0..100u64)
        .into_par_iter()
        .map(|s| {
            let k = 1 + (s % 3) as usize;
            let c = ChannelConfig { n_clusters: k, ..cfg.clone() };
            let ch = generate_channel(&c, &dict, 0, derive_seed(0xC3, &[s])).unwrap();
            let y = ch.h.vec();
            let mut omp = ra_bomp(&ch.h, &dict, k, 1, 1e-9).unwrap().support;
            let mut oracle = exhaustive_support(&y, &a, k);
            omp.sort_unstable();
            oracle.sort_unstable();
            omp == oracle
        })
        .collect();
    let n = agree.iter().filter(|&&x| x).count();
    verdict(3, n == 100, format!("{n}/100 supports match the exhaustive search"));
}

#[test]
fn criterion_04_rank_equals_sparsity() {
    let base = PipelineConfig::default();
    let dict = base.base_dictionary().unwrap();
    let rows: Vec<(bool, bool)> = (0..100u64)
        .into_par_iter()
        .map(|s| {
            let k = 1 + (s % 3) as usize;
            let cfg = PipelineConfig { channel: ChannelConfig { n_clusters: k, ..base.channel.clone() }, ..base.clone() };
            let seed = derive_seed(0xC4, &[s]);
            let ch = generate_channel(&cfg.channel, &dict, 0, seed).unwrap();
            let numeric = numerical_rank(&ch.h).unwrap() == ch.true_rank;
            let rep = run_timeline(&cfg, Method::Proposed, &StepConditions::new(25.0, 0.0), 1, seed).unwrap();
            (numeric, rep[0].rank_est == rep[0].rank_true)
        })
        .collect();
    let numeric = rows.iter().filter(|r| r.0).count();
    let est = rows.iter().filter(|r| r.1).count();
    verdict(4, numeric == 100 && est >= 95, format!("numerical rank matches {numeric}/100; rank_est matches {est}/100"));
}

fn medians(rows: &[ResultRow], key: impl Fn(&ResultRow) -> bool) -> f64 {
    median(&rows.iter().filter(|r| key(r)).map(|r| r.nmse).collect::<Vec<_>>())
}

#[test]
fn criterion_05_snr_trend() {
    let cfg = ExperimentConfig {
        snr_db_list: vec![0.0, 10.0, 20.0, 30.0],
        miss_frac_list: vec![0.1],
        n_trials: 100,
        n_steps: 3,
        methods: vec![Method::Proposed, Method::OmpBaseline, Method::LsBaseline],
        seed: 0xC5,
        ber_bits: 1000,
        ..Default::default()
    };
    let rows = run_experiment(&cfg).unwrap().result_rows();
    let mut pass = true;
    let mut detail = Vec::new();
    let mut prev = f64::INFINITY;
    for &snr in &cfg.snr_db_list {
        let m = |name: &str| medians(&rows, |r| r.snr_db == snr && r.method == name);
        let (p, o, l) = (m("proposed"), m("omp_baseline"), m("ls_baseline"));
        pass &= p < prev && p < o && p < l;
        prev = p;
        detail.push(format!("{snr}dB: {:.1}/{:.1}/{:.1}", db(p), db(o), db(l)));
    }
    verdict(5, pass, format!("median NMSE dB proposed/omp/ls {}", detail.join(", ")));
}

#[test]
fn criterion_06_ablation() {
    let cfg = PipelineConfig {
        channel: ChannelConfig { n_clusters: 2, forced_births: vec![3], ..Default::default() },
        ..Default::default()
    };
    let cond = StepConditions::new(25.0, 0.1);
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..100u64)
        .into_par_iter()
        .map(|s| {
            let seed = derive_seed(0xC6, &[s]);
            let truths = channel_trajectory(&cfg, 6, seed).unwrap();
            let run = |m| {
                run_on_trajectory(&cfg, m, &cond, &truths, seed)
                    .unwrap()
                    .into_iter()
                    .filter(|r| r.time_index >= 3)
                    .map(|r| r.nmse)
                    .collect::<Vec<_>>()
            };
            (run(Method::Proposed), run(Method::FixedRank))
        })
        .collect();
    let p = median(&pairs.iter().flat_map(|x| x.0.clone()).collect::<Vec<_>>());
    let f = median(&pairs.iter().flat_map(|x| x.1.clone()).collect::<Vec<_>>());
    verdict(6, p < f, format!("after the 2->3 birth: proposed {:.1} dB, fixed_rank {:.1} dB", db(p), db(f)));
}

#[test]
fn criterion_07_overhead_plateau() {
    let cfg = ExperimentConfig {
        snr_db_list: vec![20.0],
        miss_frac_list: vec![0.0],
        pilot_overhead_list: vec![0.08, 0.2],
        n_trials: 100,
        n_steps: 6,
        methods: vec![Method::Proposed, Method::OmpBaseline],
        seed: 0xC7,
        ber_bits: 1000,
        ..Default::default()
    };
    let rows = run_experiment(&cfg).unwrap().result_rows();
    let m = |name: &str, ov: f64| medians(&rows, |r| r.method == name && r.pilot_overhead == ov);
    let gap_p = db(m("proposed", 0.08)) - db(m("proposed", 0.2));
    let gap_o = db(m("omp_baseline", 0.08)) - db(m("omp_baseline", 0.2));
    verdict(
        7,
        gap_p.abs() <= 3.0 && gap_o.abs() > 3.0,
        format!("8% vs 20% gap: proposed {gap_p:.2} dB, omp_baseline {gap_o:.2} dB"),
    );
}

#[test]
fn criterion_08_tracking_latency() {
    let cfg = PipelineConfig {
        channel: ChannelConfig { n_clusters: 1, forced_births: vec![5], ..Default::default() },
        ..Default::default()
    };
    let cond = StepConditions::new(25.0, 0.1);
    let hits: Vec<bool> = (0..100u64)
        .into_par_iter()
        .map(|s| {
            let seed = derive_seed(0xC8, &[s]);
            let reps = run_timeline(&cfg, Method::Proposed, &cond, 8, seed).unwrap();
            let target = reps[5].rank_true;
            reps[5..=7].iter().any(|r| r.rank_est == target)
        })
        .collect();
    let n = hits.iter().filter(|&&h| h).count();
    verdict(8, n >= 90, format!("new rank reached within 2 instances in {n}/100"));
}

#[test]
fn criterion_09_rammd_benefit() {
    let base = PipelineConfig {
        channel: ChannelConfig { on_grid: false, ..Default::default() },
        ..Default::default()
    };
    let control = PipelineConfig { solver: mmwave_rank::pipeline::SolverConfig { rammd: false, ..base.solver.clone() }, ..base.clone() };
    let cond = StepConditions::new(25.0, 0.1);
    let diffs: Vec<f64> = (0..100u64)
        .into_par_iter()
        .map(|s| {
            let seed = derive_seed(0xC9, &[s]);
            let truths = channel_trajectory(&base, 2, seed).unwrap();
            let focused = run_on_trajectory(&base, Method::Proposed, &cond, &truths, seed).unwrap();
            let stat = run_on_trajectory(&control, Method::Proposed, &cond, &truths, seed).unwrap();
            db(focused[1].nmse) - db(stat[1].nmse)
        })
        .collect();
    let med = median(&diffs);

    // Geometry: a true AoA inside a window is at most half a sub-grid step
    // from the focused grid, versus half a base step on the uniform grid.
    let rc = RammdConfig::default();
    let l = 32;
    let half = rc.delta_theta_rad() / 2.0;
    let full = std::f64::consts::PI;
    let mut geometric = true;
    for k in 0..50 {
        let c = -1.2 + 2.4 * k as f64 / 49.0;
        let g = sub_grid(c - half, c + half, l);
        let worst = (0..=1000)
            .map(|q| c - half + 2.0 * half * q as f64 / 1000.0)
            .map(|t| g.iter().map(|a| (a - t).abs()).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max);
        let uniform_worst = full / l as f64;
        geometric &= worst <= uniform_worst * (2.0 * half / full) + 1e-12;
    }
    verdict(
        9,
        med < 0.0 && geometric,
        format!("median step-2 NMSE change vs static dictionary {med:.2} dB; geometric bound holds: {geometric}"),
    );
}

#[test]
fn criterion_10_complexity_contract() {
    let cfg = ChannelConfig::default();
    let dict = build_dictionary(&cfg, 32, 32).unwrap();
    let mut contract = true;
    for s in 0..100u64 {
        let ch = generate_channel(&ChannelConfig { n_clusters: 1 + (s % 3) as usize, ..cfg.clone() }, &dict, 0, s).unwrap();
        let fe = make_front_end(8, 8, 8, 8, s).unwrap();
        let obs = observe(&ch, &fe, 20.0, s).unwrap();
        let phi = mmwave_rank::recovery::composite_dictionary(&fe, &dict).unwrap();
        for budget in 1..=4 {
            let p = pursuit(&obs.y.vec(), &phi, budget, 1, 0.0).unwrap();
            contract &= p.iterations == budget && p.support.len() == budget;
        }
    }
    let runs = exact_recovery_runs();
    let max_iters = CompletionParams::new(32, 32).max_iters;
    let within = runs.iter().all(|r| r.2.iterations <= max_iters);
    let conv = runs.iter().filter(|r| r.2.converged).count() as f64 / runs.len() as f64;
    verdict(
        10,
        contract && within && conv >= 0.99,
        format!("pursuit stops at the budget: {contract}; phase I within max_iters: {within}; converged {:.1}%", 100.0 * conv),
    );
}

#[test]
fn criterion_11_determinism() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_selftest(Some(a.path())).unwrap();
    run_selftest(Some(b.path())).unwrap();
    let read = |d: &std::path::Path| {
        let text = std::fs::read_to_string(d.join("results.csv")).unwrap();
        mmwave_rank::harness::output::strip_runtime(&text).unwrap()
    };
    let same = read(a.path()) == read(b.path());
    verdict(11, same, "results.csv identical modulo runtime_ms".into());
}
