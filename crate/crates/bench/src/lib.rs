//! Fixed inputs shared by the benchmarks.

use mmwave_rank::chanmodel::{generate_channel, ChannelRealization};
use mmwave_rank::pipeline::PipelineConfig;
use mmwave_rank::rng::{complex_gaussian, rng_from_seed};
use mmwave_rank::sensing::{make_front_end, observe, puncture, PunctureMode};
use mmwave_rank::{ComplexMatrix, FrontEnd, Observation};

pub fn gaussian(rows: usize, cols: usize, seed: u64) -> ComplexMatrix {
    let mut rng = rng_from_seed(seed);
    ComplexMatrix::from_fn(rows, cols, |_, _| complex_gaussian(&mut rng))
}

/// Desk-scale channel, front end and a 20 dB observation with 10% missing.
pub fn scenario(seed: u64) -> (PipelineConfig, ChannelRealization, FrontEnd, Observation) {
    let cfg = PipelineConfig::default();
    let dict = cfg.base_dictionary().expect("default dictionary");
    let ch = generate_channel(&cfg.channel, &dict, 0, seed).expect("channel");
    let fe = make_front_end(cfg.channel.n_bs, cfg.front_end.m_bs, cfg.channel.n_ms, cfg.front_end.m_ms, seed).expect("front end");
    let obs = observe(&ch, &fe, 20.0, seed).expect("observe");
    let obs = puncture(&obs, 0.1, PunctureMode::Missing, seed).expect("puncture");
    (cfg, ch, fe, obs)
}
