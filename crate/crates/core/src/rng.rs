//! Seeding helpers. Every random draw in the crate comes from a
//! `ChaCha8Rng` keyed by an explicit `u64`, so results are reproducible
//! across platforms and thread schedules.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::{c64, Complex64};

pub type SimRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent child seed from a parent seed and a path of tags.
/// Child seeds depend only on the path, never on how many siblings exist.
pub fn derive_seed(parent: u64, path: &[u64]) -> u64 {
    path.iter().fold(mix64(parent), |acc, &tag| mix64(acc ^ mix64(tag.wrapping_add(0x51ED_2701))))
}

/// Circularly-symmetric complex Gaussian with unit variance (`E|z|^2 = 1`).
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    c64(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}
