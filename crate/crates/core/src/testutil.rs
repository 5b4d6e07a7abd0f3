//! Helpers shared by unit tests.

use crate::linalg::ComplexMatrix;
use crate::rng::{complex_gaussian, rng_from_seed};

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> ComplexMatrix {
    let mut rng = rng_from_seed(seed ^ 0xA5A5_0000);
    ComplexMatrix::from_fn(rows, cols, |_, _| complex_gaussian(&mut rng))
}
