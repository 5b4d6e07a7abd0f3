//! Hybrid front ends and synthesis of noisy, partially observed measurements.

use std::f64::consts::PI;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::chanmodel::ChannelRealization;
use crate::error::{Error, Result};
use crate::linalg::{kron, svd, Complex64, ComplexMatrix};
use crate::rng::{complex_gaussian, rng_from_seed};

/// Row-major binary mask.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mask {
    rows: usize,
    cols: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn full(rows: usize, cols: usize) -> Self {
        Self { rows, cols, bits: vec![true; rows * cols] }
    }

    pub fn from_bits(rows: usize, cols: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                op: "mask",
                expected: format!("{} bits", rows * cols),
                found: format!("{}", bits.len()),
            });
        }
        Ok(Self { rows, cols, bits })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: bool) {
        self.bits[i * self.cols + j] = v;
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn fraction(&self) -> f64 {
        self.count() as f64 / self.bits.len() as f64
    }

    pub fn is_full(&self) -> bool {
        self.bits.iter().all(|&b| b)
    }

    /// Column-major indices of set bits (matching `ComplexMatrix::vec`).
    pub fn vec_indices(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.count());
        for j in 0..self.cols {
            for i in 0..self.rows {
                if self.get(i, j) {
                    out.push(j * self.rows + i);
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontEnd {
    /// Precoder `F = F_RF F_BB`, `n_bs × m_bs`.
    pub f: ComplexMatrix,
    /// Combiner `W`, `n_ms × m_ms`.
    pub w: ComplexMatrix,
    /// Pilot matrix `S`, `m_bs × m_bs`.
    pub training: ComplexMatrix,
}

impl FrontEnd {
    pub fn m_bs(&self) -> usize {
        self.f.cols()
    }

    pub fn m_ms(&self) -> usize {
        self.w.cols()
    }

    pub fn n_bs(&self) -> usize {
        self.f.rows()
    }

    pub fn n_ms(&self) -> usize {
        self.w.rows()
    }

    /// Effective transmit block `F Sᵀ`.
    pub fn tx_block(&self) -> ComplexMatrix {
        &self.f * &self.training.transpose()
    }

    /// Same front end with the combiner replaced.
    pub fn with_combiner(&self, w: ComplexMatrix) -> Result<Self> {
        if w.rows() != self.n_ms() {
            return Err(Error::DimensionMismatch {
                op: "with_combiner",
                expected: format!("{} rows", self.n_ms()),
                found: format!("{} rows", w.rows()),
            });
        }
        Ok(Self { w, ..self.clone() })
    }
}

/// A measurement snapshot.
///
/// `measured` marks the entries the pilot schedule actually sounded;
/// `mask` (Ω) is the subset that also survived puncturing. Receivers know
/// `measured`, but only the completion stage knows which measured entries
/// were lost or corrupted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub y: ComplexMatrix,
    pub mask: Mask,
    pub measured: Mask,
    pub front_end: FrontEnd,
    pub noise_var: f64,
    pub time_index: u64,
}

impl Observation {
    pub fn observed_fraction(&self) -> f64 {
        self.mask.fraction()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PunctureMode {
    Missing,
    Corrupt,
}

/// Phase-shifter matrix with i.i.d. uniform phases, entries `e^{jφ}/√rows`.
pub fn random_phase_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> ComplexMatrix {
    let scale = 1.0 / (rows as f64).sqrt();
    ComplexMatrix::from_fn(rows, cols, |_, _| Complex64::from_polar(scale, rng.random_range(0.0..2.0 * PI)))
}

/// Random analog front end with identity baseband and identity pilots.
pub fn make_front_end(n_bs: usize, m_bs: usize, n_ms: usize, m_ms: usize, rng_seed: u64) -> Result<FrontEnd> {
    if m_bs == 0 || m_ms == 0 || m_bs > n_bs || m_ms > n_ms {
        return Err(Error::contract(format!(
            "RF chains must be in 1..=antennas (m_bs={m_bs}, n_bs={n_bs}, m_ms={m_ms}, n_ms={n_ms})"
        )));
    }
    let mut rng = rng_from_seed(rng_seed);
    let f = random_phase_matrix(n_bs, m_bs, &mut rng);
    let w = random_phase_matrix(n_ms, m_ms, &mut rng);
    Ok(FrontEnd { f, w, training: ComplexMatrix::identity(m_bs) })
}

/// Noiseless post-combining signal `Wᴴ H F Sᵀ`.
pub fn noiseless_measurement(h: &ComplexMatrix, fe: &FrontEnd) -> Result<ComplexMatrix> {
    fe.w.adjoint().matmul(h)?.matmul(&fe.tx_block())
}

/// Noisy full observation. `snr_db = +∞` disables noise.
///
/// The noise variance is set from the actual signal energy `‖Wᴴ H F‖²`;
/// when that is zero a unit per-entry reference power is used instead.
pub fn observe(h: &ChannelRealization, fe: &FrontEnd, snr_db: f64, rng_seed: u64) -> Result<Observation> {
    if h.h.shape() != (fe.n_ms(), fe.n_bs()) {
        return Err(Error::DimensionMismatch {
            op: "observe",
            expected: format!("{}x{}", fe.n_ms(), fe.n_bs()),
            found: format!("{:?}", h.h.shape()),
        });
    }
    if snr_db.is_nan() {
        return Err(Error::contract("snr_db is NaN"));
    }
    let signal = noiseless_measurement(&h.h, fe)?;
    let (rows, cols) = signal.shape();
    let count = (rows * cols) as f64;
    let energy = fe.w.adjoint().matmul(&h.h)?.matmul(&fe.f)?.frobenius_norm_sqr();
    let noise_var = if snr_db == f64::INFINITY {
        0.0
    } else {
        let per_entry = if energy > 0.0 { energy / count } else { 1.0 };
        per_entry / 10f64.powf(snr_db / 10.0)
    };
    let y = if noise_var > 0.0 {
        let mut rng = rng_from_seed(rng_seed);
        let sd = noise_var.sqrt();
        signal.map(|s| s + complex_gaussian(&mut rng) * sd)
    } else {
        signal
    };
    Ok(Observation {
        y,
        mask: Mask::full(rows, cols),
        measured: Mask::full(rows, cols),
        front_end: fe.clone(),
        noise_var,
        time_index: h.time_index,
    })
}

/// Keeps `round(overhead · count)` measurement entries (at least one),
/// dropping the rest from both `measured` and `mask`.
pub fn restrict_measurements(obs: &Observation, overhead: f64, rng_seed: u64) -> Result<Observation> {
    if !(overhead > 0.0 && overhead <= 1.0) {
        return Err(Error::contract(format!("pilot overhead {overhead} outside (0, 1]")));
    }
    let (rows, cols) = obs.y.shape();
    let total = rows * cols;
    let keep = ((overhead * total as f64).round() as usize).clamp(1, total);
    if keep == total {
        return Ok(obs.clone());
    }
    let mut rng = rng_from_seed(rng_seed);
    let mut bits = vec![false; total];
    for k in sample(&mut rng, total, keep) {
        bits[k] = true;
    }
    let mut out = obs.clone();
    for (k, &b) in bits.iter().enumerate() {
        if !b {
            let (i, j) = (k / cols, k % cols);
            out.y[(i, j)] = Complex64::new(0.0, 0.0);
            out.mask.set(i, j, false);
            out.measured.set(i, j, false);
        }
    }
    Ok(out)
}

/// Removes `⌈miss_frac · |Ω|⌉` observed entries from Ω.
///
/// `Missing` zeroes them. `Corrupt` overwrites them with Gaussian values of
/// the observed entries' mean power; they stay in `measured`, so estimators
/// that ignore Ω consume the corrupted values.
pub fn puncture(obs: &Observation, miss_frac: f64, mode: PunctureMode, rng_seed: u64) -> Result<Observation> {
    if !(0.0..1.0).contains(&miss_frac) {
        return Err(Error::contract(format!("miss_frac {miss_frac} outside [0, 1)")));
    }
    let (rows, cols) = obs.y.shape();
    let observed: Vec<(usize, usize)> = (0..rows)
        .flat_map(|i| (0..cols).map(move |j| (i, j)))
        .filter(|&(i, j)| obs.mask.get(i, j))
        .collect();
    let n_drop = (miss_frac * observed.len() as f64 - 1e-9).ceil().max(0.0) as usize;
    let mut out = obs.clone();
    if n_drop == 0 {
        return Ok(out);
    }
    let power = observed.iter().map(|&(i, j)| obs.y[(i, j)].norm_sqr()).sum::<f64>() / observed.len() as f64;
    let mut rng = rng_from_seed(rng_seed);
    let mut picked: Vec<usize> = sample(&mut rng, observed.len(), n_drop).into_vec();
    picked.sort_unstable();
    for k in picked {
        let (i, j) = observed[k];
        out.mask.set(i, j, false);
        out.y[(i, j)] = match mode {
            PunctureMode::Missing => Complex64::new(0.0, 0.0),
            PunctureMode::Corrupt => complex_gaussian(&mut rng) * power.sqrt(),
        };
    }
    Ok(out)
}

/// `𝒳 = (F Sᵀ)ᵀ ⊗ Wᴴ`, so that `vec(Wᴴ H F Sᵀ) = 𝒳 vec(H)`.
pub fn measurement_operator(fe: &FrontEnd) -> Result<ComplexMatrix> {
    kron(&fe.tx_block().transpose(), &fe.w.adjoint())
}

/// Numerical rank of a front-end block at the solver tolerance.
pub fn block_rank(m: &ComplexMatrix) -> Result<usize> {
    Ok(svd(m)?.rank_at(1e-10))
}
