//! Estimation quality metrics.

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{dot_conj, svd, Complex64, ComplexMatrix};
use crate::rng::{complex_gaussian, rng_from_seed};
use crate::sensing::FrontEnd;

use super::ResultRow;

/// `‖H − Ĥ‖²_F / ‖H‖²_F`.
pub fn nmse(h_true: &ComplexMatrix, h_est: &ComplexMatrix) -> Result<f64> {
    if h_true.shape() != h_est.shape() {
        return Err(Error::DimensionMismatch {
            op: "nmse",
            expected: format!("{:?}", h_true.shape()),
            found: format!("{:?}", h_est.shape()),
        });
    }
    let e = h_true.frobenius_norm_sqr();
    if e == 0.0 {
        return Err(Error::contract("nmse against a zero channel"));
    }
    Ok((h_true - h_est).frobenius_norm_sqr() / e)
}

/// Uncoded QPSK bit error rate of one stream through `G = Wᴴ H F`.
///
/// The transmitter beamforms along the dominant right singular vector of
/// the estimated `Ĝ = Wᴴ Ĥ F` and the receiver applies the LMMSE combiner
/// built from `Ĝ`. Noise per receive branch has variance
/// `‖G‖²_F / (m_ms · m_bs) / SNR`, matching the sounding SNR definition.
pub fn ber(h_true: &ComplexMatrix, h_est: &ComplexMatrix, fe: &FrontEnd, snr_db: f64, n_bits: usize, rng_seed: u64) -> Result<f64> {
    if n_bits < 2 {
        return Err(Error::contract("ber needs at least two bits"));
    }
    let wh = fe.w.adjoint();
    let g = wh.matmul(h_true)?.matmul(&fe.f)?;
    let g_hat = wh.matmul(h_est)?.matmul(&fe.f)?;
    let (m, n) = g.shape();

    let v = if g_hat.frobenius_norm() > 0.0 {
        svd(&g_hat)?.right.column(0)
    } else {
        let mut e = vec![Complex64::new(0.0, 0.0); n];
        e[0] = Complex64::new(1.0, 0.0);
        e
    };
    let eff = g.mul_vec(&v);
    let eff_hat = g_hat.mul_vec(&v);
    let sigma2 = if snr_db == f64::INFINITY {
        0.0
    } else {
        g.frobenius_norm_sqr() / (m * n) as f64 / 10f64.powf(snr_db / 10.0)
    };
    // (ĝ ĝᴴ + σ² I)⁻¹ ĝ = ĝ / (‖ĝ‖² + σ²)
    let denom = eff_hat.iter().map(|z| z.norm_sqr()).sum::<f64>() + sigma2;

    let mut rng = rng_from_seed(rng_seed);
    let n_sym = n_bits / 2;
    let amp = std::f64::consts::FRAC_1_SQRT_2;
    let mut errors = 0usize;
    let mut r = vec![Complex64::new(0.0, 0.0); m];
    for _ in 0..n_sym {
        let b0: bool = rng.random();
        let b1: bool = rng.random();
        let s = Complex64::new(if b0 { amp } else { -amp }, if b1 { amp } else { -amp });
        for (ri, gi) in r.iter_mut().zip(&eff) {
            *ri = gi * s + complex_gaussian(&mut rng) * sigma2.sqrt();
        }
        let s_hat = if denom > 0.0 { dot_conj(&eff_hat, &r) / denom } else { Complex64::new(0.0, 0.0) };
        let d0 = decide(s_hat.re, &mut rng);
        let d1 = decide(s_hat.im, &mut rng);
        errors += usize::from(d0 != b0) + usize::from(d1 != b1);
    }
    Ok(errors as f64 / (2 * n_sym) as f64)
}

fn decide(x: f64, rng: &mut impl Rng) -> bool {
    if x == 0.0 {
        rng.random()
    } else {
        x > 0.0
    }
}

/// Share of successful rows among those without an error tag.
pub fn success_probability(rows: &[ResultRow]) -> Result<f64> {
    let ok: Vec<&ResultRow> = rows.iter().filter(|r| r.error.is_empty()).collect();
    if ok.is_empty() {
        return Err(Error::contract("success probability of an empty group"));
    }
    Ok(ok.iter().filter(|r| r.success).count() as f64 / ok.len() as f64)
}

/// Linear-interpolation percentile (`q` in `[0, 1]`) of unsorted data.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

pub fn median(values: &[f64]) -> f64 {
    percentile(values, 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensing::make_front_end;
    use crate::testutil::random_matrix;

    #[test]
    fn nmse_examples() {
        let h = random_matrix(4, 4, 1);
        assert_eq!(nmse(&h, &h).unwrap(), 0.0);
        assert!((nmse(&h, &ComplexMatrix::zeros(4, 4)).unwrap() - 1.0).abs() < 1e-15);
        assert!((nmse(&h, &h.scale_real(2.0)).unwrap() - 1.0).abs() < 1e-15);
        assert!(nmse(&ComplexMatrix::zeros(4, 4), &h).is_err());
    }

    #[test]
    fn ber_examples() {
        let h = random_matrix(8, 8, 2);
        let fe = make_front_end(8, 8, 8, 8, 3).unwrap();
        assert_eq!(ber(&h, &h, &fe, f64::INFINITY, 2000, 4).unwrap(), 0.0);
        let b = ber(&h, &ComplexMatrix::zeros(8, 8), &fe, 10.0, 10_000, 5).unwrap();
        assert!((b - 0.5).abs() <= 0.03, "{b}");
        let noisy = h.map(|z| z + Complex64::new(0.3, -0.2));
        let perfect = ber(&h, &h, &fe, -5.0, 10_000, 6).unwrap();
        let rough = ber(&h, &noisy, &fe, -5.0, 10_000, 6).unwrap();
        assert!(perfect <= rough, "{perfect} vs {rough}");
        assert!(perfect > 0.0);
    }

    fn row(success: bool) -> ResultRow {
        ResultRow { success, ..ResultRow::default() }
    }

    #[test]
    fn success_probability_examples() {
        assert_eq!(success_probability(&vec![row(true); 4]).unwrap(), 1.0);
        assert_eq!(success_probability(&vec![row(false); 4]).unwrap(), 0.0);
        let mut rows = vec![row(true); 7];
        rows.extend(vec![row(false); 3]);
        assert!((success_probability(&rows).unwrap() - 0.7).abs() < 1e-15);
        assert!(success_probability(&[]).is_err());
    }

    #[test]
    fn percentiles() {
        let v = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(median(&v), 2.5);
        assert_eq!(percentile(&v, 0.0), 1.0);
        assert_eq!(percentile(&v, 1.0), 4.0);
        assert!((percentile(&v, 0.1) - 1.3).abs() < 1e-12);
    }
}
