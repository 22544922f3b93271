//! Ground-truth spectra and noise calibrated to a target SNR.

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::linalg::SupportSet;
use crate::matgen::{dot, norm2, MeasurementMatrix};
use crate::seed::RngSeed;

use super::HarnessError;

/// A `k`-sparse length-`n` spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSpectrum {
    pub x: Vec<f64>,
    /// Ascending.
    pub support: SupportSet,
    pub k: usize,
}

/// Draws `k` distinct support positions uniformly at random and i.i.d.
/// `N(mean, var)` amplitudes on them.
pub fn gen_sparse_spectrum(n: usize, k: usize, mean: f64, var: f64, seed: RngSeed) -> Result<SparseSpectrum, HarnessError> {
    sparse_spectrum_from_rng(n, k, mean, var, &mut seed.stream(0))
}

pub(crate) fn sparse_spectrum_from_rng<R: Rng>(
    n: usize,
    k: usize,
    mean: f64,
    var: f64,
    rng: &mut R,
) -> Result<SparseSpectrum, HarnessError> {
    if k > n {
        return Err(HarnessError::InvalidConfig(format!("sparsity {k} exceeds length {n}")));
    }
    let amp = Normal::new(mean, var.sqrt())
        .map_err(|e| HarnessError::InvalidConfig(format!("nonzero distribution N({mean}, {var}): {e}")))?;
    let mut positions = sample(rng, n, k).into_vec();
    positions.sort_unstable();
    let mut x = vec![0.0; n];
    for &j in &positions {
        x[j] = amp.sample(rng);
    }
    Ok(SparseSpectrum {
        x,
        support: SupportSet::from_indices(positions, n).expect("distinct in-range positions"),
        k,
    })
}

/// Noisy measurements `y = D x + e` with `e ~ N(0, sigma^2 I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyMeasurement {
    pub y: Vec<f64>,
    pub sigma: f64,
}

impl NoisyMeasurement {
    /// Per-component SNR `‖x_q D_q‖² / (M sigma²)`.
    pub fn snr_q(&self, d: &MeasurementMatrix, x: &[f64], q: usize) -> f64 {
        let col = d.col(q);
        x[q] * x[q] * dot(col, col) / (d.rows() as f64 * self.sigma * self.sigma)
    }

    /// Smallest per-component SNR over the nonzero components of `x`.
    pub fn snr_min(&self, d: &MeasurementMatrix, x: &[f64]) -> f64 {
        (0..x.len())
            .filter(|&q| x[q] != 0.0)
            .map(|q| self.snr_q(d, x, q))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Noise standard deviation that puts `‖D x‖² / (M sigma²)` at `snr_db`.
/// `+inf` dB gives zero noise.
pub fn noise_sigma(d: &MeasurementMatrix, clean: &[f64], snr_db: f64) -> Result<f64, HarnessError> {
    if snr_db == f64::INFINITY {
        return Ok(0.0);
    }
    if snr_db.is_nan() {
        return Err(HarnessError::InvalidConfig("SNR is NaN".into()));
    }
    let energy = norm2(clean);
    if energy == 0.0 {
        return Err(HarnessError::ZeroSignal);
    }
    Ok(energy / (d.rows() as f64 * 10f64.powf(snr_db / 10.0)).sqrt())
}

/// Calibrates the noise level to the realized signal energy and draws `y`.
pub fn calibrate_noise(d: &MeasurementMatrix, x: &[f64], snr_db: f64, seed: RngSeed) -> Result<NoisyMeasurement, HarnessError> {
    calibrate_noise_with(d, x, snr_db, &mut seed.stream(0))
}

pub(crate) fn calibrate_noise_with<R: Rng>(
    d: &MeasurementMatrix,
    x: &[f64],
    snr_db: f64,
    rng: &mut R,
) -> Result<NoisyMeasurement, HarnessError> {
    if x.len() != d.cols() {
        return Err(HarnessError::InvalidConfig(format!(
            "spectrum length {} does not match {} columns",
            x.len(),
            d.cols()
        )));
    }
    let mut y = d.mul_vec(x);
    let sigma = noise_sigma(d, &y, snr_db)?;
    if sigma > 0.0 {
        for v in y.iter_mut() {
            *v += sigma * rng.sample::<f64, _>(StandardNormal);
        }
    }
    Ok(NoisyMeasurement { y, sigma })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matgen::gen_gaussian_normalized;
    use approx::assert_relative_eq;

    #[test]
    fn empty_spectrum() {
        let s = gen_sparse_spectrum(16, 0, 1.0, 0.01, RngSeed(1)).unwrap();
        assert!(s.x.iter().all(|v| *v == 0.0));
        assert!(s.support.is_empty());
        assert!(gen_sparse_spectrum(4, 5, 1.0, 0.01, RngSeed(1)).is_err());
    }

    #[test]
    fn amplitudes_concentrate_near_one() {
        for seed in 0..200 {
            let s = gen_sparse_spectrum(2048, 4, 1.0, 0.01, RngSeed(seed)).unwrap();
            assert_eq!(s.support.len(), 4);
            assert_eq!(s.x.iter().filter(|v| **v != 0.0).count(), 4);
            for &j in s.support.iter() {
                assert!((0.6..=1.4).contains(&s.x[j]));
            }
        }
    }

    #[test]
    fn amplitude_mean_over_many_draws() {
        let mut rng = RngSeed(3).stream(0);
        let mut sum = 0.0;
        let mut count = 0;
        while count < 100_000 {
            let s = sparse_spectrum_from_rng(64, 8, 1.0, 0.01, &mut rng).unwrap();
            for &j in s.support.iter() {
                sum += s.x[j];
                count += 1;
            }
        }
        let mean = sum / count as f64;
        assert!((mean - 1.0).abs() <= 0.01, "{mean}");
    }

    #[test]
    fn support_positions_are_uniform() {
        let mut hits = vec![0usize; 8];
        let mut rng = RngSeed(4).stream(0);
        for _ in 0..8000 {
            let s = sparse_spectrum_from_rng(8, 2, 1.0, 0.01, &mut rng).unwrap();
            for &j in s.support.iter() {
                hits[j] += 1;
            }
        }
        // expected 2000 each; 5 sigma ~ 200
        for h in hits {
            assert!((h as f64 - 2000.0).abs() < 200.0, "{h}");
        }
    }

    #[test]
    fn infinite_snr_is_noiseless() {
        let d = gen_gaussian_normalized(16, 32, RngSeed(0)).unwrap();
        let s = gen_sparse_spectrum(32, 3, 1.0, 0.01, RngSeed(2)).unwrap();
        let m = calibrate_noise(&d, &s.x, f64::INFINITY, RngSeed(5)).unwrap();
        assert_eq!(m.sigma, 0.0);
        assert_eq!(m.y, d.mul_vec(&s.x));
    }

    #[test]
    fn realized_snr_matches_target() {
        let d = gen_gaussian_normalized(64, 128, RngSeed(0)).unwrap();
        let s = gen_sparse_spectrum(128, 5, 1.0, 0.01, RngSeed(2)).unwrap();
        let clean = d.mul_vec(&s.x);
        for snr_db in [-10.0, 0.0, 7.5, 30.0] {
            let m = calibrate_noise(&d, &s.x, snr_db, RngSeed(5)).unwrap();
            let realized = dot(&clean, &clean) / (64.0 * m.sigma * m.sigma);
            assert_relative_eq!(realized, 10f64.powf(snr_db / 10.0), max_relative = 1e-12);
        }
    }

    #[test]
    fn zero_signal_is_rejected() {
        let d = gen_gaussian_normalized(8, 16, RngSeed(0)).unwrap();
        assert!(matches!(
            calibrate_noise(&d, &[0.0; 16], 10.0, RngSeed(1)),
            Err(HarnessError::ZeroSignal)
        ));
        assert!(calibrate_noise(&d, &[0.0; 16], f64::INFINITY, RngSeed(1)).is_ok());
    }

    #[test]
    fn noise_energy_matches_sigma() {
        // E‖e‖² = M sigma² = 256 * 0.01 = 2.56
        let m = 256;
        let mut rng = RngSeed(9).stream(0);
        let draws = 10_000;
        let mut total = 0.0;
        for _ in 0..draws {
            for _ in 0..m {
                let e: f64 = 0.1 * rng.sample::<f64, _>(StandardNormal);
                total += e * e;
            }
        }
        let mean = total / draws as f64;
        assert!((mean - 2.56).abs() <= 0.03 * 2.56, "{mean}");
    }

    #[test]
    fn per_component_snr() {
        let d = gen_gaussian_normalized(16, 32, RngSeed(0)).unwrap();
        let mut x = vec![0.0; 32];
        x[3] = 2.0;
        x[9] = 0.5;
        let m = NoisyMeasurement { y: vec![0.0; 16], sigma: 0.25 };
        assert_relative_eq!(m.snr_q(&d, &x, 3), 4.0 / (16.0 * 0.0625), max_relative = 1e-12);
        assert_relative_eq!(m.snr_min(&d, &x), 0.25 / (16.0 * 0.0625), max_relative = 1e-12);
    }
}
