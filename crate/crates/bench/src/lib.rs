//! Fixtures shared by the benchmarks under `benches/`.

use sparsense::harness::{calibrate_noise, gen_sparse_spectrum};
use sparsense::matgen::generate;
use sparsense::{MatrixFamily, MeasurementMatrix, RngSeed};

/// A matrix together with one noisy measurement of a `k`-sparse spectrum.
pub struct Instance {
    pub matrix: MeasurementMatrix,
    pub mu: f64,
    pub y: Vec<f64>,
}

pub fn instance(family: MatrixFamily, m: usize, n: usize, k: usize, snr_db: f64) -> Instance {
    let matrix = generate(family, m, n, 10.0, RngSeed(1)).expect("valid shape");
    let spectrum = gen_sparse_spectrum(n, k, 1.0, 0.01, RngSeed(2)).expect("k <= n");
    let y = calibrate_noise(&matrix, &spectrum.x, snr_db, RngSeed(3)).expect("nonzero signal").y;
    let mu = matrix.coherence();
    Instance { matrix, mu, y }
}
