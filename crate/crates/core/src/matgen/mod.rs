//! Measurement matrices: storage, the two random families used in the
//! experiments, and mutual coherence.

mod io;

pub use io::{read_matrix, write_matrix, write_matrix_csv, MATRIX_MAGIC};

use std::sync::OnceLock;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::seed::RngSeed;

/// Absolute tolerance on column norms.
pub const UNIT_NORM_TOL: f64 = 1e-12;

/// Default upper end of the uniform offset range for hybrid matrices.
pub const DEFAULT_OFFSET_MAX: f64 = 10.0;

#[derive(Debug, thiserror::Error)]
pub enum MatrixError {
    #[error("invalid dimensions {rows}x{cols}: need 1 <= rows <= cols")]
    InvalidDimensions { rows: usize, cols: usize },
    #[error("expected {expected} entries for a {rows}x{cols} matrix, got {got}")]
    EntryCount {
        rows: usize,
        cols: usize,
        expected: usize,
        got: usize,
    },
    #[error("column {col} has norm {norm}, expected 1 within {UNIT_NORM_TOL:e}")]
    NotNormalized { col: usize, norm: f64 },
    #[error("column {col} is zero and cannot be normalized")]
    ZeroColumn { col: usize },
    #[error("offset_max must be finite and nonnegative, got {0}")]
    InvalidOffset(f64),
    #[error("malformed matrix file at byte {offset}: {reason}")]
    Format { offset: u64, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which random family a matrix was drawn from.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatrixFamily {
    /// i.i.d. N(0, 1/M) entries.
    Gaussian,
    /// Standard Gaussian column plus a uniform constant offset.
    Hybrid,
}

impl std::str::FromStr for MatrixFamily {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gaussian" => Ok(Self::Gaussian),
            "hybrid" => Ok(Self::Hybrid),
            other => Err(format!("unknown matrix family `{other}` (expected gaussian|hybrid)")),
        }
    }
}

impl std::fmt::Display for MatrixFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Gaussian => "gaussian",
            Self::Hybrid => "hybrid",
        })
    }
}

/// Dense `rows x cols` real matrix with unit-norm columns, stored column-major.
///
/// Immutable after construction. Coherence is computed on first request and
/// cached; concurrent first access is safe and yields the same value.
#[derive(Debug, Clone)]
pub struct MeasurementMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    coherence: OnceLock<f64>,
}

impl MeasurementMatrix {
    /// Wraps column-major entries, checking dimensions and unit column norms.
    pub fn from_column_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, MatrixError> {
        check_dims(rows, cols)?;
        check_len(rows, cols, data.len())?;
        for (col, c) in data.chunks_exact(rows).enumerate() {
            let norm = norm2(c);
            if !((norm - 1.0).abs() <= UNIT_NORM_TOL) {
                return Err(MatrixError::NotNormalized { col, norm });
            }
        }
        Ok(Self::new_unchecked(rows, cols, data))
    }

    /// Wraps column-major entries after rescaling every column to unit norm.
    pub fn normalized_from_column_major(
        rows: usize,
        cols: usize,
        mut data: Vec<f64>,
    ) -> Result<Self, MatrixError> {
        check_dims(rows, cols)?;
        check_len(rows, cols, data.len())?;
        for (col, c) in data.chunks_exact_mut(rows).enumerate() {
            normalize_column(c).ok_or(MatrixError::ZeroColumn { col })?;
        }
        Ok(Self::new_unchecked(rows, cols, data))
    }

    fn new_unchecked(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        Self {
            rows,
            cols,
            data,
            coherence: OnceLock::new(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Column-major entries.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn columns(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.rows)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.rows + i]
    }

    /// `D x` for a length-`cols` vector.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "mul_vec: length mismatch");
        let mut out = vec![0.0; self.rows];
        for (c, &xj) in self.columns().zip(x) {
            if xj != 0.0 {
                axpy(xj, c, &mut out);
            }
        }
        out
    }

    /// `D^T r` for a length-`rows` vector.
    pub fn tr_mul_vec(&self, r: &[f64]) -> Vec<f64> {
        assert_eq!(r.len(), self.rows, "tr_mul_vec: length mismatch");
        self.columns().map(|c| dot(c, r)).collect()
    }

    /// Mutual coherence `max_{i != j} |<D_i, D_j>|`, cached after the first call.
    pub fn coherence(&self) -> f64 {
        *self.coherence.get_or_init(|| gram_max_offdiag(self.rows, self.cols, &self.data))
    }

    /// Returns the cached coherence without computing it.
    pub fn cached_coherence(&self) -> Option<f64> {
        self.coherence.get().copied()
    }
}

/// Free-function form of [`MeasurementMatrix::coherence`].
pub fn coherence(d: &MeasurementMatrix) -> f64 {
    d.coherence()
}

/// Draws an `m x n` matrix with i.i.d. N(0, 1/m) entries and rescales each
/// column to exact unit norm. Column `j` is drawn from stream `j` of `seed`.
pub fn gen_gaussian_normalized(m: usize, n: usize, seed: RngSeed) -> Result<MeasurementMatrix, MatrixError> {
    check_dims(m, n)?;
    let scale = 1.0 / (m as f64).sqrt();
    let mut data = vec![0.0; m * n];
    data.par_chunks_exact_mut(m)
        .enumerate()
        .try_for_each(|(j, col)| {
            let mut rng = seed.stream(j as u64);
            for v in col.iter_mut() {
                *v = scale * rng.sample::<f64, _>(StandardNormal);
            }
            normalize_column(col).ok_or(MatrixError::ZeroColumn { col: j })
        })?;
    Ok(MeasurementMatrix::new_unchecked(m, n, data))
}

/// Draws the high-coherence hybrid family: column `j` is `n_j + c_j * 1` with
/// `n_j ~ N(0, I)` and `c_j ~ U[0, offset_max]`, then rescaled to unit norm.
pub fn gen_hybrid_normalized(
    m: usize,
    n: usize,
    offset_max: f64,
    seed: RngSeed,
) -> Result<MeasurementMatrix, MatrixError> {
    check_dims(m, n)?;
    if !(offset_max.is_finite() && offset_max >= 0.0) {
        return Err(MatrixError::InvalidOffset(offset_max));
    }
    let mut data = vec![0.0; m * n];
    data.par_chunks_exact_mut(m)
        .enumerate()
        .try_for_each(|(j, col)| {
            let mut rng = seed.stream(j as u64);
            let offset = offset_max * rng.gen::<f64>();
            for v in col.iter_mut() {
                *v = rng.sample::<f64, _>(StandardNormal) + offset;
            }
            normalize_column(col).ok_or(MatrixError::ZeroColumn { col: j })
        })?;
    Ok(MeasurementMatrix::new_unchecked(m, n, data))
}

/// Generates a matrix of the given family. `offset_max` is ignored for
/// Gaussian matrices.
pub fn generate(
    family: MatrixFamily,
    m: usize,
    n: usize,
    offset_max: f64,
    seed: RngSeed,
) -> Result<MeasurementMatrix, MatrixError> {
    match family {
        MatrixFamily::Gaussian => gen_gaussian_normalized(m, n, seed),
        MatrixFamily::Hybrid => gen_hybrid_normalized(m, n, offset_max, seed),
    }
}

fn check_dims(rows: usize, cols: usize) -> Result<(), MatrixError> {
    if rows == 0 || cols == 0 || rows > cols {
        return Err(MatrixError::InvalidDimensions { rows, cols });
    }
    Ok(())
}

fn check_len(rows: usize, cols: usize, got: usize) -> Result<(), MatrixError> {
    let expected = rows * cols;
    if got != expected {
        return Err(MatrixError::EntryCount {
            rows,
            cols,
            expected,
            got,
        });
    }
    Ok(())
}

fn normalize_column(col: &mut [f64]) -> Option<()> {
    let norm = norm2(col);
    if !(norm > 0.0 && norm.is_finite()) {
        return None;
    }
    col.iter_mut().for_each(|v| *v /= norm);
    Some(())
}

const GRAM_BLOCK: usize = 256;

// Largest |G_ij|, i < j, of G = D^T D. Row blocks of G are formed with a
// packed GEMM so that 8192-column matrices stay tractable.
fn gram_max_offdiag(rows: usize, cols: usize, data: &[f64]) -> f64 {
    let starts: Vec<usize> = (0..cols).step_by(GRAM_BLOCK).collect();
    starts
        .par_iter()
        .map(|&start| {
            let width = GRAM_BLOCK.min(cols - start);
            let rest = cols - start;
            let mut g = vec![0.0; width * rest];
            // g (width x rest, row-major) = A^T B with A = D[:, start..start+width], B = D[:, start..]
            let base = data[start * rows..].as_ptr();
            unsafe {
                matrixmultiply::dgemm(
                    width,
                    rows,
                    rest,
                    1.0,
                    base,
                    rows as isize,
                    1,
                    base,
                    1,
                    rows as isize,
                    0.0,
                    g.as_mut_ptr(),
                    rest as isize,
                    1,
                );
            }
            let mut best = 0.0f64;
            for (a, row) in g.chunks_exact(rest).enumerate() {
                for &v in &row[a + 1..] {
                    best = best.max(v.abs());
                }
            }
            best
        })
        .reduce(|| 0.0, f64::max)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    // Four accumulators let the compiler vectorize without reassociating.
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let k = 4 * i;
        acc[0] += a[k] * b[k];
        acc[1] += a[k + 1] * b[k + 1];
        acc[2] += a[k + 2] * b[k + 2];
        acc[3] += a[k + 3] * b[k + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for k in 4 * chunks..a.len() {
        s += a[k] * b[k];
    }
    s
}

pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn brute_coherence(d: &MeasurementMatrix) -> f64 {
        let mut best = 0.0f64;
        for i in 0..d.cols() {
            for j in 0..d.cols() {
                if i != j {
                    let mut s = 0.0;
                    for r in 0..d.rows() {
                        s += d.get(r, i) * d.get(r, j);
                    }
                    best = best.max(s.abs());
                }
            }
        }
        best
    }

    #[test]
    fn rejects_bad_dimensions() {
        for (m, n) in [(0, 4), (4, 0), (5, 4)] {
            assert!(matches!(
                gen_gaussian_normalized(m, n, RngSeed(1)),
                Err(MatrixError::InvalidDimensions { .. })
            ));
            assert!(matches!(
                gen_hybrid_normalized(m, n, 10.0, RngSeed(1)),
                Err(MatrixError::InvalidDimensions { .. })
            ));
        }
        assert!(matches!(
            gen_hybrid_normalized(4, 8, -1.0, RngSeed(1)),
            Err(MatrixError::InvalidOffset(_))
        ));
    }

    #[test]
    fn columns_are_unit_norm() {
        let g = gen_gaussian_normalized(16, 40, RngSeed(3)).unwrap();
        let h = gen_hybrid_normalized(16, 40, 10.0, RngSeed(3)).unwrap();
        for d in [&g, &h] {
            for c in d.columns() {
                assert_abs_diff_eq!(norm2(c), 1.0, epsilon = UNIT_NORM_TOL);
            }
            let mu = d.coherence();
            assert!((0.0..=1.0 + 1e-15).contains(&mu));
        }
    }

    #[test]
    fn coherence_of_two_column_example() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let d = MeasurementMatrix::from_column_major(2, 2, vec![1.0, 0.0, s, s]).unwrap();
        assert_abs_diff_eq!(d.coherence(), s, epsilon = 1e-15);
    }

    #[test]
    fn coherence_of_identity_is_zero() {
        let n = 6;
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        let d = MeasurementMatrix::from_column_major(n, n, data).unwrap();
        assert_eq!(d.coherence(), 0.0);
    }

    #[test]
    fn coherence_of_orthonormalized_gaussian_is_zero() {
        let d = gen_gaussian_normalized(4, 4, RngSeed(11)).unwrap();
        let q = nalgebra::DMatrix::from_column_slice(4, 4, d.as_slice()).qr().q();
        let d = MeasurementMatrix::normalized_from_column_major(4, 4, q.as_slice().to_vec()).unwrap();
        assert!(d.coherence() < 1e-15);
    }

    #[test]
    fn coherence_matches_brute_force() {
        for seed in 0..5 {
            let d = gen_gaussian_normalized(8, 16, RngSeed(seed)).unwrap();
            assert_abs_diff_eq!(d.coherence(), brute_coherence(&d), epsilon = 1e-14);
        }
        // spans several GEMM blocks
        let d = gen_hybrid_normalized(12, 600, 10.0, RngSeed(2)).unwrap();
        assert_abs_diff_eq!(d.coherence(), brute_coherence(&d), epsilon = 1e-14);
    }

    #[test]
    fn coherence_is_cached() {
        let d = gen_gaussian_normalized(8, 16, RngSeed(0)).unwrap();
        assert_eq!(d.cached_coherence(), None);
        let mu = coherence(&d);
        assert_eq!(d.cached_coherence(), Some(mu));
    }

    #[test]
    fn generation_is_deterministic() {
        let a = gen_hybrid_normalized(256, 512, 10.0, RngSeed(99)).unwrap();
        let b = gen_hybrid_normalized(256, 512, 10.0, RngSeed(99)).unwrap();
        assert_eq!(a.as_slice(), b.as_slice());
        assert_eq!(a.coherence().to_bits(), b.coherence().to_bits());
        let c = gen_hybrid_normalized(256, 512, 10.0, RngSeed(100)).unwrap();
        assert_ne!(a.as_slice(), c.as_slice());
    }

    #[test]
    fn zero_offset_hybrid_matches_gaussian_statistics() {
        // Both are uniform on the sphere after normalization. For M = 8,
        // E|u_1| = Gamma(4) / (sqrt(pi) Gamma(4.5)) = 6 / (6.5625 pi).
        let (m, n) = (8, 4000);
        let expect = 6.0 / (6.5625 * std::f64::consts::PI);
        for d in [
            gen_hybrid_normalized(m, n, 0.0, RngSeed(5)).unwrap(),
            gen_gaussian_normalized(m, n, RngSeed(5)).unwrap(),
        ] {
            let mean_abs = d.as_slice().iter().map(|v| v.abs()).sum::<f64>() / (m * n) as f64;
            assert!((mean_abs - expect).abs() / expect < 0.01, "{mean_abs} vs {expect}");
            let mean = d.as_slice().iter().sum::<f64>() / (m * n) as f64;
            assert!(mean.abs() < 0.01);
        }
    }

    #[test]
    fn hybrid_is_more_coherent_than_gaussian() {
        let mut wins = 0;
        let trials = 20;
        for seed in 0..trials {
            let g = gen_gaussian_normalized(256, 512, RngSeed(seed)).unwrap();
            let h = gen_hybrid_normalized(256, 512, DEFAULT_OFFSET_MAX, RngSeed(seed)).unwrap();
            if h.coherence() > g.coherence() {
                wins += 1;
            }
        }
        assert!(wins as f64 >= 0.95 * trials as f64);
    }

    #[test]
    fn from_column_major_rejects_unnormalized() {
        let err = MeasurementMatrix::from_column_major(2, 2, vec![1.0, 0.0, 1.0, 1.0]).unwrap_err();
        assert!(matches!(err, MatrixError::NotNormalized { col: 1, .. }));
        let err = MeasurementMatrix::from_column_major(2, 2, vec![1.0, 0.0]).unwrap_err();
        assert!(matches!(err, MatrixError::EntryCount { .. }));
    }

    #[test]
    fn matvec_helpers_match_naive_loops() {
        let d = gen_gaussian_normalized(5, 9, RngSeed(4)).unwrap();
        let x: Vec<f64> = (0..9).map(|i| i as f64 - 4.0).collect();
        let y = d.mul_vec(&x);
        for i in 0..5 {
            let naive: f64 = (0..9).map(|j| d.get(i, j) * x[j]).sum();
            assert_abs_diff_eq!(y[i], naive, epsilon = 1e-12);
        }
        let z = d.tr_mul_vec(&y);
        for j in 0..9 {
            let naive: f64 = (0..5).map(|i| d.get(i, j) * y[i]).sum();
            assert_abs_diff_eq!(z[j], naive, epsilon = 1e-12);
        }
    }
}
