//! Least squares on a column subset and orthogonal-projection residuals.
//!
//! Column subsets are factored as `D_S = Q R` with classical Gram-Schmidt
//! applied twice per column, which keeps `Q` orthonormal to working
//! precision. The same [`OrthoBasis`] is grown one column at a time inside
//! the greedy solvers.

use nalgebra::DMatrix;

use crate::matgen::{axpy, dot, norm2, MeasurementMatrix};

/// Relative singular-value floor below which a column subset is rank deficient.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LinalgError {
    #[error("column subset is numerically rank deficient (ratio {ratio:e} below tolerance)")]
    RankDeficient { ratio: f64 },
    #[error("dimension mismatch: expected length {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("column index {index} out of range for {cols} columns")]
    IndexOutOfRange { index: usize, cols: usize },
    #[error("column index {0} selected twice")]
    DuplicateIndex(usize),
    #[error("support of size {size} exceeds the {rows} available rows")]
    SupportTooLarge { size: usize, rows: usize },
}

/// Ordered set of distinct column indices; order is selection order.
#[derive(Debug, Clone, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(transparent)]
pub struct SupportSet(Vec<usize>);

impl SupportSet {
    pub fn new() -> Self {
        Self(Vec::new())
    }

    /// Builds a support, rejecting duplicates and indices `>= cols`.
    pub fn from_indices(indices: impl IntoIterator<Item = usize>, cols: usize) -> Result<Self, LinalgError> {
        let mut s = Self::new();
        for i in indices {
            s.try_push(i, cols)?;
        }
        Ok(s)
    }

    pub fn try_push(&mut self, index: usize, cols: usize) -> Result<(), LinalgError> {
        if index >= cols {
            return Err(LinalgError::IndexOutOfRange { index, cols });
        }
        if self.contains(index) {
            return Err(LinalgError::DuplicateIndex(index));
        }
        self.0.push(index);
        Ok(())
    }

    pub(crate) fn push_unchecked(&mut self, index: usize) {
        debug_assert!(!self.contains(index));
        self.0.push(index);
    }

    pub fn contains(&self, index: usize) -> bool {
        self.0.contains(&index)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    /// Indices in ascending order.
    pub fn sorted(&self) -> Vec<usize> {
        let mut v = self.0.clone();
        v.sort_unstable();
        v
    }

    /// Membership mask over `cols` columns.
    pub fn mask(&self, cols: usize) -> Vec<bool> {
        let mut m = vec![false; cols];
        for &i in &self.0 {
            m[i] = true;
        }
        m
    }
}

impl std::ops::Deref for SupportSet {
    type Target = [usize];

    fn deref(&self) -> &[usize] {
        &self.0
    }
}

/// Thin QR factorization of a growing set of columns.
#[derive(Debug, Clone)]
pub struct OrthoBasis {
    rows: usize,
    // orthonormal columns, column-major rows x k
    q: Vec<f64>,
    // R stored by column: r[j] holds R[0..=j, j]
    r: Vec<Vec<f64>>,
}

impl OrthoBasis {
    pub fn new(rows: usize) -> Self {
        Self {
            rows,
            q: Vec::new(),
            r: Vec::new(),
        }
    }

    /// Factors the columns of `d` listed in `support`, in order, and
    /// rejects the subset when `sigma_min / sigma_max` of `D_S` is below
    /// [`RANK_TOL`].
    pub fn from_support(d: &MeasurementMatrix, support: &[usize]) -> Result<Self, LinalgError> {
        let mut b = Self::new(d.rows());
        for &j in support {
            b.push(d.col(j))?;
        }
        let ratio = b.condition_ratio();
        if !(ratio >= RANK_TOL) {
            return Err(LinalgError::RankDeficient { ratio });
        }
        Ok(b)
    }

    /// `sigma_min / sigma_max` of the factored columns, read off the small
    /// triangular factor (same singular values since `Q` is orthonormal).
    /// 1 for an empty basis.
    pub fn condition_ratio(&self) -> f64 {
        let k = self.len();
        if k == 0 {
            return 1.0;
        }
        let r = DMatrix::from_fn(k, k, |i, j| if i <= j { self.r[j][i] } else { 0.0 });
        let sv = r.singular_values();
        sv.min() / sv.max()
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    pub fn q_col(&self, k: usize) -> &[f64] {
        &self.q[k * self.rows..(k + 1) * self.rows]
    }

    /// Appends a column. Fails, leaving the basis unchanged, when the part of
    /// `col` outside the current span is below [`RANK_TOL`] times its norm.
    pub fn push(&mut self, col: &[f64]) -> Result<(), LinalgError> {
        if col.len() != self.rows {
            return Err(LinalgError::DimensionMismatch {
                expected: self.rows,
                got: col.len(),
            });
        }
        let k = self.len();
        if k >= self.rows {
            return Err(LinalgError::SupportTooLarge {
                size: k + 1,
                rows: self.rows,
            });
        }
        let col_norm = norm2(col);
        let mut v = col.to_vec();
        let mut h = vec![0.0; k + 1];
        for _ in 0..2 {
            for (i, hi) in h.iter_mut().take(k).enumerate() {
                let c = dot(self.q_col(i), &v);
                *hi += c;
                axpy(-c, &self.q[i * self.rows..(i + 1) * self.rows], &mut v);
            }
        }
        let rkk = norm2(&v);
        h[k] = rkk;

        let ratio = if col_norm > 0.0 { rkk / col_norm } else { 0.0 };
        if !(ratio >= RANK_TOL) {
            return Err(LinalgError::RankDeficient { ratio });
        }
        v.iter_mut().for_each(|x| *x /= rkk);
        self.q.extend_from_slice(&v);
        self.r.push(h);
        Ok(())
    }

    /// `Q^T v`.
    pub fn coords(&self, v: &[f64]) -> Vec<f64> {
        (0..self.len()).map(|i| dot(self.q_col(i), v)).collect()
    }

    /// `v - Q Q^T v`, computed twice for accuracy.
    pub fn project_out(&self, v: &[f64]) -> Vec<f64> {
        let mut out = v.to_vec();
        for _ in 0..2 {
            for i in 0..self.len() {
                let c = dot(self.q_col(i), &out);
                axpy(-c, self.q_col(i), &mut out);
            }
        }
        out
    }

    /// Least-squares coefficients `argmin_c ||y - D_S c||` in support order.
    pub fn solve(&self, y: &[f64]) -> Vec<f64> {
        let z = self.coords(y);
        let k = self.len();
        let mut c = vec![0.0; k];
        for i in (0..k).rev() {
            let mut s = z[i];
            for j in i + 1..k {
                s -= self.r[j][i] * c[j];
            }
            c[i] = s / self.r[i][i];
        }
        c
    }
}

fn check_support(d: &MeasurementMatrix, s: &[usize]) -> Result<(), LinalgError> {
    let mut seen = vec![false; d.cols()];
    for &i in s {
        if i >= d.cols() {
            return Err(LinalgError::IndexOutOfRange { index: i, cols: d.cols() });
        }
        if std::mem::replace(&mut seen[i], true) {
            return Err(LinalgError::DuplicateIndex(i));
        }
    }
    if s.len() > d.rows() {
        return Err(LinalgError::SupportTooLarge {
            size: s.len(),
            rows: d.rows(),
        });
    }
    Ok(())
}

fn check_len(expected: usize, got: usize) -> Result<(), LinalgError> {
    if expected != got {
        return Err(LinalgError::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// The length-`N` vector supported on `s` that minimizes `||y - D x||_2`.
pub fn least_squares_on_support(d: &MeasurementMatrix, y: &[f64], s: &[usize]) -> Result<Vec<f64>, LinalgError> {
    check_len(d.rows(), y.len())?;
    check_support(d, s)?;
    let basis = OrthoBasis::from_support(d, s)?;
    let coef = basis.solve(y);
    let mut x = vec![0.0; d.cols()];
    for (&j, c) in s.iter().zip(coef) {
        x[j] = c;
    }
    Ok(x)
}

/// `||y - P_S y||_2^2`, the energy of `y` outside `span(D_S)`.
pub fn projection_residual_norm_sq(d: &MeasurementMatrix, y: &[f64], s: &[usize]) -> Result<f64, LinalgError> {
    check_len(d.rows(), y.len())?;
    check_support(d, s)?;
    let basis = OrthoBasis::from_support(d, s)?;
    let r = basis.project_out(y);
    Ok(dot(&r, &r))
}

/// `y - D x_hat`.
pub fn residual(d: &MeasurementMatrix, y: &[f64], x_hat: &[f64]) -> Result<Vec<f64>, LinalgError> {
    check_len(d.rows(), y.len())?;
    check_len(d.cols(), x_hat.len())?;
    let dx = d.mul_vec(x_hat);
    Ok(y.iter().zip(dx).map(|(a, b)| a - b).collect())
}
