use crate::linalg::{LinalgError, OrthoBasis, SupportSet};
use crate::matgen::{dot, norm2, MeasurementMatrix};

use super::PROJECTED_NORM_FLOOR;

// Below this the downdated ‖P⊥ D_j‖² has lost too many digits and is
// recomputed by explicit projection.
const REFRESH_BELOW: f64 = 1e-8;

/// Support, factorization, estimate and residual of a greedy solver.
pub(crate) struct GreedyState<'a> {
    d: &'a MeasurementMatrix,
    y: &'a [f64],
    basis: OrthoBasis,
    support: SupportSet,
    selected: Vec<bool>,
    coef: Vec<f64>,
    residual: Vec<f64>,
    // ‖P⊥_S D_j‖², only maintained for OLS-style scoring
    proj_sq: Option<Vec<f64>>,
}

impl<'a> GreedyState<'a> {
    pub(crate) fn new(d: &'a MeasurementMatrix, y: &'a [f64], track_projections: bool) -> Self {
        Self {
            d,
            y,
            basis: OrthoBasis::new(d.rows()),
            support: SupportSet::new(),
            selected: vec![false; d.cols()],
            coef: Vec::new(),
            residual: y.to_vec(),
            proj_sq: track_projections.then(|| d.columns().map(|c| dot(c, c)).collect()),
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.support.len()
    }

    pub(crate) fn is_selected(&self, j: usize) -> bool {
        self.selected[j]
    }

    pub(crate) fn residual_norm(&self) -> f64 {
        norm2(&self.residual)
    }

    /// `Dᵀ r`.
    pub(crate) fn correlations(&self) -> Vec<f64> {
        self.d.tr_mul_vec(&self.residual)
    }

    /// Adds column `j`, re-solves least squares on the new support and
    /// updates the residual. On rank deficiency nothing changes.
    pub(crate) fn push(&mut self, j: usize) -> Result<(), LinalgError> {
        debug_assert!(!self.selected[j]);
        self.basis.push(self.d.col(j))?;
        self.support.push_unchecked(j);
        self.selected[j] = true;
        self.coef = self.basis.solve(self.y);

        let mut r = self.y.to_vec();
        for (&i, &c) in self.support.iter().zip(&self.coef) {
            for (ri, di) in r.iter_mut().zip(self.d.col(i)) {
                *ri -= c * di;
            }
        }
        self.residual = r;

        if let Some(proj) = self.proj_sq.as_mut() {
            let q = self.basis.q_col(self.basis.len() - 1);
            for (p, col) in proj.iter_mut().zip(self.d.columns()) {
                let c = dot(q, col);
                *p -= c * c;
            }
        }
        Ok(())
    }

    /// Normalized correlations `|⟨D_j, r⟩| / ‖P⊥_S D_j‖` for unselected
    /// columns with a nonvanishing projection; `-inf` elsewhere.
    pub(crate) fn ols_scores(&mut self, corr: &[f64]) -> Vec<f64> {
        let proj = self.proj_sq.as_mut().expect("projection tracking disabled");
        for (j, p) in proj.iter_mut().enumerate() {
            if !self.selected[j] && *p < REFRESH_BELOW {
                let v = self.basis.project_out(self.d.col(j));
                *p = dot(&v, &v);
            }
        }
        corr.iter()
            .zip(proj.iter())
            .enumerate()
            .map(|(j, (&c, &p))| {
                let norm = p.max(0.0).sqrt();
                if self.selected[j] || norm <= PROJECTED_NORM_FLOOR {
                    f64::NEG_INFINITY
                } else {
                    c.abs() / norm
                }
            })
            .collect()
    }

    /// `|⟨D_j, r⟩|` for unselected columns, `-inf` for selected ones.
    pub(crate) fn omp_scores(&self, corr: &[f64]) -> Vec<f64> {
        corr.iter()
            .enumerate()
            .map(|(j, &c)| if self.selected[j] { f64::NEG_INFINITY } else { c.abs() })
            .collect()
    }

    pub(crate) fn best_ols(&mut self, corr: &[f64]) -> Option<usize> {
        argmax(&self.ols_scores(corr))
    }

    pub(crate) fn best_omp(&self, corr: &[f64]) -> Option<usize> {
        argmax(&self.omp_scores(corr))
    }

    pub(crate) fn support(&self) -> &SupportSet {
        &self.support
    }

    /// Current estimate as a length-N vector.
    pub(crate) fn x_hat(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.d.cols()];
        for (&j, &c) in self.support.iter().zip(&self.coef) {
            x[j] = c;
        }
        x
    }

    pub(crate) fn coefficients(&self) -> &[f64] {
        &self.coef
    }
}

/// First index of the maximum; `None` if every entry is `-inf`.
pub(crate) fn argmax(scores: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (j, &s) in scores.iter().enumerate() {
        if s == f64::NEG_INFINITY {
            continue;
        }
        match best {
            Some((_, b)) if s <= b => {}
            _ => best = Some((j, s)),
        }
    }
    best.map(|(j, _)| j)
}
