//! Greedy sparse recovery.
//!
//! Six solvers share one engine ([`state::GreedyState`]):
//!
//! | id       | selection | stop                                   |
//! |----------|-----------|----------------------------------------|
//! | `bols`   | OLS       | blind: `‖Dᵀr‖∞/‖r‖₂ ≤ ω*·μ`            |
//! | `ols`    | OLS       | known K                                |
//! | `omp`    | OMP       | known K                                |
//! | `bomp`   | OMP       | blind, same threshold form as `bols`   |
//! | `cosamp` | 2K proxy  | stagnation / max iterations            |
//! | `mols`   | L per step OLS | known K, then pruned to K         |
//!
//! OLS selection uses the identity
//! `argmin_j ‖P⊥_{S∪j} y‖² = argmax_j |⟨D_j, r⟩| / ‖P⊥_S D_j‖`, with the
//! projected column norms downdated as the support grows.

mod cosamp;
mod greedy;
mod mols;
mod state;

pub use cosamp::run_cosamp;
pub use greedy::{run_bols, run_bomp, run_ols_known_k, run_omp_known_k};
pub use mols::run_mols;

use serde::{Deserialize, Serialize};

use crate::linalg::{LinalgError, SupportSet};
use crate::matgen::{norm2, MeasurementMatrix};
use state::GreedyState;

/// All solvers stop once `‖r‖₂ ≤ RESIDUAL_FLOOR · ‖y‖₂`.
pub const RESIDUAL_FLOOR: f64 = 1e-12;
/// Projected column norms at or below this are treated as zero.
pub const PROJECTED_NORM_FLOOR: f64 = 1e-12;
pub const DEFAULT_COSAMP_MAX_ITERATIONS: usize = 50;
pub const COSAMP_STAGNATION_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RecoveryError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("measurement vector has length {got}, matrix has {expected} rows")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("residual is numerically zero")]
    ZeroResidual,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

type Result<T> = std::result::Result<T, RecoveryError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StopReason {
    BlindThresholdMet,
    ReachedKnownK,
    ReachedMaxIterations,
    ResidualBelowFloor,
    /// CoSaMP only: relative residual change fell below the tolerance.
    ResidualStagnated,
    RankDeficient,
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        std::fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveryResult {
    pub x_hat: Vec<f64>,
    pub support: SupportSet,
    pub iterations: usize,
    /// `‖r‖₂` before the first iteration and after each completed one.
    pub residual_norm_history: Vec<f64>,
    pub stop_reason: StopReason,
}

impl RecoveryResult {
    fn empty(n: usize, y_norm: f64, stop_reason: StopReason) -> Self {
        Self {
            x_hat: vec![0.0; n],
            support: SupportSet::new(),
            iterations: 0,
            residual_norm_history: vec![y_norm],
            stop_reason,
        }
    }
}

/// Parameters of the blind stopping rule `‖Dᵀr‖∞/‖r‖₂ ≤ omega_star · mu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlindStopParams {
    pub omega_star: f64,
    pub mu: f64,
    pub max_iterations: usize,
}

impl BlindStopParams {
    pub fn new(omega_star: f64, mu: f64, max_iterations: usize) -> Result<Self> {
        let p = Self {
            omega_star,
            mu,
            max_iterations,
        };
        p.validate()?;
        Ok(p)
    }

    /// Threshold with the default iteration cap for an `m`-row matrix.
    pub fn with_default_cap(omega_star: f64, mu: f64, m: usize) -> Result<Self> {
        Self::new(omega_star, mu, default_blind_cap(m))
    }

    pub fn threshold(&self) -> f64 {
        self.omega_star * self.mu
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega_star >= 0.0 && self.omega_star.is_finite()) {
            return Err(RecoveryError::InvalidParams(format!(
                "omega_star must be finite and nonnegative, got {}",
                self.omega_star
            )));
        }
        if !(0.0..=1.0).contains(&self.mu) {
            return Err(RecoveryError::InvalidParams(format!(
                "mu must lie in [0, 1], got {}",
                self.mu
            )));
        }
        if self.max_iterations == 0 {
            return Err(RecoveryError::InvalidParams("max_iterations must be positive".into()));
        }
        Ok(())
    }
}

/// Default safety cap on blind iterations: half the number of rows.
pub fn default_blind_cap(m: usize) -> usize {
    (m / 2).max(1)
}

/// `max_i |⟨D_i, r⟩| / ‖r‖₂`.
pub fn blind_stop_statistic(d: &MeasurementMatrix, r: &[f64]) -> Result<f64> {
    check_len(d, r)?;
    let nr = norm2(r);
    if nr < 1e-300 {
        return Err(RecoveryError::ZeroResidual);
    }
    Ok(max_abs(&d.tr_mul_vec(r)) / nr)
}

/// The unselected column whose addition to `s` leaves the smallest
/// projection residual of `y`; ties go to the lowest index.
pub fn ols_select(d: &MeasurementMatrix, y: &[f64], s: &[usize]) -> Result<usize> {
    check_len(d, y)?;
    if s.len() >= d.rows() {
        return Err(LinalgError::SupportTooLarge {
            size: s.len() + 1,
            rows: d.rows(),
        }
        .into());
    }
    let mut st = GreedyState::new(d, y, true);
    for &j in s {
        if j >= d.cols() {
            return Err(LinalgError::IndexOutOfRange { index: j, cols: d.cols() }.into());
        }
        if st.is_selected(j) {
            return Err(LinalgError::DuplicateIndex(j).into());
        }
        st.push(j)?;
    }
    let corr = st.correlations();
    st.best_ols(&corr)
        .ok_or(RecoveryError::Linalg(LinalgError::RankDeficient { ratio: 0.0 }))
}

/// Solver identifiers as used in configs, the CLI and output records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Bols,
    Bomp,
    Cosamp,
    Mols,
    Ols,
    Omp,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::Bols,
        Algorithm::Bomp,
        Algorithm::Cosamp,
        Algorithm::Mols,
        Algorithm::Ols,
        Algorithm::Omp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Bols => "bols",
            Algorithm::Bomp => "bomp",
            Algorithm::Cosamp => "cosamp",
            Algorithm::Mols => "mols",
            Algorithm::Ols => "ols",
            Algorithm::Omp => "omp",
        }
    }

    pub fn is_blind(self) -> bool {
        matches!(self, Algorithm::Bols | Algorithm::Bomp)
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| format!("unknown algorithm `{s}` (expected one of bols, bomp, cosamp, mols, ols, omp)"))
    }
}

/// Everything any solver might need; each reads only its own fields.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverParams {
    pub k: usize,
    pub blind: BlindStopParams,
    pub mols_l: usize,
    pub cosamp_max_iterations: usize,
}

pub fn run(alg: Algorithm, d: &MeasurementMatrix, y: &[f64], p: &SolverParams) -> Result<RecoveryResult> {
    match alg {
        Algorithm::Bols => run_bols(d, y, &p.blind),
        Algorithm::Bomp => run_bomp(d, y, &p.blind),
        Algorithm::Ols => run_ols_known_k(d, y, p.k),
        Algorithm::Omp => run_omp_known_k(d, y, p.k),
        Algorithm::Cosamp => run_cosamp(d, y, p.k, p.cosamp_max_iterations),
        Algorithm::Mols => run_mols(d, y, p.k, p.mols_l),
    }
}

fn check_len(d: &MeasurementMatrix, y: &[f64]) -> Result<()> {
    if y.len() != d.rows() {
        return Err(RecoveryError::DimensionMismatch {
            expected: d.rows(),
            got: y.len(),
        });
    }
    Ok(())
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Indices of the `count` largest scores, ordered by descending score with
/// ties broken by lowest index. Entries equal to `-inf` are never chosen.
fn top_indices(scores: &[f64], count: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).filter(|&j| scores[j] > f64::NEG_INFINITY).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(count);
    idx
}
