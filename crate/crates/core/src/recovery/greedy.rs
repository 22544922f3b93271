use crate::linalg::LinalgError;
use crate::matgen::{norm2, MeasurementMatrix};

use super::state::GreedyState;
use super::{check_len, max_abs, BlindStopParams, RecoveryError, RecoveryResult, StopReason, RESIDUAL_FLOOR};

#[derive(Clone, Copy)]
enum Selection {
    Ols,
    Omp,
}

#[derive(Clone, Copy)]
enum Stopping {
    KnownK(usize),
    Blind { threshold: f64, cap: usize },
}

/// Blind OLS: OLS selection until `‖Dᵀr‖∞/‖r‖₂ ≤ ω*·μ`.
pub fn run_bols(d: &MeasurementMatrix, y: &[f64], params: &BlindStopParams) -> Result<RecoveryResult, RecoveryError> {
    params.validate()?;
    run_greedy(
        d,
        y,
        Selection::Ols,
        Stopping::Blind {
            threshold: params.threshold(),
            cap: params.max_iterations,
        },
    )
}

/// Blind OMP with the same threshold form as [`run_bols`].
pub fn run_bomp(d: &MeasurementMatrix, y: &[f64], params: &BlindStopParams) -> Result<RecoveryResult, RecoveryError> {
    params.validate()?;
    run_greedy(
        d,
        y,
        Selection::Omp,
        Stopping::Blind {
            threshold: params.threshold(),
            cap: params.max_iterations,
        },
    )
}

/// OLS stopped after exactly `k` selections.
pub fn run_ols_known_k(d: &MeasurementMatrix, y: &[f64], k: usize) -> Result<RecoveryResult, RecoveryError> {
    check_k(d, k)?;
    run_greedy(d, y, Selection::Ols, Stopping::KnownK(k))
}

/// OMP stopped after exactly `k` selections.
pub fn run_omp_known_k(d: &MeasurementMatrix, y: &[f64], k: usize) -> Result<RecoveryResult, RecoveryError> {
    check_k(d, k)?;
    run_greedy(d, y, Selection::Omp, Stopping::KnownK(k))
}

fn check_k(d: &MeasurementMatrix, k: usize) -> Result<(), RecoveryError> {
    if k > d.rows() {
        return Err(RecoveryError::InvalidParams(format!(
            "sparsity {k} exceeds the {} available measurements",
            d.rows()
        )));
    }
    Ok(())
}

fn run_greedy(
    d: &MeasurementMatrix,
    y: &[f64],
    selection: Selection,
    stopping: Stopping,
) -> Result<RecoveryResult, RecoveryError> {
    check_len(d, y)?;
    let floor = RESIDUAL_FLOOR * norm2(y);
    let mut st = GreedyState::new(d, y, matches!(selection, Selection::Ols));
    let mut history = vec![st.residual_norm()];

    let stop_reason = loop {
        let r_norm = *history.last().unwrap();
        if let Stopping::KnownK(k) = stopping {
            if st.len() >= k {
                break StopReason::ReachedKnownK;
            }
        }
        if r_norm <= floor {
            break StopReason::ResidualBelowFloor;
        }
        let corr = st.correlations();
        if let Stopping::Blind { threshold, cap } = stopping {
            if max_abs(&corr) / r_norm <= threshold {
                break StopReason::BlindThresholdMet;
            }
            if st.len() >= cap {
                break StopReason::ReachedMaxIterations;
            }
        }
        if st.len() >= d.rows() {
            break StopReason::ReachedMaxIterations;
        }
        let pick = match selection {
            Selection::Ols => st.best_ols(&corr),
            Selection::Omp => st.best_omp(&corr),
        };
        let Some(j) = pick else {
            break StopReason::RankDeficient;
        };
        match st.push(j) {
            Ok(()) => history.push(st.residual_norm()),
            Err(LinalgError::RankDeficient { .. }) => break StopReason::RankDeficient,
            Err(e) => return Err(e.into()),
        }
    };

    Ok(RecoveryResult {
        x_hat: st.x_hat(),
        iterations: st.len(),
        support: st.support().clone(),
        residual_norm_history: history,
        stop_reason,
    })
}
