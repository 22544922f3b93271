use crate::linalg::{least_squares_on_support, residual, LinalgError, SupportSet};
use crate::matgen::{norm2, MeasurementMatrix};

use super::{
    check_len, top_indices, RecoveryError, RecoveryResult, StopReason, COSAMP_STAGNATION_TOL, RESIDUAL_FLOOR,
};

/// Compressive sampling matching pursuit with sparsity `k`.
///
/// Each iteration merges the `2k` columns most correlated with the residual
/// into the current support, solves least squares on the union and prunes
/// back to the `k` largest coefficients.
pub fn run_cosamp(
    d: &MeasurementMatrix,
    y: &[f64],
    k: usize,
    max_iterations: usize,
) -> Result<RecoveryResult, RecoveryError> {
    check_len(d, y)?;
    if k > d.rows() {
        return Err(RecoveryError::InvalidParams(format!(
            "sparsity {k} exceeds the {} available measurements",
            d.rows()
        )));
    }
    let y_norm = norm2(y);
    if k == 0 {
        return Ok(RecoveryResult::empty(d.cols(), y_norm, StopReason::ReachedKnownK));
    }
    if max_iterations == 0 {
        return Err(RecoveryError::InvalidParams("max_iterations must be positive".into()));
    }

    let floor = RESIDUAL_FLOOR * y_norm;
    let mut x = vec![0.0; d.cols()];
    let mut support: Vec<usize> = Vec::new();
    let mut r = y.to_vec();
    let mut history = vec![y_norm];
    let mut iterations = 0;

    let stop_reason = loop {
        let prev = *history.last().unwrap();
        if prev <= floor {
            break StopReason::ResidualBelowFloor;
        }
        if iterations >= max_iterations {
            break StopReason::ReachedMaxIterations;
        }
        let proxy: Vec<f64> = d.tr_mul_vec(&r).into_iter().map(f64::abs).collect();
        let mut merged = support.clone();
        for j in top_indices(&proxy, 2 * k) {
            if !merged.contains(&j) {
                merged.push(j);
            }
        }
        merged.sort_unstable();
        let b = match least_squares_on_support(d, y, &merged) {
            Ok(b) => b,
            Err(LinalgError::RankDeficient { .. } | LinalgError::SupportTooLarge { .. }) => {
                break StopReason::RankDeficient
            }
            Err(e) => return Err(e.into()),
        };
        let magnitude: Vec<f64> = b.iter().map(|v| v.abs()).collect();
        let mut keep: Vec<usize> = top_indices(&magnitude, k)
            .into_iter()
            .filter(|&j| merged.contains(&j))
            .collect();
        keep.sort_unstable();
        x.iter_mut().for_each(|v| *v = 0.0);
        for &j in &keep {
            x[j] = b[j];
        }
        support = keep;
        r = residual(d, y, &x)?;
        let now = norm2(&r);
        history.push(now);
        iterations += 1;
        if now <= floor {
            break StopReason::ResidualBelowFloor;
        }
        if (prev - now).abs() < COSAMP_STAGNATION_TOL * prev {
            break StopReason::ResidualStagnated;
        }
    };

    Ok(RecoveryResult {
        x_hat: x,
        support: SupportSet::from_indices(support, d.cols())?,
        iterations,
        residual_norm_history: history,
        stop_reason,
    })
}
