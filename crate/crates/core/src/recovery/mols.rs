use crate::linalg::{least_squares_on_support, LinalgError, SupportSet};
use crate::matgen::{norm2, MeasurementMatrix};

use super::state::GreedyState;
use super::{check_len, top_indices, RecoveryError, RecoveryResult, StopReason, RESIDUAL_FLOOR};

/// Multiple OLS: each iteration adds the `l` unselected columns with the
/// best OLS scores against the current support, until `k` are held; the
/// final estimate keeps the `k` largest coefficients and re-solves on them.
pub fn run_mols(d: &MeasurementMatrix, y: &[f64], k: usize, l: usize) -> Result<RecoveryResult, RecoveryError> {
    check_len(d, y)?;
    if l == 0 {
        return Err(RecoveryError::InvalidParams("MOLS needs L >= 1".into()));
    }
    let rounds = k.div_ceil(l);
    if l * rounds > d.rows() {
        return Err(RecoveryError::InvalidParams(format!(
            "L * ceil(K/L) = {} exceeds the {} available measurements",
            l * rounds,
            d.rows()
        )));
    }

    let floor = RESIDUAL_FLOOR * norm2(y);
    let mut st = GreedyState::new(d, y, true);
    let mut history = vec![st.residual_norm()];
    let mut iterations = 0;

    let mut stop_reason = loop {
        if st.len() >= k {
            break StopReason::ReachedKnownK;
        }
        if *history.last().unwrap() <= floor {
            break StopReason::ResidualBelowFloor;
        }
        let corr = st.correlations();
        let scores = st.ols_scores(&corr);
        let mut added = 0;
        for j in top_indices(&scores, l) {
            match st.push(j) {
                Ok(()) => added += 1,
                Err(LinalgError::RankDeficient { .. }) => {}
                Err(e) => return Err(e.into()),
            }
        }
        if added == 0 {
            break StopReason::RankDeficient;
        }
        iterations += 1;
        history.push(st.residual_norm());
    };

    let (x_hat, support) = if st.len() > k {
        let coef = st.coefficients();
        let order: Vec<f64> = coef.iter().map(|c| c.abs()).collect();
        let mut keep: Vec<usize> = top_indices(&order, k);
        keep.sort_unstable();
        let kept: Vec<usize> = keep.iter().map(|&p| st.support()[p]).collect();
        match least_squares_on_support(d, y, &kept) {
            Ok(x) => (x, SupportSet::from_indices(kept, d.cols())?),
            Err(LinalgError::RankDeficient { .. }) => {
                stop_reason = StopReason::RankDeficient;
                (st.x_hat(), st.support().clone())
            }
            Err(e) => return Err(e.into()),
        }
    } else {
        (st.x_hat(), st.support().clone())
    };

    Ok(RecoveryResult {
        x_hat,
        support,
        iterations,
        residual_norm_history: history,
        stop_reason,
    })
}
