//! Closed-form bound sweeps as numeric tables. Infeasible points are NaN.

use crate::theory::{
    mapping_bound_linear, mapping_bound_probabilistic, mapping_bound_ratio, omega_for_probability,
    recovery_probability, singular_value_tails, snr_floor_continuation, snr_floor_selection, tighter_bound_rho_max,
    TheoryError, TheoryParams,
};

use super::{fmt_real, HarnessError};

/// A rectangular table of reals whose first column is the swept variable.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| fmt_real(*v)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }
}

fn or_nan(r: Result<f64, TheoryError>) -> f64 {
    r.unwrap_or(f64::NAN)
}

fn curve_tag(mu: f64, m: usize) -> String {
    format!("mu{mu}_m{m}")
}

/// Probabilistic, ratio and linear lower bounds on the projected column
/// norm over `k_grid`, one triple of columns per `(mu, m)` curve.
pub fn mapping_bounds_table(curves: &[(f64, usize)], k_grid: &[usize], rho: f64) -> Table {
    let mut header = vec!["k".to_string()];
    for &(mu, m) in curves {
        let tag = curve_tag(mu, m);
        header.extend([format!("probabilistic_{tag}"), format!("ratio_{tag}"), format!("linear_{tag}")]);
    }
    let rows = k_grid
        .iter()
        .map(|&k| {
            let mut row = vec![k as f64];
            for &(mu, m) in curves {
                row.push(or_nan(mapping_bound_probabilistic(k, m, mu, rho)));
                row.push(or_nan(mapping_bound_ratio(k, mu)));
                row.push(or_nan(mapping_bound_linear(k, mu)));
            }
            row
        })
        .collect();
    Table { header, rows }
}

/// Singular-value tail interval and its probability floor over `k_grid`.
pub fn tails_table(m: usize, rho: f64, k_grid: &[usize]) -> Table {
    Table {
        header: ["k", "lower", "upper", "prob_floor"].map(String::from).to_vec(),
        rows: k_grid
            .iter()
            .map(|&k| {
                let t = singular_value_tails(k, m, rho);
                vec![k as f64, t.lower, t.upper, t.prob_floor]
            })
            .collect(),
    }
}

/// Upper end of the `rho` range where the probabilistic bound is tightest.
pub fn rho_max_table(m: usize, mu: f64, k_grid: &[usize]) -> Table {
    Table {
        header: ["k", "rho_max"].map(String::from).to_vec(),
        rows: k_grid
            .iter()
            .map(|&k| vec![k as f64, tighter_bound_rho_max(k, m, mu)])
            .collect(),
    }
}

/// Recovery probability over `omega_grid`.
pub fn probability_table(params: &TheoryParams, omega_grid: &[f64]) -> Result<Table, HarnessError> {
    params.validate()?;
    Ok(Table {
        header: ["omega", "probability"].map(String::from).to_vec(),
        rows: omega_grid
            .iter()
            .map(|&w| vec![w, or_nan(recovery_probability(w, params))])
            .collect(),
    })
}

/// For each target probability: the calibrated omega, both SNR floors and
/// their maximum in dB, one group of columns per `(mu, m)` curve.
pub fn snr_min_table(
    curves: &[(f64, usize)],
    n: usize,
    k: usize,
    rho: f64,
    c: Option<f64>,
    p_grid: &[f64],
) -> Table {
    let mut header = vec!["p_min".to_string()];
    for &(mu, m) in curves {
        let tag = curve_tag(mu, m);
        header.extend([
            format!("omega_{tag}"),
            format!("phi1_{tag}"),
            format!("phi2_{tag}"),
            format!("snr_min_db_{tag}"),
        ]);
    }
    let rows = p_grid
        .iter()
        .map(|&p| {
            let mut row = vec![p];
            for &(mu, m) in curves {
                let mut params = TheoryParams::new(m, n, mu, rho).with_sparsity(k).with_p_min(p);
                if let Some(c) = c {
                    params = params.with_c(c);
                }
                let omega = or_nan(omega_for_probability(p, &params));
                let (phi1, phi2) = if omega.is_nan() {
                    (f64::NAN, f64::NAN)
                } else {
                    (
                        or_nan(snr_floor_selection(&params, omega)),
                        or_nan(snr_floor_continuation(&params, omega)),
                    )
                };
                row.extend([omega, phi1, phi2, 10.0 * phi1.max(phi2).log10()]);
            }
            row
        })
        .collect();
    Table { header, rows }
}
