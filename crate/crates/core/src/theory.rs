//! Closed-form bounds behind the blind stopping rule.
//!
//! Notation used throughout:
//!
//! * `k` sparsity, `m` rows, `n` columns, `mu` coherence;
//! * `rho` the singular-value slack of the Gaussian tail bound;
//! * `c` the reconstructible sparsity, see [`reconstructible_sparsity`];
//! * `omega` the multiplier of `mu` in the stopping threshold `Q = omega * mu`.
//!
//! All logarithms are natural. Every function is a pure function of its
//! arguments.

use serde::Serialize;

/// Absolute tolerance on the probability when inverting [`recovery_probability`].
pub const INVERSION_TOL: f64 = 1e-10;
const MAX_BISECTION_STEPS: usize = 200;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TheoryError {
    #[error("infeasible parameters: {0}")]
    InfeasibleParams(String),
    #[error("target probability {target} is not below the attainable ceiling {ceiling}")]
    InfeasibleTarget { target: f64, ceiling: f64 },
}

type Result<T> = std::result::Result<T, TheoryError>;

fn infeasible(msg: impl Into<String>) -> TheoryError {
    TheoryError::InfeasibleParams(msg.into())
}

/// Singular-value interval of an `m x k` Gaussian N(0, 1/m) matrix and the
/// probability floor with which each side holds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SingularValueTails {
    pub lower: f64,
    pub upper: f64,
    pub prob_floor: f64,
}

/// `(1 - sqrt(k/m) - rho, 1 + sqrt(k/m) + rho, 1 - exp(-m rho^2 / 2))`.
pub fn singular_value_tails(k: usize, m: usize, rho: f64) -> SingularValueTails {
    let a = (k as f64 / m as f64).sqrt();
    SingularValueTails {
        lower: 1.0 - a - rho,
        upper: 1.0 + a + rho,
        prob_floor: -(-(m as f64) * rho * rho / 2.0).exp_m1(),
    }
}

/// The inflation factor `T` of the probabilistic mapping-factor bound:
/// `T = (1 - k mu^2 (1 + sqrt(k/m) + rho) / (1 - sqrt(k/m) - rho)^2)^-1`.
pub fn mapping_inflation(k: usize, m: usize, mu: f64, rho: f64) -> Result<f64> {
    if k >= 2 && !(mu * (k as f64 - 1.0) < 1.0) {
        return Err(infeasible(format!("need mu < 1/(K-1), got mu = {mu}, K = {k}")));
    }
    if !(mu >= 0.0) {
        return Err(infeasible(format!("need mu >= 0, got {mu}")));
    }
    let tails = singular_value_tails(k, m, rho);
    if !(tails.lower > 0.0) {
        return Err(infeasible(format!(
            "need 1 - sqrt(K/M) - rho > 0, got {}",
            tails.lower
        )));
    }
    let ratio = k as f64 * mu * mu * tails.upper / (tails.lower * tails.lower);
    if !(ratio < 1.0) {
        return Err(infeasible(format!(
            "need K mu^2 (1 + sqrt(K/M) + rho) < (1 - sqrt(K/M) - rho)^2, ratio = {ratio}"
        )));
    }
    Ok(1.0 / (1.0 - ratio))
}

/// Lower bound `1/sqrt(T)` on `||P_S^perp D_i||_2`, valid with the
/// probability of [`singular_value_tails`].
pub fn mapping_bound_probabilistic(k: usize, m: usize, mu: f64, rho: f64) -> Result<f64> {
    mapping_inflation(k, m, mu, rho).map(|t| 1.0 / t.sqrt())
}

/// Deterministic coherence bound `sqrt(1 - k mu)`.
pub fn mapping_bound_linear(k: usize, mu: f64) -> Result<f64> {
    let v = 1.0 - k as f64 * mu;
    if !(v > 0.0) {
        return Err(infeasible(format!("need K mu < 1, got K mu = {}", k as f64 * mu)));
    }
    Ok(v.sqrt())
}

/// Deterministic coherence bound
/// `sqrt(1 - (1 + (k-1) mu) k mu^2 / (1 - (k-1) mu)^2)`.
pub fn mapping_bound_ratio(k: usize, mu: f64) -> Result<f64> {
    let km1 = (k as f64 - 1.0).max(0.0) * mu;
    if !(km1 < 1.0) {
        return Err(infeasible(format!("need (K-1) mu < 1, got {km1}")));
    }
    let v = 1.0 - (1.0 + km1) * k as f64 * mu * mu / ((1.0 - km1) * (1.0 - km1));
    if !(v >= 0.0) {
        return Err(infeasible(format!("bound argument is negative ({v})")));
    }
    Ok(v.sqrt())
}

/// `(k-1) mu - sqrt(k/m)`: the probabilistic bound beats both deterministic
/// ones for `0 < rho <` this value. Nonpositive means no such `rho` exists.
pub fn tighter_bound_rho_max(k: usize, m: usize, mu: f64) -> f64 {
    (k as f64 - 1.0) * mu - (k as f64 / m as f64).sqrt()
}

/// Reconstructible-sparsity threshold `C = (1 + 1/mu) / 2`, the classical
/// coherence condition for exact greedy recovery.
pub fn reconstructible_sparsity(mu: f64) -> f64 {
    0.5 * (1.0 + 1.0 / mu)
}

/// `theta = sqrt(A1) - sqrt(A2)` together with its two terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThetaTerms {
    pub a1: f64,
    pub a2: f64,
    pub theta: f64,
}

/// `A1 = 4(m-c) - 2`, `A2 = m - c + 2 sqrt((m-c) ln(m-c))`.
pub fn theta(m: usize, c: f64) -> Result<ThetaTerms> {
    let d = m as f64 - c;
    if !(d > 1.0) {
        return Err(infeasible(format!("need M - C > 1, got {d}")));
    }
    let a1 = 4.0 * d - 2.0;
    let a2 = d + 2.0 * (d * d.ln()).sqrt();
    Ok(ThetaTerms {
        a1,
        a2,
        theta: a1.sqrt() - a2.sqrt(),
    })
}

/// Inputs shared by the probability and SNR calculators.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoryParams {
    pub m: usize,
    pub n: usize,
    pub mu: f64,
    pub rho: f64,
    /// Sparsity, needed only by the SNR bounds.
    pub k: Option<usize>,
    /// Reconstructible sparsity; defaults to [`reconstructible_sparsity`].
    pub c: f64,
    pub p_min: f64,
}

impl TheoryParams {
    pub fn new(m: usize, n: usize, mu: f64, rho: f64) -> Self {
        Self {
            m,
            n,
            mu,
            rho,
            k: None,
            c: reconstructible_sparsity(mu),
            p_min: 0.95,
        }
    }

    pub fn with_sparsity(mut self, k: usize) -> Self {
        self.k = Some(k);
        self
    }

    /// Replaces the surrogate threshold with an externally supplied `C`.
    pub fn with_c(mut self, c: f64) -> Self {
        self.c = c;
        self
    }

    pub fn with_p_min(mut self, p_min: f64) -> Self {
        self.p_min = p_min;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 || self.m > self.n {
            return Err(infeasible(format!("need 1 <= M <= N, got {}x{}", self.m, self.n)));
        }
        if !(self.mu > 0.0 && self.mu <= 1.0) {
            return Err(infeasible(format!("need mu in (0, 1], got {}", self.mu)));
        }
        if !(self.rho > 0.0) {
            return Err(infeasible(format!("need rho > 0, got {}", self.rho)));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(infeasible(format!("need C > 0, got {}", self.c)));
        }
        Ok(())
    }

    pub fn theta(&self) -> Result<ThetaTerms> {
        theta(self.m, self.c)
    }

    fn sparsity(&self) -> Result<usize> {
        let k = self.k.ok_or_else(|| infeasible("sparsity K is not set"))?;
        if k == 0 {
            return Err(infeasible("need K >= 1"));
        }
        Ok(k)
    }
}

/// `1 - 2 exp(-m rho^2 / 2) - 1/(m - c) - 1/m`, the limit of
/// [`recovery_probability`] as `omega -> inf`.
pub fn probability_ceiling(params: &TheoryParams) -> Result<f64> {
    params.validate()?;
    params.theta()?;
    let m = params.m as f64;
    Ok(1.0 - 2.0 * (-m * params.rho * params.rho / 2.0).exp() - 1.0 / (m - params.c) - 1.0 / m)
}

/// Probability that OLS with threshold `omega * mu` stops exactly after the
/// true support:
///
/// `P(w) = 1 - C N / (exp(z/2) sqrt(2 pi z)) - 2 exp(-M rho^2 / 2) - 1/(M-C) - 1/M`
/// with `z = w^2 mu^2 theta^2`. The Gaussian-tail term is evaluated in log
/// space so that large `z` neither overflows nor loses the other terms.
pub fn recovery_probability(omega: f64, params: &TheoryParams) -> Result<f64> {
    if !(omega > 0.0) {
        return Err(infeasible(format!("need omega > 0, got {omega}")));
    }
    let ceiling = probability_ceiling(params)?;
    let th = params.theta()?.theta;
    let z = (omega * params.mu * th).powi(2);
    let log_tail = (params.c * params.n as f64).ln() - 0.5 * z - 0.5 * (2.0 * std::f64::consts::PI * z).ln();
    Ok(ceiling - log_tail.exp())
}

/// Inverts [`recovery_probability`] by bisection.
///
/// The subtracted tail `exp(-z/2)/sqrt(2 pi z)` is strictly decreasing in
/// `z`, so `P` is strictly increasing in `omega` on all of `(0, inf)`. The
/// bracket starts at `omega = 1/(mu theta)` (where `z = 1`) and is widened
/// geometrically in whichever direction is needed.
pub fn omega_for_probability(p_min: f64, params: &TheoryParams) -> Result<f64> {
    let ceiling = probability_ceiling(params)?;
    if !(p_min < ceiling) {
        return Err(TheoryError::InfeasibleTarget {
            target: p_min,
            ceiling,
        });
    }
    let p = |w: f64| recovery_probability(w, params);
    let th = params.theta()?.theta;
    let pivot = 1.0 / (params.mu * th);

    let mut lo = pivot;
    let mut p_lo = p(lo)?;
    while p_lo >= p_min {
        lo *= 0.5;
        p_lo = p(lo)?;
    }
    let mut hi = pivot;
    let mut p_hi = p(hi)?;
    while p_hi < p_min {
        hi *= 2.0;
        let next = p(hi)?;
        if next < p_hi {
            return Err(infeasible("recovery probability is not monotone on the bracket"));
        }
        p_hi = next;
    }

    for _ in 0..MAX_BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let p_mid = p(mid)?;
        if !(p_lo <= p_mid && p_mid <= p_hi) {
            return Err(infeasible("recovery probability is not monotone on the bracket"));
        }
        if p_mid < p_min {
            lo = mid;
            p_lo = p_mid;
        } else {
            hi = mid;
            p_hi = p_mid;
        }
        if p_hi - p_lo <= 0.01 * INVERSION_TOL {
            break;
        }
    }
    Ok(if (p_min - p_lo).abs() < (p_hi - p_min).abs() { lo } else { hi })
}

/// SNR floor for selecting a correct atom in every iteration:
///
/// `phi1 = 4 (2 - (K-T) mu)^2 w^2 mu^2 theta^2 /
///         (M (2 - (K-T) mu - 2 K T mu)^2 (1 - (K-1) mu)^2)`.
pub fn snr_floor_selection(params: &TheoryParams, omega: f64) -> Result<f64> {
    params.validate()?;
    let k = params.sparsity()?;
    let (kf, mu, m) = (k as f64, params.mu, params.m as f64);
    let t = mapping_inflation(k, params.m, mu, params.rho)?;
    let th = params.theta()?.theta;
    let lead = 2.0 - (kf - t) * mu;
    let sel = lead - 2.0 * kf * t * mu;
    if sel == 0.0 {
        return Err(infeasible("2 - (K-T) mu - 2 K T mu vanishes"));
    }
    let coh = 1.0 - (kf - 1.0) * mu;
    if coh == 0.0 {
        return Err(infeasible("1 - (K-1) mu vanishes"));
    }
    Ok(4.0 * lead * lead * (omega * mu * th).powi(2) / (m * sel * sel * coh * coh))
}

/// SNR floor for not stopping before the true support is exhausted:
///
/// `phi2 = w^2 mu^2 (theta + sqrt(M + 2 sqrt(M ln M)))^2 /
///         (M (1 - sqrt(K/M) - rho - w mu (1 + sqrt(K/M) + rho) sqrt(K))^2)`.
pub fn snr_floor_continuation(params: &TheoryParams, omega: f64) -> Result<f64> {
    params.validate()?;
    let k = params.sparsity()?;
    mapping_inflation(k, params.m, params.mu, params.rho)?;
    let (kf, mu, m) = (k as f64, params.mu, params.m as f64);
    let th = params.theta()?.theta;
    let tails = singular_value_tails(k, params.m, params.rho);
    let denom = tails.lower - omega * mu * tails.upper * kf.sqrt();
    if !(denom > 0.0) {
        return Err(infeasible(format!(
            "need 1 - sqrt(K/M) - rho - omega mu (1 + sqrt(K/M) + rho) sqrt(K) > 0, got {denom}"
        )));
    }
    let noise = (m + 2.0 * (m * m.ln()).sqrt()).sqrt();
    Ok((omega * mu * (th + noise)).powi(2) / (m * denom * denom))
}

/// `max(phi1, phi2)`: the minimum per-component SNR that the blind rule needs.
pub fn snr_min_bound(params: &TheoryParams, omega: f64) -> Result<f64> {
    Ok(snr_floor_selection(params, omega)?.max(snr_floor_continuation(params, omega)?))
}

/// Everything the blind solver needs from the theory, derived once per matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StoppingRule {
    pub omega: f64,
    /// `omega - rho`
    pub omega_star: f64,
    /// `omega * mu`
    pub q: f64,
    pub c: f64,
    pub theta: f64,
    pub ceiling: f64,
    /// Upper end of the `rho` range for which the probabilistic bound is the
    /// tightest, evaluated at `K = C`.
    pub rho_max: f64,
}

impl StoppingRule {
    pub fn from_params(params: &TheoryParams) -> Result<Self> {
        let omega = omega_for_probability(params.p_min, params)?;
        let rho_max = (params.c - 1.0) * params.mu - (params.c / params.m as f64).sqrt();
        Ok(Self {
            omega,
            omega_star: omega - params.rho,
            q: omega * params.mu,
            c: params.c,
            theta: params.theta()?.theta,
            ceiling: probability_ceiling(params)?,
            rho_max,
        })
    }

    /// Whether `rho` lies in `(0, (C-1) mu - sqrt(C/M))`.
    pub fn rho_in_range(&self, rho: f64) -> bool {
        rho > 0.0 && rho < self.rho_max
    }
}

/// How the calibrated omega moves when the reconstructible sparsity `C`
/// is scaled by each of `factors`. `None` marks an infeasible target.
pub fn omega_sensitivity_to_c(params: &TheoryParams, factors: &[f64]) -> Vec<(f64, Option<f64>)> {
    factors
        .iter()
        .map(|&f| {
            let c = params.c * f;
            let p = params.clone().with_c(c);
            (c, omega_for_probability(p.p_min, &p).ok())
        })
        .collect()
}

/// One-line summary of [`omega_sensitivity_to_c`] at `C/2`, `C`, `2C`.
pub fn c_sensitivity_note(params: &TheoryParams) -> String {
    let parts: Vec<String> = omega_sensitivity_to_c(params, &[0.5, 1.0, 2.0])
        .into_iter()
        .map(|(c, w)| match w {
            Some(w) => format!("C = {c:.4} -> omega = {w:.4}"),
            None => format!("C = {c:.4} -> infeasible"),
        })
        .collect();
    format!(
        "omega depends on C, here the surrogate (1 + 1/mu)/2 unless given explicitly: {}",
        parts.join("; ")
    )
}
