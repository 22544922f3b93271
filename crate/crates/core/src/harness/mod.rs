//! Monte Carlo experiment engine.
//!
//! An [`Experiment`] owns one measurement matrix and its coherence, derives
//! the blind stopping threshold once, and runs independent trials over a
//! grid of SNR or omega values. Trial `t` draws its spectrum and its
//! standard-normal noise from two fixed streams keyed by `t` alone, so every
//! algorithm at every grid point sees the same `(D, x)` and the same noise
//! shape, rescaled to the grid point's SNR. Results are merged by
//! (grid point, algorithm, trial), which makes the output independent of
//! the number of worker threads.

pub mod bounds;
mod config;
mod spectrum;

pub use config::{
    apply_override, figure_configs, figure_configs_in, figure_panels, figure_panels_in, flatten_scaled, preset_names,
    resolve, ExperimentConfig, ExperimentKind, Scale, FIGURE_PRESETS,
};
pub use spectrum::{calibrate_noise, gen_sparse_spectrum, noise_sigma, NoisyMeasurement, SparseSpectrum};

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::matgen::{generate, norm2, MatrixError, MeasurementMatrix};
use crate::recovery::{self, default_blind_cap, Algorithm, BlindStopParams, RecoveryError, SolverParams};
use crate::seed::RngSeed;
use crate::theory::{StoppingRule, TheoryError, TheoryParams};

/// Header of the aggregated CSV.
pub const CSV_HEADER: &str = "grid,algorithm,prob_recovery,mse,mean_iterations,trials";

const TRIAL_DOMAIN: u64 = 0x7472_6961_6c73;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("spectrum is zero, so no finite SNR can be calibrated")]
    ZeroSignal,
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Theory(#[from] TheoryError),
    #[error(transparent)]
    Recovery(#[from] RecoveryError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

type Result<T> = std::result::Result<T, HarnessError>;

/// Shortest round-trip formatting; non-finite values as `inf`, `-inf`, `NaN`.
pub fn fmt_real(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v:?}")
    }
}

/// JSON has no infinities; non-finite reals travel as strings.
mod json_real {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str(&super::fmt_real(*v))
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) => match s.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "NaN" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("not a real: {other}"))),
            },
        }
    }
}

/// One point of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GridPoint {
    Snr(f64),
    /// Blind threshold `omega * mu`, without the `rho` slack.
    Omega { omega: f64, snr_db: f64 },
}

impl GridPoint {
    pub fn value(self) -> f64 {
        match self {
            GridPoint::Snr(v) => v,
            GridPoint::Omega { omega, .. } => omega,
        }
    }

    pub fn snr_db(self) -> f64 {
        match self {
            GridPoint::Snr(v) => v,
            GridPoint::Omega { snr_db, .. } => snr_db,
        }
    }
}

/// The ground truth and measurements of one trial at one SNR.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialInstance {
    pub spectrum: SparseSpectrum,
    pub measurement: NoisyMeasurement,
}

/// One JSON-lines record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub trial: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "N")]
    pub n: usize,
    /// SNR in dB for SNR sweeps, omega for omega sweeps.
    #[serde(with = "json_real")]
    pub grid: f64,
    #[serde(with = "json_real")]
    pub snr_db: f64,
    /// Relative l2 error within the configured tolerance.
    pub success: bool,
    /// Recovered support equals the true support.
    pub exact_support: bool,
    pub rel_error: f64,
    pub mse_contrib: f64,
    pub iterations: usize,
    pub stop_reason: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Aggregate over the trials of one (grid point, algorithm) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    #[serde(with = "json_real")]
    pub grid: f64,
    pub algorithm: Algorithm,
    /// successes / trials
    pub prob_recovery: f64,
    pub mse: f64,
    pub mean_iterations: f64,
    pub trials: usize,
    pub exact_support_rate: f64,
}

/// Blind threshold in use for SNR sweeps.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlindCalibration {
    pub omega: f64,
    pub omega_star: f64,
    /// `omega_star * mu`
    pub threshold: f64,
    /// Present when omega came from inverting the recovery probability.
    pub rule: Option<StoppingRule>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutput {
    /// Sorted by grid value, then algorithm name.
    pub rows: Vec<MetricsRow>,
    /// Ordered by grid point, algorithm, trial.
    pub outcomes: Vec<TrialOutcome>,
}

pub struct Experiment {
    pub config: ExperimentConfig,
    pub matrix: MeasurementMatrix,
    pub mu: f64,
    pub calibration: Option<BlindCalibration>,
    pub warnings: Vec<String>,
}

impl Experiment {
    /// Generates the matrix and, if blind solvers run on an SNR sweep,
    /// derives their threshold. Infeasible theory parameters fail here,
    /// before any trial runs.
    pub fn prepare(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        if !matches!(config.kind, ExperimentKind::SnrSweep | ExperimentKind::OmegaSweep) {
            return Err(HarnessError::InvalidConfig(format!(
                "{:?} is a bound sweep, not a Monte Carlo experiment",
                config.kind
            )));
        }
        if config.k == 0 {
            return Err(HarnessError::InvalidConfig("k must be at least 1".into()));
        }
        let matrix = generate(
            config.family,
            config.m,
            config.n,
            config.offset_max,
            RngSeed(config.matrix_seed()),
        )?;
        Self::with_matrix(config, matrix)
    }

    /// Like [`Experiment::prepare`] but with a caller-supplied matrix.
    pub fn with_matrix(config: ExperimentConfig, matrix: MeasurementMatrix) -> Result<Self> {
        config.validate()?;
        if (matrix.rows(), matrix.cols()) != (config.m, config.n) {
            return Err(HarnessError::InvalidConfig(format!(
                "matrix is {}x{}, config says {}x{}",
                matrix.rows(),
                matrix.cols(),
                config.m,
                config.n
            )));
        }
        let mu = matrix.coherence();
        let mut warnings = Vec::new();
        let needs_blind = config.kind == ExperimentKind::SnrSweep && config.algorithms.iter().any(|a| a.is_blind());
        let calibration = if needs_blind {
            let (omega, rule) = match config.omega {
                Some(w) => (w, None),
                None => {
                    let mut params = TheoryParams::new(config.m, config.n, mu, config.rho).with_p_min(config.p_min);
                    if let Some(c) = config.c {
                        params = params.with_c(c);
                    }
                    let rule = StoppingRule::from_params(&params)?;
                    if !rule.rho_in_range(config.rho) {
                        warnings.push(format!(
                            "rho = {} lies outside the valid interval (0, {:.6}) = (0, (C-1) mu - sqrt(C/M))",
                            config.rho, rule.rho_max
                        ));
                    }
                    (rule.omega, Some(rule))
                }
            };
            let omega_star = omega - config.rho;
            if !(omega_star >= 0.0) {
                return Err(HarnessError::InvalidConfig(format!(
                    "omega - rho = {omega_star} is negative (omega = {omega}, rho = {})",
                    config.rho
                )));
            }
            Some(BlindCalibration {
                omega,
                omega_star,
                threshold: omega_star * mu,
                rule,
            })
        } else {
            None
        };
        Ok(Self {
            config,
            matrix,
            mu,
            calibration,
            warnings,
        })
    }

    pub fn grid(&self) -> Vec<GridPoint> {
        match self.config.kind {
            ExperimentKind::OmegaSweep => self
                .config
                .omega_grid
                .iter()
                .map(|&omega| GridPoint::Omega {
                    omega,
                    snr_db: self.config.omega_sweep_snr_db,
                })
                .collect(),
            _ => self.config.snr_grid_db.iter().map(|&v| GridPoint::Snr(v)).collect(),
        }
    }

    fn trial_seed(&self) -> RngSeed {
        RngSeed(self.config.base_seed).derive(TRIAL_DOMAIN)
    }

    /// The spectrum and noisy measurements of trial `trial` at `snr_db`.
    pub fn instance(&self, trial: usize, snr_db: f64) -> Result<TrialInstance> {
        let seed = self.trial_seed();
        let t = trial as u64;
        let c = &self.config;
        let spectrum =
            spectrum::sparse_spectrum_from_rng(c.n, c.k, c.nonzero_mean, c.nonzero_var, &mut seed.stream(t << 1))?;
        let measurement = spectrum::calibrate_noise_with(&self.matrix, &spectrum.x, snr_db, &mut seed.stream(t << 1 | 1))?;
        Ok(TrialInstance { spectrum, measurement })
    }

    /// Solver parameters at one grid point.
    pub fn solver_params(&self, point: GridPoint) -> Result<SolverParams> {
        let c = &self.config;
        let cap = c.blind_max_iterations.unwrap_or_else(|| default_blind_cap(c.m));
        let omega_star = match (point, &self.calibration) {
            (GridPoint::Omega { omega, .. }, _) => omega,
            (GridPoint::Snr(_), Some(cal)) => cal.omega_star,
            (GridPoint::Snr(_), None) => 0.0,
        };
        Ok(SolverParams {
            k: c.k,
            blind: BlindStopParams::new(omega_star, self.mu, cap)?,
            mols_l: c.mols_l,
            cosamp_max_iterations: c.cosamp_max_iterations,
        })
    }

    /// Runs one algorithm on one trial.
    pub fn run_trial(&self, trial: usize, point: GridPoint, alg: Algorithm) -> Result<TrialOutcome> {
        let inst = self.instance(trial, point.snr_db())?;
        let params = self.solver_params(point)?;
        Ok(self.score(&inst, trial, point, alg, &params))
    }

    fn run_point(&self, trial: usize, point: GridPoint, params: &SolverParams) -> Result<Vec<TrialOutcome>> {
        let inst = self.instance(trial, point.snr_db())?;
        Ok(self
            .config
            .algorithms
            .iter()
            .map(|&alg| self.score(&inst, trial, point, alg, params))
            .collect())
    }

    fn score(
        &self,
        inst: &TrialInstance,
        trial: usize,
        point: GridPoint,
        alg: Algorithm,
        params: &SolverParams,
    ) -> TrialOutcome {
        let c = &self.config;
        let x = &inst.spectrum.x;
        let (x_hat, iterations, stop_reason, error, support) =
            match recovery::run(alg, &self.matrix, &inst.measurement.y, params) {
                Ok(r) => (r.x_hat, r.iterations, r.stop_reason.to_string(), None, r.support.sorted()),
                Err(e) => (vec![0.0; c.n], 0, "Error".to_string(), Some(e.to_string()), Vec::new()),
            };
        let diff: Vec<f64> = x_hat.iter().zip(x).map(|(a, b)| a - b).collect();
        let err = norm2(&diff);
        let x_norm = norm2(x);
        let rel_error = if x_norm > 0.0 { err / x_norm } else { err };
        TrialOutcome {
            algorithm: alg,
            seed: c.base_seed,
            trial,
            k: c.k,
            m: c.m,
            n: c.n,
            grid: point.value(),
            snr_db: point.snr_db(),
            success: rel_error <= c.success_tolerance,
            exact_support: support == inst.spectrum.support.sorted(),
            rel_error,
            mse_contrib: err * err / c.n as f64,
            iterations,
            stop_reason,
            error,
        }
    }

    /// Runs every (grid point, trial, algorithm) on at most `threads`
    /// workers (all available when `None`).
    pub fn run(&self, threads: Option<usize>) -> Result<SweepOutput> {
        let grid = self.grid();
        let params = grid
            .iter()
            .map(|&p| self.solver_params(p))
            .collect::<Result<Vec<_>>>()?;
        let trials = self.config.trials;
        let work = || -> Result<Vec<Vec<TrialOutcome>>> {
            (0..grid.len() * trials)
                .into_par_iter()
                .map(|i| self.run_point(i % trials, grid[i / trials], &params[i / trials]))
                .collect()
        };
        let per_item = match threads {
            Some(t) => rayon::ThreadPoolBuilder::new()
                .num_threads(t.max(1))
                .build()
                .map_err(|e| HarnessError::ThreadPool(e.to_string()))?
                .install(work)?,
            None => work()?,
        };

        let algs = &self.config.algorithms;
        let mut outcomes = Vec::with_capacity(per_item.len() * algs.len());
        for g in 0..grid.len() {
            for a in 0..algs.len() {
                for t in 0..trials {
                    outcomes.push(per_item[g * trials + t][a].clone());
                }
            }
        }
        let mut rows = aggregate(&outcomes);
        rows.sort_by(|a, b| a.grid.total_cmp(&b.grid).then(a.algorithm.cmp(&b.algorithm)));
        Ok(SweepOutput { rows, outcomes })
    }
}

/// Runs an SNR sweep with all available threads.
pub fn sweep_snr(config: &ExperimentConfig) -> Result<Vec<MetricsRow>> {
    if config.kind != ExperimentKind::SnrSweep {
        return Err(HarnessError::InvalidConfig("expected an snr_sweep config".into()));
    }
    Ok(Experiment::prepare(config.clone())?.run(None)?.rows)
}

/// Runs an omega sweep over `omega_grid` with all available threads.
pub fn sweep_omega(config: &ExperimentConfig, omega_grid: &[f64]) -> Result<Vec<MetricsRow>> {
    let mut config = config.clone();
    config.kind = ExperimentKind::OmegaSweep;
    config.omega_grid = omega_grid.to_vec();
    Ok(Experiment::prepare(config)?.run(None)?.rows)
}

/// Groups outcomes by (grid, algorithm) in order of first appearance and
/// averages over trials in the order given.
pub fn aggregate(outcomes: &[TrialOutcome]) -> Vec<MetricsRow> {
    let mut keys: Vec<(u64, Algorithm)> = Vec::new();
    let mut acc: Vec<(usize, usize, usize, f64, f64)> = Vec::new();
    for o in outcomes {
        let key = (o.grid.to_bits(), o.algorithm);
        let i = match keys.iter().position(|k| *k == key) {
            Some(i) => i,
            None => {
                keys.push(key);
                acc.push((0, 0, 0, 0.0, 0.0));
                keys.len() - 1
            }
        };
        let a = &mut acc[i];
        a.0 += 1;
        a.1 += o.success as usize;
        a.2 += o.exact_support as usize;
        a.3 += o.mse_contrib;
        a.4 += o.iterations as f64;
    }
    keys.into_iter()
        .zip(acc)
        .map(|((grid, algorithm), (trials, successes, exact, mse, iters))| {
            let t = trials as f64;
            MetricsRow {
                grid: f64::from_bits(grid),
                algorithm,
                prob_recovery: successes as f64 / t,
                mse: mse / t,
                mean_iterations: iters / t,
                trials,
                exact_support_rate: exact as f64 / t,
            }
        })
        .collect()
}

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            fmt_real(r.grid),
            r.algorithm,
            fmt_real(r.prob_recovery),
            fmt_real(r.mse),
            fmt_real(r.mean_iterations),
            r.trials
        ));
    }
    out
}

/// Parses a CSV written by [`metrics_csv`].
pub fn parse_metrics_csv(text: &str) -> Result<Vec<MetricsRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(HarnessError::InvalidConfig(format!("expected CSV header `{CSV_HEADER}`")));
    }
    let real = |s: &str, line: usize| -> Result<f64> {
        match s {
            "inf" => Ok(f64::INFINITY),
            "-inf" => Ok(f64::NEG_INFINITY),
            _ => s
                .parse()
                .map_err(|_| HarnessError::InvalidConfig(format!("line {line}: `{s}` is not a number"))),
        }
    };
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let line = i + 2;
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 6 {
                return Err(HarnessError::InvalidConfig(format!("line {line}: expected 6 fields")));
            }
            Ok(MetricsRow {
                grid: real(f[0], line)?,
                algorithm: f[1]
                    .parse()
                    .map_err(|e: String| HarnessError::InvalidConfig(format!("line {line}: {e}")))?,
                prob_recovery: real(f[2], line)?,
                mse: real(f[3], line)?,
                mean_iterations: real(f[4], line)?,
                trials: f[5]
                    .parse()
                    .map_err(|_| HarnessError::InvalidConfig(format!("line {line}: bad trial count")))?,
                exact_support_rate: f64::NAN,
            })
        })
        .collect()
}

pub fn write_jsonl<W: Write>(outcomes: &[TrialOutcome], mut w: W) -> Result<()> {
    for o in outcomes {
        serde_json::to_writer(&mut w, o).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
