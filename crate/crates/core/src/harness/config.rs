//! Experiment configuration.
//!
//! Configs are TOML documents with flat `key = value` pairs. A figure preset
//! is a top-level table whose plain keys are shared and whose `desk` and
//! `paper` sub-tables override them per scale. Any key can be overridden
//! again from the command line with `key=value`, where the value is parsed
//! as a TOML value (`trials=50`, `snr_grid_db=[0, 10, inf]`,
//! `algorithms=["bols","ols"]`); a bare word that is not valid TOML is taken
//! as a string (`family=hybrid`).

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::matgen::{MatrixFamily, DEFAULT_OFFSET_MAX};
use crate::recovery::{Algorithm, DEFAULT_COSAMP_MAX_ITERATIONS};

use super::HarnessError;

/// Figure presets shipped with the crate.
pub const FIGURE_PRESETS: &str = include_str!("../../presets/figures.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Monte Carlo recovery over `snr_grid_db`.
    SnrSweep,
    /// Monte Carlo recovery over `omega_grid` at `omega_sweep_snr_db`.
    OmegaSweep,
    /// The three mapping-factor lower bounds over `k_grid`.
    MappingBounds,
    /// The SNR floor over `p_grid`.
    SnrMinBounds,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Desk,
    Paper,
}

impl std::str::FromStr for Scale {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "desk" => Ok(Scale::Desk),
            "paper" => Ok(Scale::Paper),
            other => Err(format!("unknown scale `{other}` (expected desk|paper)")),
        }
    }
}

impl Scale {
    pub fn name(self) -> &'static str {
        match self {
            Scale::Desk => "desk",
            Scale::Paper => "paper",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub title: String,

    pub family: MatrixFamily,
    pub m: usize,
    pub n: usize,
    /// Upper end of the uniform column offset of hybrid matrices.
    pub offset_max: f64,
    /// Seed of the measurement matrix; defaults to `base_seed`.
    pub matrix_seed: Option<u64>,

    pub k: usize,
    /// `inf` means noiseless.
    pub snr_grid_db: Vec<f64>,
    pub omega_grid: Vec<f64>,
    pub omega_sweep_snr_db: f64,

    pub algorithms: Vec<Algorithm>,
    pub mols_l: usize,
    pub cosamp_max_iterations: usize,
    /// Safety cap on blind iterations; defaults to `m / 2`.
    pub blind_max_iterations: Option<usize>,

    pub trials: usize,
    pub base_seed: u64,

    pub p_min: f64,
    /// Slack subtracted from omega in the blind threshold.
    pub rho: f64,
    /// Singular-value slack used by the bound sweeps.
    pub vartheta: f64,
    /// Replaces the `(1 + 1/mu) / 2` surrogate for the reconstructible sparsity.
    pub c: Option<f64>,
    /// Skips the probability inversion and uses this omega directly.
    pub omega: Option<f64>,

    pub success_tolerance: f64,
    pub nonzero_mean: f64,
    pub nonzero_var: f64,

    /// Bound sweeps: one curve per `(mu_list[i], m_list[i])`.
    pub mu_list: Vec<f64>,
    pub m_list: Vec<usize>,
    pub k_grid: Vec<usize>,
    pub p_grid: Vec<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            kind: ExperimentKind::SnrSweep,
            title: String::new(),
            family: MatrixFamily::Gaussian,
            m: 256,
            n: 512,
            offset_max: DEFAULT_OFFSET_MAX,
            matrix_seed: None,
            k: 4,
            snr_grid_db: (0..=6).map(|i| 5.0 * i as f64).collect(),
            omega_grid: (5..=30).map(|i| 0.1 * i as f64).collect(),
            omega_sweep_snr_db: 20.0,
            algorithms: vec![Algorithm::Bols, Algorithm::Ols],
            mols_l: 2,
            cosamp_max_iterations: DEFAULT_COSAMP_MAX_ITERATIONS,
            blind_max_iterations: None,
            trials: 1000,
            base_seed: 0,
            p_min: 0.95,
            rho: 0.175,
            vartheta: 0.15,
            c: None,
            omega: None,
            success_tolerance: 0.05,
            nonzero_mean: 1.0,
            nonzero_var: 0.01,
            mu_list: Vec::new(),
            m_list: Vec::new(),
            k_grid: Vec::new(),
            p_grid: Vec::new(),
        }
    }
}

impl ExperimentConfig {
    pub fn matrix_seed(&self) -> u64 {
        self.matrix_seed.unwrap_or(self.base_seed)
    }

    pub fn from_toml_str(s: &str) -> Result<Self, HarnessError> {
        let table: Table = s.parse().map_err(|e| HarnessError::InvalidConfig(format!("{e}")))?;
        Self::from_table(table)
    }

    pub fn from_table(table: Table) -> Result<Self, HarnessError> {
        let cfg: Self = Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| HarnessError::InvalidConfig(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: String| Err(HarnessError::InvalidConfig(msg));
        match self.kind {
            ExperimentKind::SnrSweep | ExperimentKind::OmegaSweep => {
                if self.trials == 0 {
                    return bad("trials must be at least 1".into());
                }
                if self.m == 0 || self.n == 0 || self.m > self.n {
                    return bad(format!("need 1 <= m <= n, got m = {}, n = {}", self.m, self.n));
                }
                if self.k > self.m {
                    return bad(format!("k = {} exceeds m = {}", self.k, self.m));
                }
                if self.algorithms.is_empty() {
                    return bad("algorithms must not be empty".into());
                }
                if !(self.success_tolerance > 0.0) {
                    return bad(format!("success_tolerance must be positive, got {}", self.success_tolerance));
                }
                if !(self.nonzero_var >= 0.0) || !self.nonzero_mean.is_finite() {
                    return bad("need a finite nonzero_mean and nonzero_var >= 0".into());
                }
                if self.mols_l == 0 {
                    return bad("mols_l must be at least 1".into());
                }
                if self.blind_max_iterations == Some(0) {
                    return bad("blind_max_iterations must be positive".into());
                }
                if self.kind == ExperimentKind::SnrSweep {
                    if self.snr_grid_db.is_empty() {
                        return bad("snr_grid_db must not be empty".into());
                    }
                    if let Some(v) = self.snr_grid_db.iter().find(|v| v.is_nan() || **v == f64::NEG_INFINITY) {
                        return bad(format!("invalid SNR grid value {v}"));
                    }
                } else {
                    if self.omega_grid.is_empty() {
                        return bad("omega_grid must not be empty".into());
                    }
                    if let Some(v) = self.omega_grid.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
                        return bad(format!("invalid omega grid value {v}"));
                    }
                    if self.omega_sweep_snr_db.is_nan() {
                        return bad("omega_sweep_snr_db is NaN".into());
                    }
                }
            }
            ExperimentKind::MappingBounds | ExperimentKind::SnrMinBounds => {
                if self.mu_list.is_empty() || self.mu_list.len() != self.m_list.len() {
                    return bad("mu_list and m_list must be nonempty and of equal length".into());
                }
                if self.kind == ExperimentKind::MappingBounds && self.k_grid.is_empty() {
                    return bad("k_grid must not be empty".into());
                }
                if self.kind == ExperimentKind::SnrMinBounds && self.p_grid.is_empty() {
                    return bad("p_grid must not be empty".into());
                }
            }
        }
        Ok(())
    }
}

/// Resolves `table` at `scale`: plain keys, then the `desk`/`paper`
/// sub-table on top. Other sub-tables are rejected.
pub fn flatten_scaled(table: &Table, scale: Scale) -> Result<Table, HarnessError> {
    let mut out = Table::new();
    for (key, value) in table {
        match (key.as_str(), value) {
            ("desk" | "paper", Value::Table(_)) => {}
            (_, Value::Table(_)) => {
                return Err(HarnessError::InvalidConfig(format!("unexpected section `{key}`")));
            }
            _ => {
                out.insert(key.clone(), value.clone());
            }
        }
    }
    if let Some(overlay) = table.get(scale.name()) {
        let Value::Table(overlay) = overlay else {
            return Err(HarnessError::InvalidConfig(format!("`{}` must be a section", scale.name())));
        };
        for (key, value) in overlay {
            out.insert(key.clone(), value.clone());
        }
    }
    Ok(out)
}

/// Parses `key=value` and inserts it into `table`.
pub fn apply_override(table: &mut Table, assignment: &str) -> Result<(), HarnessError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| HarnessError::InvalidConfig(format!("override `{assignment}` is not key=value")))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(HarnessError::InvalidConfig(format!("override `{assignment}` has an empty key")));
    }
    let raw = raw.trim();
    let value = match format!("v = {raw}").parse::<Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => Value::String(raw.to_string()),
    };
    table.insert(key.to_string(), value);
    Ok(())
}

fn presets() -> Table {
    FIGURE_PRESETS.parse().expect("shipped presets are valid TOML")
}

/// Names of the shipped presets, in file order.
pub fn preset_names() -> Vec<String> {
    presets().keys().cloned().collect()
}

/// The preset tables making up `figure` in the shipped presets.
pub fn figure_panels(figure: &str) -> Result<Vec<(String, Table)>, HarnessError> {
    figure_panels_in(&presets(), figure)
}

/// The tables making up `figure` in `doc`: the table of that name, or
/// every `figure` + one letter table (`fig7` -> `fig7a`, `fig7b`).
pub fn figure_panels_in(doc: &Table, figure: &str) -> Result<Vec<(String, Table)>, HarnessError> {
    if let Some(Value::Table(t)) = doc.get(figure) {
        return Ok(vec![(figure.to_string(), t.clone())]);
    }
    let mut panels: Vec<(String, Table)> = doc
        .iter()
        .filter(|(name, _)| {
            name.strip_prefix(figure)
                .is_some_and(|rest| rest.len() == 1 && rest.chars().all(|c| c.is_ascii_lowercase()))
        })
        .filter_map(|(name, v)| match v {
            Value::Table(t) => Some((name.clone(), t.clone())),
            _ => None,
        })
        .collect();
    if panels.is_empty() {
        let names: Vec<&str> = doc.keys().map(String::as_str).collect();
        return Err(HarnessError::InvalidConfig(format!(
            "unknown figure `{figure}` (available: {})",
            names.join(", ")
        )));
    }
    panels.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(panels)
}

/// Builds the configs of `figure` from the shipped presets at `scale`,
/// with `overrides` applied to every panel.
pub fn figure_configs(
    figure: &str,
    scale: Scale,
    overrides: &[String],
) -> Result<Vec<(String, ExperimentConfig)>, HarnessError> {
    figure_configs_in(&presets(), figure, scale, overrides)
}

/// [`figure_configs`] over a caller-supplied presets document.
pub fn figure_configs_in(
    doc: &Table,
    figure: &str,
    scale: Scale,
    overrides: &[String],
) -> Result<Vec<(String, ExperimentConfig)>, HarnessError> {
    figure_panels_in(doc, figure)?
        .into_iter()
        .map(|(name, table)| {
            let cfg = resolve(&table, scale, overrides).map_err(|e| match e {
                HarnessError::InvalidConfig(msg) => HarnessError::InvalidConfig(format!("{name}: {msg}")),
                other => other,
            })?;
            Ok((name, cfg))
        })
        .collect()
}

/// One flat config table at `scale` with `overrides` applied.
pub fn resolve(table: &Table, scale: Scale, overrides: &[String]) -> Result<ExperimentConfig, HarnessError> {
    let mut flat = flatten_scaled(table, scale)?;
    for o in overrides {
        apply_override(&mut flat, o)?;
    }
    ExperimentConfig::from_table(flat)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        ExperimentConfig::default().validate().unwrap();
        let cfg = ExperimentConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.trials, 1000);
        assert_eq!(cfg.nonzero_var, 0.01);
    }

    #[test]
    fn parses_inf_and_integers_in_float_lists() {
        let cfg = ExperimentConfig::from_toml_str("snr_grid_db = [0, 12.5, inf]\nalgorithms = [\"omp\"]").unwrap();
        assert_eq!(cfg.snr_grid_db, vec![0.0, 12.5, f64::INFINITY]);
        assert_eq!(cfg.algorithms, vec![Algorithm::Omp]);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(ExperimentConfig::from_toml_str("trails = 3").is_err());
        assert!(ExperimentConfig::from_toml_str("trials = 0").is_err());
        assert!(ExperimentConfig::from_toml_str("snr_grid_db = []").is_err());
        assert!(ExperimentConfig::from_toml_str("success_tolerance = 0").is_err());
        assert!(ExperimentConfig::from_toml_str("algorithms = [\"lasso\"]").is_err());
        assert!(ExperimentConfig::from_toml_str("k = 300").is_err());
        assert!(ExperimentConfig::from_toml_str("snr_grid_db = [nan]").is_err());
    }

    #[test]
    fn overrides() {
        let mut t = Table::new();
        apply_override(&mut t, "trials=7").unwrap();
        apply_override(&mut t, "family=hybrid").unwrap();
        apply_override(&mut t, "snr_grid_db = [1, inf]").unwrap();
        let cfg = ExperimentConfig::from_table(t).unwrap();
        assert_eq!(cfg.trials, 7);
        assert_eq!(cfg.family, MatrixFamily::Hybrid);
        assert_eq!(cfg.snr_grid_db, vec![1.0, f64::INFINITY]);
        assert!(apply_override(&mut Table::new(), "noequals").is_err());
        assert!(apply_override(&mut Table::new(), "=3").is_err());
    }

    #[test]
    fn scale_overlay() {
        let t: Table = "m = 1\ntrials = 5\n[desk]\ntrials = 2\n[paper]\ntrials = 9".parse().unwrap();
        assert_eq!(flatten_scaled(&t, Scale::Desk).unwrap()["trials"].as_integer(), Some(2));
        assert_eq!(flatten_scaled(&t, Scale::Paper).unwrap()["trials"].as_integer(), Some(9));
        let t: Table = "[other]\nx = 1".parse().unwrap();
        assert!(flatten_scaled(&t, Scale::Desk).is_err());
    }

    #[test]
    fn every_preset_resolves_at_both_scales() {
        for figure in ["fig2a", "fig2b", "fig3", "fig4", "fig5", "fig6", "fig7"] {
            for scale in [Scale::Desk, Scale::Paper] {
                let cfgs = figure_configs(figure, scale, &[]).unwrap();
                assert!(!cfgs.is_empty(), "{figure}");
            }
        }
        assert_eq!(figure_configs("fig7", Scale::Desk, &[]).unwrap().len(), 2);
        assert!(figure_panels("fig9").is_err());
    }

    #[test]
    fn desk_fig3_matches_documented_shape() {
        let (_, cfg) = figure_configs("fig3", Scale::Desk, &[]).unwrap().remove(0);
        assert_eq!((cfg.m, cfg.n, cfg.k, cfg.trials), (256, 512, 4, 300));
        assert_eq!(cfg.family, MatrixFamily::Gaussian);
        assert_eq!(cfg.snr_grid_db, vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0]);
    }
}
