#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use sparsense::harness::{
    self, bounds, figure_configs, figure_configs_in, metrics_csv, resolve, write_jsonl, Experiment, ExperimentConfig,
    ExperimentKind, HarnessError, Scale,
};
use sparsense::matgen::{self, read_matrix, write_matrix, write_matrix_csv, MatrixError, MatrixFamily, MeasurementMatrix};
use sparsense::recovery::{self, default_blind_cap, Algorithm, BlindStopParams, RecoveryError, SolverParams};
use sparsense::theory::{self, c_sensitivity_note, StoppingRule, TheoryError, TheoryParams};
use sparsense::RngSeed;

mod plot;

#[derive(Parser)]
#[command(name = "sparsense", version, about = "Blind sparse recovery for compressive spectrum sensing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a normalized measurement matrix.
    GenMatrix(GenMatrixArgs),
    /// Print the coherence of a matrix.
    Coherence(MatrixSource),
    /// Recover one sparse vector.
    Recover(RecoverArgs),
    /// Sweep a closed-form bound and print it as CSV.
    Bounds {
        #[command(subcommand)]
        bound: BoundsCommand,
    },
    /// Calibrate the blind threshold for a target recovery probability.
    InvertOmega(InvertArgs),
    /// Run a figure preset or a custom config.
    Experiment(ExperimentArgs),
    /// Draw an SVG line chart from a CSV written by this tool.
    Plot(PlotArgs),
}

#[derive(Args, Clone)]
struct MatrixSource {
    /// Read the matrix from a binary file instead of generating it.
    #[arg(long)]
    matrix: Option<PathBuf>,
    #[arg(long, default_value = "gaussian")]
    family: MatrixFamily,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = matgen::DEFAULT_OFFSET_MAX)]
    offset_max: f64,
    #[arg(long, env = "SPARSENSE_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct GenMatrixArgs {
    #[command(flatten)]
    source: MatrixSource,
    /// Binary output path.
    #[arg(long)]
    out: PathBuf,
    /// Also write the matrix as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct RecoverArgs {
    #[command(flatten)]
    source: MatrixSource,
    #[arg(long)]
    alg: Algorithm,
    /// Measurements, whitespace or comma separated. Without it a synthetic
    /// K-sparse instance is drawn from the seed.
    #[arg(long)]
    y: Option<PathBuf>,
    /// Sparsity: known K for non-blind solvers and of the synthetic instance.
    #[arg(long)]
    k: Option<usize>,
    /// SNR of the synthetic instance in dB; `inf` for noiseless.
    #[arg(long, default_value_t = f64::INFINITY)]
    snr: f64,
    #[arg(long, default_value_t = 0.95)]
    pmin: f64,
    #[arg(long, default_value_t = 0.175)]
    rho: f64,
    /// Use this omega instead of inverting the recovery probability.
    #[arg(long)]
    omega: Option<f64>,
    /// Reconstructible sparsity; defaults to (1 + 1/mu)/2.
    #[arg(long)]
    c: Option<f64>,
    /// Cap on blind iterations; defaults to M/2.
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long, default_value_t = 2)]
    mols_l: usize,
    #[arg(long, default_value_t = recovery::DEFAULT_COSAMP_MAX_ITERATIONS)]
    cosamp_max_iter: usize,
    #[arg(long, default_value_t = 1.0)]
    nonzero_mean: f64,
    #[arg(long, default_value_t = 0.01)]
    nonzero_var: f64,
    /// Also write the full result (including x_hat) as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct InvertArgs {
    #[command(flatten)]
    source: MatrixSource,
    /// Coherence; when absent it is computed from the matrix.
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long, default_value_t = 0.175)]
    rho: f64,
    #[arg(long, default_value_t = 0.95)]
    pmin: f64,
    #[arg(long)]
    c: Option<f64>,
}

#[derive(Args)]
struct KRange {
    #[arg(long, default_value_t = 1)]
    k_min: usize,
    #[arg(long, default_value_t = 10)]
    k_max: usize,
}

#[derive(Subcommand)]
enum BoundsCommand {
    /// Singular-value interval of an M x K Gaussian submatrix.
    Tails {
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 0.15)]
        rho: f64,
        #[command(flatten)]
        ks: KRange,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Probabilistic, ratio and linear lower bounds on projected column norms.
    Mapping {
        /// Repeat together with --m for several curves.
        #[arg(long, required = true)]
        mu: Vec<f64>,
        #[arg(long, required = true)]
        m: Vec<usize>,
        #[arg(long, default_value_t = 0.15)]
        rho: f64,
        #[command(flatten)]
        ks: KRange,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Upper end of the rho range where the probabilistic bound is tightest.
    RhoMax {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        mu: f64,
        #[command(flatten)]
        ks: KRange,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recovery probability as a function of omega.
    Probability {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        mu: f64,
        #[arg(long, default_value_t = 0.175)]
        rho: f64,
        #[arg(long)]
        c: Option<f64>,
        #[arg(long, default_value_t = 0.1)]
        omega_min: f64,
        #[arg(long, default_value_t = 3.0)]
        omega_max: f64,
        #[arg(long, default_value_t = 30)]
        steps: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Minimum per-component SNR over a grid of target probabilities.
    SnrMin {
        #[arg(long, required = true)]
        mu: Vec<f64>,
        #[arg(long, required = true)]
        m: Vec<usize>,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 0.15)]
        rho: f64,
        #[arg(long)]
        c: Option<f64>,
        #[arg(long, default_value_t = 0.90)]
        p_min: f64,
        #[arg(long, default_value_t = 0.99)]
        p_max: f64,
        #[arg(long, default_value_t = 0.01)]
        p_step: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ExperimentArgs {
    /// fig2a, fig2b, fig3 ... fig7, or `custom` together with --config.
    #[arg(long)]
    figure: String,
    /// For `custom`: a flat config. Otherwise: a presets file replacing the
    /// shipped one.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "desk")]
    scale: Scale,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads; all cores by default.
    #[arg(long)]
    threads: Option<usize>,
    /// Overrides base_seed.
    #[arg(long, env = "SPARSENSE_SEED")]
    seed: Option<u64>,
    /// Config override, `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long)]
    csv: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Metrics CSVs only: prob_recovery, mse or mean_iterations.
    #[arg(long, default_value = "prob_recovery")]
    metric: String,
    /// Wide CSVs only: keep columns whose name contains one of these.
    #[arg(long, value_delimiter = ',')]
    columns: Vec<String>,
    #[arg(long)]
    logy: bool,
    #[arg(long, default_value = "")]
    title: String,
    #[arg(long)]
    x_label: Option<String>,
    #[arg(long)]
    y_label: Option<String>,
}

/// Exit status 1: bad invocation or config. Exit status 2: the inputs are
/// well formed but the computation is infeasible or fails.
enum Failure {
    Usage(anyhow::Error),
    Domain(anyhow::Error),
}

type CmdResult = Result<(), Failure>;

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Usage(e.into())
}

fn domain(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Domain(e.into())
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Theory(_) | HarnessError::Recovery(_) | HarnessError::ZeroSignal => domain(e),
            _ => usage(e),
        }
    }
}

impl From<TheoryError> for Failure {
    fn from(e: TheoryError) -> Self {
        domain(e)
    }
}

impl From<RecoveryError> for Failure {
    fn from(e: RecoveryError) -> Self {
        match e {
            RecoveryError::InvalidParams(_) | RecoveryError::DimensionMismatch { .. } => usage(e),
            _ => domain(e),
        }
    }
}

impl From<MatrixError> for Failure {
    fn from(e: MatrixError) -> Self {
        usage(e)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::GenMatrix(a) => cmd_gen_matrix(a),
        Command::Coherence(a) => cmd_coherence(a),
        Command::Recover(a) => cmd_recover(a),
        Command::Bounds { bound } => cmd_bounds(bound),
        Command::InvertOmega(a) => cmd_invert_omega(a),
        Command::Experiment(a) => cmd_experiment(a),
        Command::Plot(a) => cmd_plot(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Domain(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn print_json(v: &Value) {
    print_text(&format!("{}\n", serde_json::to_string_pretty(v).expect("serializable")));
}

/// Writes to stdout, ignoring a closed pipe.
fn print_text(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> CmdResult {
    fs::write(path, contents)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(usage)
}

fn emit(out: Option<&Path>, text: &str) -> CmdResult {
    match out {
        Some(p) => write_file(p, text),
        None => {
            print_text(text);
            Ok(())
        }
    }
}

impl MatrixSource {
    fn dims(&self) -> Result<(usize, usize), Failure> {
        match (self.m, self.n) {
            (Some(m), Some(n)) => Ok((m, n)),
            _ => Err(usage(anyhow!("give --matrix, or --m and --n"))),
        }
    }

    fn load(&self) -> Result<MeasurementMatrix, Failure> {
        if let Some(path) = &self.matrix {
            let bytes = fs::read(path)
                .with_context(|| format!("reading {}", path.display()))
                .map_err(usage)?;
            return read_matrix(&mut bytes.as_slice())
                .with_context(|| format!("parsing {}", path.display()))
                .map_err(usage);
        }
        let (m, n) = self.dims()?;
        Ok(matgen::generate(self.family, m, n, self.offset_max, RngSeed(self.seed))?)
    }
}

fn cmd_gen_matrix(a: GenMatrixArgs) -> CmdResult {
    let (m, n) = a.source.dims()?;
    let d = matgen::generate(a.source.family, m, n, a.source.offset_max, RngSeed(a.source.seed))?;
    let mut buf = Vec::new();
    write_matrix(&d, &mut buf).map_err(usage)?;
    write_file(&a.out, buf)?;
    if let Some(csv) = &a.csv {
        let mut buf = Vec::new();
        write_matrix_csv(&d, &mut buf).map_err(usage)?;
        write_file(csv, buf)?;
    }
    print_json(&json!({
        "rows": m,
        "cols": n,
        "family": a.source.family.to_string(),
        "seed": a.source.seed,
        "coherence": d.coherence(),
        "out": a.out.display().to_string(),
    }));
    Ok(())
}

fn cmd_coherence(a: MatrixSource) -> CmdResult {
    let d = a.load()?;
    let mu = d.coherence();
    print_json(&json!({
        "rows": d.rows(),
        "cols": d.cols(),
        "mu": mu,
        "c_surrogate": theory::reconstructible_sparsity(mu),
    }));
    Ok(())
}

fn read_vector(path: &Path) -> Result<Vec<f64>, Failure> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(usage)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        for tok in line.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()) {
            out.push(
                tok.parse::<f64>()
                    .map_err(|_| usage(anyhow!("{}:{}: `{tok}` is not a number", path.display(), i + 1)))?,
            );
        }
    }
    Ok(out)
}

struct BlindSetup {
    omega: f64,
    omega_star: f64,
    rule: Option<StoppingRule>,
}

fn blind_setup(
    m: usize,
    n: usize,
    mu: f64,
    rho: f64,
    p_min: f64,
    c: Option<f64>,
    omega: Option<f64>,
) -> Result<BlindSetup, Failure> {
    let (omega, rule) = match omega {
        Some(w) => (w, None),
        None => {
            let mut params = TheoryParams::new(m, n, mu, rho).with_p_min(p_min);
            if let Some(c) = c {
                params = params.with_c(c);
            }
            let rule = StoppingRule::from_params(&params)?;
            if !rule.rho_in_range(rho) {
                eprintln!(
                    "warning: rho = {rho} lies outside the valid interval (0, {:.6}) = (0, (C-1) mu - sqrt(C/M))",
                    rule.rho_max
                );
            }
            (rule.omega, Some(rule))
        }
    };
    Ok(BlindSetup {
        omega,
        omega_star: omega - rho,
        rule,
    })
}

fn cmd_recover(a: RecoverArgs) -> CmdResult {
    let d = a.source.load()?;
    let (m, n) = (d.rows(), d.cols());
    let instance_seed = RngSeed(a.source.seed).derive(1);
    let (y, truth) = match &a.y {
        Some(path) => (read_vector(path)?, None),
        None => {
            let k = a
                .k
                .ok_or_else(|| usage(anyhow!("a synthetic instance needs --k (or pass --y)")))?;
            let s = harness::gen_sparse_spectrum(n, k, a.nonzero_mean, a.nonzero_var, instance_seed)?;
            let meas = harness::calibrate_noise(&d, &s.x, a.snr, instance_seed.derive(1))?;
            (meas.y, Some(s))
        }
    };
    if y.len() != m {
        return Err(usage(anyhow!("y has {} entries, the matrix has {m} rows", y.len())));
    }
    if !a.alg.is_blind() && a.k.is_none() {
        return Err(usage(anyhow!("--alg {} needs --k", a.alg)));
    }

    let mut meta = serde_json::Map::new();
    let blind = if a.alg.is_blind() {
        let mu = d.coherence();
        let setup = blind_setup(m, n, mu, a.rho, a.pmin, a.c, a.omega)?;
        let params = BlindStopParams::new(setup.omega_star, mu, a.max_iter.unwrap_or_else(|| default_blind_cap(m)))?;
        meta.insert("mu".into(), json!(mu));
        meta.insert("omega".into(), json!(setup.omega));
        meta.insert("omega_star".into(), json!(setup.omega_star));
        meta.insert("threshold".into(), json!(params.threshold()));
        if let Some(rule) = &setup.rule {
            meta.insert("c".into(), json!(rule.c));
        }
        params
    } else {
        BlindStopParams::new(0.0, 0.0, 1)?
    };
    let params = SolverParams {
        k: a.k.unwrap_or(0),
        blind,
        mols_l: a.mols_l,
        cosamp_max_iterations: a.cosamp_max_iter,
    };
    let res = recovery::run(a.alg, &d, &y, &params)?;

    let nonzeros: Vec<Value> = res
        .support
        .sorted()
        .into_iter()
        .map(|j| json!([j, res.x_hat[j]]))
        .collect();
    let mut out = json!({
        "algorithm": a.alg.to_string(),
        "M": m,
        "N": n,
        "support": res.support.sorted(),
        "x_hat_nonzeros": nonzeros,
        "iterations": res.iterations,
        "stop_reason": res.stop_reason.to_string(),
        "residual_norm": res.residual_norm_history.last().copied().unwrap_or(0.0),
    });
    let obj = out.as_object_mut().expect("object");
    obj.extend(meta);
    if let Some(s) = &truth {
        let diff: f64 = res.x_hat.iter().zip(&s.x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let norm: f64 = s.x.iter().map(|v| v * v).sum::<f64>().sqrt();
        obj.insert("true_support".into(), json!(s.support.sorted()));
        obj.insert("exact_support".into(), json!(res.support.sorted() == s.support.sorted()));
        obj.insert("rel_error".into(), json!(if norm > 0.0 { diff / norm } else { diff }));
    }
    print_json(&out);
    if let Some(path) = &a.out {
        let mut full = out.clone();
        full.as_object_mut()
            .expect("object")
            .insert("x_hat".into(), json!(res.x_hat));
        full.as_object_mut()
            .expect("object")
            .insert("residual_norm_history".into(), json!(res.residual_norm_history));
        write_file(path, serde_json::to_string_pretty(&full).expect("serializable"))?;
    }
    Ok(())
}

fn k_grid(ks: &KRange) -> Result<Vec<usize>, Failure> {
    if ks.k_min == 0 || ks.k_min > ks.k_max {
        return Err(usage(anyhow!("need 1 <= --k-min <= --k-max")));
    }
    Ok((ks.k_min..=ks.k_max).collect())
}

fn linspace_step(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>, Failure> {
    if !(step > 0.0) || !(hi >= lo) {
        return Err(usage(anyhow!("need a positive step and max >= min")));
    }
    let count = ((hi - lo) / step + 1e-9).floor() as usize;
    Ok((0..=count).map(|i| lo + i as f64 * step).collect())
}

fn curves(mu: &[f64], m: &[usize]) -> Result<Vec<(f64, usize)>, Failure> {
    if mu.len() != m.len() {
        return Err(usage(anyhow!("give --mu and --m the same number of times")));
    }
    Ok(mu.iter().copied().zip(m.iter().copied()).collect())
}

fn cmd_bounds(b: BoundsCommand) -> CmdResult {
    let (table, out) = match b {
        BoundsCommand::Tails { m, rho, ks, out } => (bounds::tails_table(m, rho, &k_grid(&ks)?), out),
        BoundsCommand::Mapping { mu, m, rho, ks, out } => {
            (bounds::mapping_bounds_table(&curves(&mu, &m)?, &k_grid(&ks)?, rho), out)
        }
        BoundsCommand::RhoMax { m, mu, ks, out } => (bounds::rho_max_table(m, mu, &k_grid(&ks)?), out),
        BoundsCommand::Probability {
            m,
            n,
            mu,
            rho,
            c,
            omega_min,
            omega_max,
            steps,
            out,
        } => {
            if steps == 0 || !(omega_max > omega_min) {
                return Err(usage(anyhow!("need --steps >= 1 and --omega-max > --omega-min")));
            }
            let grid: Vec<f64> = (0..=steps)
                .map(|i| omega_min + (omega_max - omega_min) * i as f64 / steps as f64)
                .collect();
            let mut params = TheoryParams::new(m, n, mu, rho);
            if let Some(c) = c {
                params = params.with_c(c);
            }
            (bounds::probability_table(&params, &grid)?, out)
        }
        BoundsCommand::SnrMin {
            mu,
            m,
            n,
            k,
            rho,
            c,
            p_min,
            p_max,
            p_step,
            out,
        } => {
            let grid = linspace_step(p_min, p_max, p_step)?;
            (bounds::snr_min_table(&curves(&mu, &m)?, n, k, rho, c, &grid), out)
        }
    };
    emit(out.as_deref(), &table.to_csv())
}

fn cmd_invert_omega(a: InvertArgs) -> CmdResult {
    let (m, n, mu) = match a.mu {
        Some(mu) => {
            let (m, n) = a.source.dims()?;
            (m, n, mu)
        }
        None => {
            let d = a.source.load()?;
            (d.rows(), d.cols(), d.coherence())
        }
    };
    let mut params = TheoryParams::new(m, n, mu, a.rho).with_p_min(a.pmin);
    if let Some(c) = a.c {
        params = params.with_c(c);
    }
    let rule = StoppingRule::from_params(&params)?;
    if !rule.rho_in_range(a.rho) {
        eprintln!(
            "warning: rho = {} lies outside the valid interval (0, {:.6}) = (0, (C-1) mu - sqrt(C/M))",
            a.rho, rule.rho_max
        );
    }
    print_json(&json!({
        "M": m,
        "N": n,
        "mu": mu,
        "rho": a.rho,
        "p_min": a.pmin,
        "omega": rule.omega,
        "omega_star": rule.omega_star,
        "Q": rule.q,
        "C": rule.c,
        "c_source": if a.c.is_some() { "given" } else { "surrogate (1 + 1/mu)/2" },
        "theta": rule.theta,
        "ceiling": rule.ceiling,
        "rho_max": rule.rho_max,
        "note": c_sensitivity_note(&params),
    }));
    Ok(())
}

fn load_panels(a: &ExperimentArgs) -> Result<Vec<(String, ExperimentConfig)>, Failure> {
    let mut overrides = a.overrides.clone();
    if let Some(seed) = a.seed {
        overrides.push(format!("base_seed={seed}"));
    }
    let read_doc = |path: &Path| -> Result<toml::Table, Failure> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))
            .map_err(usage)?;
        text.parse::<toml::Table>()
            .with_context(|| format!("parsing {}", path.display()))
            .map_err(usage)
    };
    if a.figure == "custom" {
        let path = a
            .config
            .as_ref()
            .ok_or_else(|| usage(anyhow!("--figure custom needs --config")))?;
        let cfg = resolve(&read_doc(path)?, a.scale, &overrides)?;
        return Ok(vec![("custom".into(), cfg)]);
    }
    Ok(match &a.config {
        Some(path) => figure_configs_in(&read_doc(path)?, &a.figure, a.scale, &overrides)?,
        None => figure_configs(&a.figure, a.scale, &overrides)?,
    })
}

fn short(v: f64) -> String {
    let s = format!("{v:.3}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn cmd_experiment(a: ExperimentArgs) -> CmdResult {
    let panels = load_panels(&a)?;
    fs::create_dir_all(&a.out)
        .with_context(|| format!("creating {}", a.out.display()))
        .map_err(usage)?;
    // prepare every panel first so that infeasible parameters abort before any trial
    let mut prepared = Vec::new();
    for (name, cfg) in panels {
        let exp = match cfg.kind {
            ExperimentKind::SnrSweep | ExperimentKind::OmegaSweep => Some(Experiment::prepare(cfg.clone()).map_err(
                |e| match Failure::from(e) {
                    Failure::Usage(e) => usage(e.context(name.clone())),
                    Failure::Domain(e) => domain(e.context(name.clone())),
                },
            )?),
            _ => None,
        };
        prepared.push((name, cfg, exp));
    }
    for (name, cfg, exp) in prepared {
        let path = |suffix: &str| a.out.join(format!("{name}{suffix}"));
        write_file(&path(".config.toml"), toml::to_string(&cfg).map_err(usage)?)?;
        match exp {
            None => run_bound_panel(&name, &cfg, &path)?,
            Some(exp) => run_monte_carlo_panel(&name, &cfg, &exp, a.threads, &path)?,
        }
    }
    Ok(())
}

fn run_bound_panel(name: &str, cfg: &ExperimentConfig, path: &dyn Fn(&str) -> PathBuf) -> CmdResult {
    let curves: Vec<(f64, usize)> = cfg.mu_list.iter().copied().zip(cfg.m_list.iter().copied()).collect();
    let (table, columns, y_label, log_y) = match cfg.kind {
        ExperimentKind::MappingBounds => (
            bounds::mapping_bounds_table(&curves, &cfg.k_grid, cfg.vartheta),
            Vec::new(),
            "lower bound on projected column norm",
            false,
        ),
        _ => (
            bounds::snr_min_table(&curves, cfg.n, cfg.k, cfg.vartheta, cfg.c, &cfg.p_grid),
            vec!["snr_min_db".to_string()],
            "SNR_min lower bound (dB)",
            false,
        ),
    };
    let csv = table.to_csv();
    write_file(&path(".csv"), &csv)?;
    let (series, x_label) = plot::series_from_csv(&csv, "", &columns).map_err(usage)?;
    let svg = plot::render_svg(
        &series,
        &plot::PlotSpec {
            title: cfg.title.clone(),
            x_label,
            y_label: y_label.into(),
            log_y,
        },
    )
    .map_err(domain)?;
    write_file(&path(".svg"), svg)?;
    for s in &series {
        let finite: Vec<String> = s.points.iter().filter(|p| p.1.is_finite()).map(|p| short(p.1)).collect();
        println!("{name} {}: {}", s.name, finite.join(" "));
    }
    Ok(())
}

fn run_monte_carlo_panel(
    name: &str,
    cfg: &ExperimentConfig,
    exp: &Experiment,
    threads: Option<usize>,
    path: &dyn Fn(&str) -> PathBuf,
) -> CmdResult {
    for w in &exp.warnings {
        eprintln!("warning: {name}: {w}");
    }
    let mut meta = json!({
        "panel": name,
        "family": cfg.family.to_string(),
        "M": cfg.m,
        "N": cfg.n,
        "K": cfg.k,
        "mu": exp.mu,
        "matrix_seed": cfg.matrix_seed(),
        "base_seed": cfg.base_seed,
        "blind_threshold_form": "omega_star * mu, shared by bols and bomp",
    });
    match &exp.calibration {
        Some(cal) => {
            println!(
                "{name}: mu = {:.6}, omega = {:.6}, omega* = {:.6}, threshold = {:.6}",
                exp.mu, cal.omega, cal.omega_star, cal.threshold
            );
            meta["calibration"] = serde_json::to_value(cal).expect("serializable");
            if cal.rule.is_some() {
                let mut params = TheoryParams::new(cfg.m, cfg.n, exp.mu, cfg.rho).with_p_min(cfg.p_min);
                if let Some(c) = cfg.c {
                    params = params.with_c(c);
                }
                let note = c_sensitivity_note(&params);
                println!("{name}: note: {note}");
                meta["c_sensitivity"] = json!(note);
            }
        }
        None => println!("{name}: mu = {:.6}", exp.mu),
    }
    write_file(
        &path(".meta.json"),
        serde_json::to_string_pretty(&meta).expect("serializable"),
    )?;

    let out = exp.run(threads)?;
    let csv = metrics_csv(&out.rows);
    write_file(&path(".csv"), &csv)?;
    let mut jsonl = Vec::new();
    write_jsonl(&out.outcomes, &mut jsonl)?;
    write_file(&path(".jsonl"), jsonl)?;

    let x_label = match cfg.kind {
        ExperimentKind::OmegaSweep => "omega".to_string(),
        _ => "SNR (dB)".to_string(),
    };
    for (metric, y_label, log_y) in [
        ("prob_recovery", "probability of recovery", false),
        ("mse", "MSE", true),
    ] {
        let (series, _) = plot::series_from_csv(&csv, metric, &[]).map_err(usage)?;
        let svg = plot::render_svg(
            &series,
            &plot::PlotSpec {
                title: cfg.title.clone(),
                x_label: x_label.clone(),
                y_label: y_label.into(),
                log_y,
            },
        );
        match svg {
            Ok(svg) => write_file(&path(&format!("_{metric}.svg")), svg)?,
            Err(e) => eprintln!("warning: {name}: no {metric} plot: {e}"),
        }
    }

    for alg in &cfg.algorithms {
        let rows: Vec<_> = out.rows.iter().filter(|r| r.algorithm == *alg).collect();
        let probs: Vec<String> = rows.iter().map(|r| short(r.prob_recovery)).collect();
        let iters = rows.iter().map(|r| r.mean_iterations).sum::<f64>() / rows.len() as f64;
        println!("{name} {alg}: prob_recovery {} | mean iterations {:.2}", probs.join(" "), iters);
    }
    Ok(())
}

fn cmd_plot(a: PlotArgs) -> CmdResult {
    let text = fs::read_to_string(&a.csv)
        .with_context(|| format!("reading {}", a.csv.display()))
        .map_err(usage)?;
    let (series, x_label) = plot::series_from_csv(&text, &a.metric, &a.columns).map_err(usage)?;
    let is_metrics = text.starts_with(harness::CSV_HEADER);
    let svg = plot::render_svg(
        &series,
        &plot::PlotSpec {
            title: a.title,
            x_label: a.x_label.unwrap_or(x_label),
            y_label: a.y_label.unwrap_or_else(|| if is_metrics { a.metric.clone() } else { String::new() }),
            log_y: a.logy,
        },
    )
    .map_err(domain)?;
    write_file(&a.out, svg)
}
