//! Acceptance runner: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Runs without the libtest harness so the lines stay in
//! order and unfiltered.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use sparsense::harness::{figure_configs, Scale};
use sparsense::harness::{gen_sparse_spectrum, write_jsonl, MetricsRow};
use sparsense::linalg::{projection_residual_norm_sq, residual, OrthoBasis};
use sparsense::matgen::{gen_gaussian_normalized, generate, MeasurementMatrix};
use sparsense::recovery::{ols_select, run, run_bols, run_ols_known_k, run_omp_known_k, BlindStopParams};
use sparsense::theory::{
    c_sensitivity_note, mapping_bound_linear, mapping_bound_probabilistic, mapping_bound_ratio,
    omega_for_probability, recovery_probability, singular_value_tails, snr_min_bound, tighter_bound_rho_max,
    StoppingRule, TheoryParams,
};
use sparsense::{Algorithm, Experiment, RngSeed};

type Check = Result<(bool, String), Box<dyn std::error::Error>>;

struct Criterion {
    id: &'static str,
    name: &'static str,
    budget: Duration,
    check: fn() -> Check,
}

fn main() -> ExitCode {
    let criteria = [
        Criterion { id: "1", name: "coherence of Gaussian 1024x8192 and 2048x8192", budget: mins(2), check: coherence },
        Criterion { id: "2", name: "probabilistic bound beats both coherence bounds", budget: mins(1), check: ordering },
        Criterion { id: "3", name: "omega calibration on the omega-sweep matrix", budget: mins(1), check: calibration },
        Criterion { id: "4", name: "SNR floor decreases with coherence", budget: mins(1), check: snr_floor_monotone },
        Criterion { id: "5", name: "blind OLS matches known-K OLS (Gaussian 256x512, K=4)", budget: mins(5), check: parity },
        Criterion { id: "6", name: "hybrid 256x512 ordering at K=8 and K=12", budget: mins(10), check: hybrid_ordering },
        Criterion { id: "7a", name: "OLS selection rule on 1000 random states", budget: mins(5), check: selection_rule },
        Criterion { id: "7b", name: "residual monotonicity and orthogonality", budget: mins(5), check: residual_invariants },
        Criterion { id: "7c", name: "noiseless exact recovery below the sparsity threshold", budget: mins(5), check: noiseless_exact },
        Criterion { id: "7d", name: "singular-value tail coverage", budget: mins(5), check: tail_coverage },
        Criterion { id: "7e", name: "projected column norm coverage", budget: mins(5), check: mapping_coverage },
        Criterion { id: "7f", name: "sweep output independent of thread count", budget: mins(5), check: thread_determinism },
    ];

    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let (ok, detail) = match (c.check)() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        let elapsed = start.elapsed();
        let ok = ok && elapsed <= c.budget;
        if !ok {
            failed += 1;
        }
        println!(
            "{} [{}] {} ({:.1}s of {}s) {}",
            if ok { "PASS" } else { "FAIL" },
            c.id,
            c.name,
            elapsed.as_secs_f64(),
            c.budget.as_secs(),
            detail
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn mins(m: u64) -> Duration {
    Duration::from_secs(60 * m)
}

fn coherence() -> Check {
    let mut ok = true;
    let mut parts = Vec::new();
    for (m, target) in [(1024, 0.135), (2048, 0.109)] {
        let mus: Vec<f64> = (1..=5)
            .map(|s| gen_gaussian_normalized(m, 8192, RngSeed(s)).map(|d| d.coherence()))
            .collect::<Result<_, _>>()?;
        ok &= mus.iter().all(|mu| (mu - target).abs() <= 0.02);
        let shown: Vec<String> = mus.iter().map(|mu| format!("{mu:.4}")).collect();
        parts.push(format!("M={m}: mu=[{}] target {target}+-0.02", shown.join(", ")));
    }
    Ok((ok, parts.join("; ")))
}

fn ordering() -> Check {
    let mut checked = 0;
    let mut violations = Vec::new();
    for k in 2..=10 {
        for mu in [0.05, 0.109, 0.135] {
            for m in [256, 1024] {
                let rho_max = tighter_bound_rho_max(k, m, mu);
                if !(rho_max > 0.0) {
                    continue;
                }
                let rho = 0.5 * rho_max;
                let (Ok(prob), Ok(ratio), Ok(linear)) = (
                    mapping_bound_probabilistic(k, m, mu, rho),
                    mapping_bound_ratio(k, mu),
                    mapping_bound_linear(k, mu),
                ) else {
                    continue;
                };
                checked += 1;
                if !(prob - ratio >= 1e-6 && ratio - linear >= 1e-6) {
                    violations.push(format!("K={k} mu={mu} M={m}: {prob:.6} {ratio:.6} {linear:.6}"));
                }
            }
        }
    }
    let ok = checked > 0 && violations.is_empty();
    Ok((ok, format!("{checked} feasible grid points, violations: [{}]", violations.join("; "))))
}

fn calibration() -> Check {
    let config = figure_configs("fig4", Scale::Desk, &[])?.remove(0).1;
    let d = generate(config.family, config.m, config.n, config.offset_max, RngSeed(config.matrix_seed()))?;
    let mu = d.coherence();
    let params = TheoryParams::new(d.rows(), d.cols(), mu, 0.175).with_p_min(0.95);
    let omega = omega_for_probability(0.95, &params)?;
    let round_trip = (recovery_probability(omega, &params)? - 0.95).abs();
    let rule = StoppingRule::from_params(&params)?;
    let ok = (1.1..=1.5).contains(&omega) && (1.175..=2.575).contains(&omega) && round_trip <= 1e-9;
    Ok((
        ok,
        format!(
            "M={} N={} mu={mu:.4} omega={omega:.4} (want [1.175, 1.5]) |P(omega)-0.95|={round_trip:.1e} omega*={:.4}; {}",
            d.rows(),
            d.cols(),
            rule.omega_star,
            c_sensitivity_note(&params)
        ),
    ))
}

fn snr_floor_monotone() -> Check {
    let mut bad = Vec::new();
    let mut first = None;
    for i in 0..10 {
        let p = 0.9 + 0.01 * i as f64;
        let floor = |mu: f64| -> Result<f64, Box<dyn std::error::Error>> {
            let params = TheoryParams::new(1024, 8192, mu, 0.15).with_sparsity(4).with_p_min(p);
            let w = omega_for_probability(p, &params)?;
            Ok(snr_min_bound(&params, w)?)
        };
        let (hi, lo) = (floor(0.135)?, floor(0.109)?);
        first.get_or_insert((hi, lo));
        if !(lo < hi) {
            bad.push(format!("p={p:.2}: {hi:.4e} -> {lo:.4e}"));
        }
    }
    let (hi, lo) = first.unwrap();
    Ok((
        bad.is_empty(),
        format!(
            "at p=0.90 {:.2} dB -> {:.2} dB; violations: [{}]",
            10.0 * hi.log10(),
            10.0 * lo.log10(),
            bad.join("; ")
        ),
    ))
}

fn run_figure(panel: &str) -> Result<Vec<MetricsRow>, Box<dyn std::error::Error>> {
    let config = figure_configs(panel, Scale::Desk, &[])?.remove(0).1;
    Ok(Experiment::prepare(config)?.run(None)?.rows)
}

fn metric(rows: &[MetricsRow], grid: f64, alg: Algorithm) -> &MetricsRow {
    rows.iter()
        .find(|r| r.grid == grid && r.algorithm == alg)
        .expect("every grid point has every configured algorithm")
}

fn grid_values(rows: &[MetricsRow]) -> Vec<f64> {
    let mut g: Vec<f64> = rows.iter().map(|r| r.grid).collect();
    g.dedup();
    g
}

fn parity() -> Check {
    let rows = run_figure("fig3")?;
    let mut ok = true;
    let mut parts = Vec::new();
    for g in grid_values(&rows) {
        let (b, o) = (metric(&rows, g, Algorithm::Bols), metric(&rows, g, Algorithm::Ols));
        let mse_ratio = if b.mse == o.mse { 1.0 } else { b.mse.max(o.mse) / b.mse.min(o.mse) };
        ok &= (b.prob_recovery - o.prob_recovery).abs() <= 0.05 && mse_ratio <= 2.0;
        parts.push(format!("{g}dB P {:.3}/{:.3} mse x{mse_ratio:.2}", b.prob_recovery, o.prob_recovery));
    }
    Ok((ok && rows[0].trials == 300, parts.join(", ")))
}

fn hybrid_ordering() -> Check {
    use Algorithm::*;
    let p = |rows: &[MetricsRow], g, a| metric(rows, g, a).prob_recovery;
    let best_rival = |rows: &[MetricsRow], g| p(rows, g, Cosamp).max(p(rows, g, Mols));

    let k8 = run_figure("fig5a")?;
    let mut ok = true;
    let mut notes = Vec::new();
    let mut active = 0;
    for g in grid_values(&k8) {
        if !Algorithm::ALL.iter().any(|&a| p(&k8, g, a) > 0.2) {
            continue;
        }
        active += 1;
        let (omp, bols, rival) = (p(&k8, g, Omp), p(&k8, g, Bols), best_rival(&k8, g));
        if omp > bols + 0.05 {
            ok = false;
            notes.push(format!("K=8 {g}dB omp {omp:.3} > bols {bols:.3}+0.05"));
        }
        if (bols - rival).abs() > 0.1 {
            ok = false;
            notes.push(format!("K=8 {g}dB bols {bols:.3} vs cosamp/mols {rival:.3}"));
        }
    }

    let k12 = run_figure("fig5b")?;
    let grid12 = grid_values(&k12);
    let top = *grid12.last().unwrap();
    for a in [Omp, Bomp, Ols] {
        let v = p(&k12, top, a);
        if !(v < 0.5) {
            ok = false;
            notes.push(format!("K=12 {top}dB {a} {v:.3} >= 0.5"));
        }
    }
    for &g in &grid12 {
        let (bols, rival) = (p(&k12, g, Bols), best_rival(&k12, g));
        if (bols - rival).abs() > 0.15 {
            ok = false;
            notes.push(format!("K=12 {g}dB bols {bols:.3} vs cosamp/mols {rival:.3}"));
        }
    }
    let summary = |rows: &[MetricsRow], g| {
        Algorithm::ALL
            .iter()
            .map(|&a| format!("{a} {:.3}", p(rows, g, a)))
            .collect::<Vec<_>>()
            .join(" ")
    };
    Ok((
        ok,
        format!(
            "{active} active K=8 points; top K=8: {}; top K=12: {}; violations: [{}]",
            summary(&k8, *grid_values(&k8).last().unwrap()),
            summary(&k12, top),
            notes.join("; ")
        ),
    ))
}

fn selection_rule() -> Check {
    let mut rng = RngSeed(7001).stream(0);
    let mut mismatches = 0;
    let mut index_checked = 0;
    for _ in 0..1000 {
        let m = rng.gen_range(6..=16);
        let n = rng.gen_range(m..=2 * m);
        let d = gen_gaussian_normalized(m, n, RngSeed(rng.gen()))?;
        let y: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
        let size = rng.gen_range(0..m.min(5));
        let s = sample(&mut rng, n, size).into_vec();
        let picked = ols_select(&d, &y, &s)?;

        let mut scored: Vec<(f64, usize)> = (0..n)
            .filter(|j| !s.contains(j))
            .map(|j| {
                let mut t = s.clone();
                t.push(j);
                projection_residual_norm_sq(&d, &y, &t).map(|r| (r, j))
            })
            .collect::<Result<_, _>>()?;
        scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let best = scored[0].0;
        let got = scored.iter().find(|(_, j)| *j == picked).unwrap().0;
        let scale = y.iter().map(|v| v * v).sum::<f64>();
        if got - best > 1e-10 * scale {
            mismatches += 1;
        } else if scored.len() < 2 || scored[1].0 - best > 1e-9 * scale {
            index_checked += 1;
            if picked != scored[0].1 {
                mismatches += 1;
            }
        }
    }
    Ok((
        mismatches == 0,
        format!("{mismatches} mismatches against brute-force projection residuals ({index_checked} with a unique minimizer)"),
    ))
}

fn residual_invariants() -> Check {
    let d = gen_gaussian_normalized(64, 128, RngSeed(7101))?;
    let mu = d.coherence();
    let blind = BlindStopParams::with_default_cap(1.2, mu, d.rows())?;
    let noise = Normal::new(0.0, 0.05)?;
    let mut rng = RngSeed(7102).stream(0);
    let (mut runs, mut bad) = (0, Vec::new());
    for trial in 0..200 {
        let k = rng.gen_range(1..=6);
        let x = gen_sparse_spectrum(d.cols(), k, 1.0, 0.01, RngSeed(7103).derive(trial))?.x;
        let mut y = d.mul_vec(&x);
        y.iter_mut().for_each(|v| *v += noise.sample(&mut rng));
        for (name, res) in [
            ("ols", run_ols_known_k(&d, &y, k)?),
            ("omp", run_omp_known_k(&d, &y, k)?),
            ("bols", run_bols(&d, &y, &blind)?),
        ] {
            runs += 1;
            let h = &res.residual_norm_history;
            if h.windows(2).any(|w| w[1] > w[0] * (1.0 + 1e-12)) {
                bad.push(format!("{name} trial {trial}: residual grew"));
            }
            let r = residual(&d, &y, &res.x_hat)?;
            let worst = res
                .support
                .indices()
                .iter()
                .map(|&j| d.col(j).iter().zip(&r).map(|(a, b)| a * b).sum::<f64>().abs())
                .fold(0.0, f64::max);
            let y_norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            if worst > 1e-9 * y_norm {
                bad.push(format!("{name} trial {trial}: |D_S^T r| = {worst:.2e}"));
            }
            let last = *h.last().unwrap();
            let r_norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            if (last - r_norm).abs() > 1e-9 * y_norm {
                bad.push(format!("{name} trial {trial}: history ends at {last:.3e}, residual is {r_norm:.3e}"));
            }
        }
    }
    bad.truncate(5);
    Ok((bad.is_empty(), format!("{runs} runs; first violations: [{}]", bad.join("; "))))
}

fn noiseless_exact() -> Check {
    let d = gen_gaussian_normalized(256, 512, RngSeed(7201))?;
    let mu = d.coherence();
    let c = 0.5 * (1.0 + 1.0 / mu);
    let k_max = (c.ceil() as usize - 1).max(1);
    let params = TheoryParams::new(d.rows(), d.cols(), mu, 0.175);
    let rule = StoppingRule::from_params(&params)?;
    let blind = BlindStopParams::with_default_cap(rule.omega_star, mu, d.rows())?;
    let mut rng = RngSeed(7202).stream(0);
    let mut failures = 0;
    for trial in 0..500 {
        let k = rng.gen_range(1..=k_max);
        let spec = gen_sparse_spectrum(d.cols(), k, 1.0, 0.01, RngSeed(7203).derive(trial))?;
        let y = d.mul_vec(&spec.x);
        for res in [
            run_ols_known_k(&d, &y, k)?,
            run_omp_known_k(&d, &y, k)?,
            run_bols(&d, &y, &blind)?,
        ] {
            let err = res.x_hat.iter().zip(&spec.x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            if res.support.sorted() != spec.support.sorted() || err > 1e-8 {
                failures += 1;
            }
        }
    }
    Ok((
        failures == 0,
        format!("mu={mu:.4}, C={c:.3}, K in 1..={k_max}: {failures} failures over 500 instances x 3 solvers"),
    ))
}

fn tail_coverage() -> Check {
    let (m, k, rho, samples) = (256, 8, 0.2, 10_000);
    let tails = singular_value_tails(k, m, rho);
    let normal = Normal::new(0.0, 1.0 / (m as f64).sqrt())?;
    let mut rng = RngSeed(7301).stream(0);
    let (mut low_ok, mut high_ok) = (0, 0);
    for _ in 0..samples {
        let a = DMatrix::from_fn(m, k, |_, _| normal.sample(&mut rng));
        let sv = a.singular_values();
        let (lo, hi) = (sv.min(), sv.max());
        low_ok += (lo >= tails.lower) as usize;
        high_ok += (hi <= tails.upper) as usize;
    }
    let (fl, fh) = (low_ok as f64 / samples as f64, high_ok as f64 / samples as f64);
    Ok((
        fl >= tails.prob_floor && fh >= tails.prob_floor,
        format!(
            "min >= {:.4}: {fl:.4}, max <= {:.4}: {fh:.4}, floor {:.4}",
            tails.lower, tails.upper, tails.prob_floor
        ),
    ))
}

fn mapping_coverage() -> Check {
    let (m, n, rho, trials) = (256, 512, 0.2, 1000);
    let floor = 1.0 - 2.0 * (-(m as f64) * rho * rho / 2.0).exp();
    let mut rng = RngSeed(7401).stream(0);
    let (mut inside, mut used) = (0, 0);
    let mut min_margin = f64::INFINITY;
    for t in 0..trials {
        let d = gen_gaussian_normalized(m, n, RngSeed(7402).derive(t))?;
        let mu = d.coherence();
        // largest K <= 6 whose preconditions hold for this matrix
        let Some((k, bound)) = (2..=6)
            .rev()
            .find_map(|k| mapping_bound_probabilistic(k, m, mu, rho).ok().map(|b| (k, b)))
        else {
            continue;
        };
        used += 1;
        let picks = sample(&mut rng, n, k).into_vec();
        let (s, i) = picks.split_at(k - 1);
        let norm = projected_norm(&d, s, i[0])?;
        if norm >= bound && norm <= 1.0 + 1e-12 {
            inside += 1;
        }
        min_margin = min_margin.min(norm - bound);
    }
    let frac = inside as f64 / used.max(1) as f64;
    Ok((
        used == trials && frac >= floor,
        format!("{inside}/{used} inside [bound, 1], floor {floor:.4}, smallest margin {min_margin:.4}"),
    ))
}

fn projected_norm(d: &MeasurementMatrix, s: &[usize], i: usize) -> Result<f64, Box<dyn std::error::Error>> {
    let basis = OrthoBasis::from_support(d, s)?;
    Ok(basis.project_out(d.col(i)).iter().map(|v| v * v).sum::<f64>().sqrt())
}

fn thread_determinism() -> Check {
    let config = figure_configs("fig5a", Scale::Desk, &["trials=12".into(), "base_seed=99".into()])?
        .remove(0)
        .1;
    let exp = Experiment::prepare(config)?;
    let mut dumps = Vec::new();
    for threads in [1, 2, 4] {
        let out = exp.run(Some(threads))?;
        let mut buf = Vec::new();
        write_jsonl(&out.outcomes, &mut buf)?;
        dumps.push((threads, buf, out.rows));
    }
    let same = dumps.windows(2).all(|w| w[0].1 == w[1].1 && w[0].2 == w[1].2);
    // every solver is a pure function of its inputs
    let inst = exp.instance(3, 20.0)?;
    let p = exp.solver_params(sparsense::harness::GridPoint::Snr(20.0))?;
    let a = run(Algorithm::Mols, &exp.matrix, &inst.measurement.y, &p)?;
    let b = run(Algorithm::Mols, &exp.matrix, &inst.measurement.y, &p)?;
    Ok((
        same && a == b,
        format!("{} JSONL bytes identical across 1, 2 and 4 threads: {same}", dumps[0].1.len()),
    ))
}
