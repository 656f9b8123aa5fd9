//! Subcommands. Each writes its artifacts under `cfg.out` and returns whether
//! its own success condition holds; the binary maps that to the exit code.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use anyhow::{Context, Result};
use rhl_core::analytics::{c_rho, correlation_asymptote, RhoConvention, CRHO_TABLE_ELLS};
use rhl_core::hawkes::{renormalized_replication, simulate_hawkes, HawkesModel, SimOptions};
use rhl_core::params::scale_parameters;
use rhl_core::rng::sharded_reduce;
use rhl_core::stats::{loglog_slope, EnsembleAccumulator, EnsembleSummary, SlopeRecord};
use rhl_core::sve::simulate_sve_pair;
use serde::Serialize;
use serde_json::json;

use crate::checks::{self, Criterion};
use crate::config::ExperimentConfig;
use crate::experiments::{
    crho_rows, kernel_hierarchy, kernel_sweep, laplace_run, riccati_curve, sve_run, sve_setup, sweep_decreasing, SveRun,
    SweepRow,
};

fn create(cfg: &ExperimentConfig, name: &str) -> Result<BufWriter<File>> {
    fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    let path = cfg.out.join(name);
    let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_json(cfg: &ExperimentConfig, name: &str, value: &impl Serialize) -> Result<PathBuf> {
    let mut w = create(cfg, name)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(cfg.out.join(name))
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.12e}")).unwrap_or_default()
}

/// Provenance shared by every metadata document.
fn provenance(cfg: &ExperimentConfig, command: &str) -> serde_json::Value {
    json!({ "command": command, "seed": cfg.seed, "config_hash": cfg.hash(), "config": cfg })
}

fn write_summary(w: &mut impl Write, s: &EnsembleSummary, extra: &str) -> Result<()> {
    let tail = if extra.is_empty() { String::new() } else { format!(",{extra}") };
    writeln!(w, "t,mean1,mean2,var1,var2,cov,corr,se_mean1,se_mean2,se_var1,se_var2,se_cov,se_corr{}", if extra.is_empty() { "" } else { ",seed,T,approx_mode" })?;
    for r in &s.rows {
        writeln!(
            w,
            "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{}{tail}",
            r.t, r.mean1, r.mean2, r.var1, r.var2, r.cov, opt(r.corr), r.se_mean1, r.se_mean2, r.se_var1, r.se_var2, r.se_cov, opt(r.se_corr)
        )?;
    }
    Ok(())
}

/// `crho_table.csv` under the configured convention. Succeeds iff the
/// square-root table matches the reference values.
pub fn crho_table(cfg: &ExperimentConfig) -> Result<bool> {
    let mut w = create(cfg, "crho_table.csv")?;
    writeln!(w, "alpha1,alpha2,H1,H2,ell,convention,c_rho")?;
    for r in crho_rows(&cfg.crho.ells, cfg.convention) {
        writeln!(
            w,
            "{},{},{:.2},{:.2},{},{},{:.12}",
            r.alpha1,
            r.alpha2,
            r.alpha1 - 0.5,
            r.alpha2 - 0.5,
            r.ell,
            cfg.convention.label(),
            r.c_rho
        )?;
    }
    w.flush()?;
    let mut ok = true;
    for r in crho_rows(&CRHO_TABLE_ELLS, RhoConvention::SqrtEll) {
        let g = r.golden.unwrap_or(f64::NAN);
        if !((r.c_rho - g).abs() <= cfg.tolerances.crho_table) {
            ok = false;
            eprintln!("cell ({}, {}, {}): computed {:.5}, reference {g:.4}", r.alpha1, r.alpha2, r.ell, r.c_rho);
        }
    }
    Ok(ok)
}

fn write_sweep(cfg: &ExperimentConfig, rows: &[SweepRow]) -> Result<()> {
    let mut w = create(cfg, "convergence.csv")?;
    writeln!(w, "T,l2_self_1,l2_self_2,l2_cross,l1_product")?;
    for r in rows {
        writeln!(w, "{},{:.12e},{:.12e},{:.12e},{:.12e}", r.horizon, r.l2_self_1, r.l2_self_2, r.l2_cross, r.l1_product)?;
    }
    w.flush()?;
    Ok(())
}

/// `convergence.csv`; succeeds iff every column decreases strictly.
pub fn kernel_converge(cfg: &ExperimentConfig) -> Result<bool> {
    let rows = kernel_sweep(&cfg.base, &cfg.kernels.horizons, cfg.kernels.n_cells)?;
    write_sweep(cfg, &rows)?;
    let ok = sweep_decreasing(&rows);
    if !ok {
        eprintln!("kernel distances are not strictly decreasing along the sweep");
    }
    Ok(ok)
}

struct HawkesShard {
    counts: Vec<(u64, usize, usize)>,
    acc: EnsembleAccumulator,
}

/// Counts, renormalized-path summary and the first event stream at the
/// configured horizon.
pub fn simulate_hawkes_cmd(cfg: &ExperimentConfig) -> Result<bool> {
    let h = &cfg.hawkes;
    let p = scale_parameters(&cfg.base, h.horizon)?;
    let opts = SimOptions { mode: h.mode, event_cap: h.event_cap };
    let n = h.grid_cells;
    let shard = sharded_reduce(
        h.replications,
        || HawkesShard { counts: Vec::new(), acc: EnsembleAccumulator::new(1.0 / n as f64, n + 1) },
        |s, rep| {
            let (ev, v1, v2) = renormalized_replication(&p, &opts, cfg.seed, rep as u64, n)?;
            s.counts.push((rep as u64, ev.times1.len(), ev.times2.len()));
            s.acc.accumulate(v1.values(), v2.values())
        },
        |a, b| {
            a.counts.extend(b.counts);
            a.acc.merge(&b.acc)
        },
    )
    .context("Hawkes ensemble")?;
    let meta = format!("{},{},{}", cfg.seed, h.horizon, h.mode.is_approx());

    let mut w = create(cfg, "hawkes_counts.csv")?;
    writeln!(w, "replication,n1,n2,seed,T,approx_mode")?;
    let mut counts = shard.counts;
    counts.sort_unstable();
    for (rep, a, b) in &counts {
        writeln!(w, "{rep},{a},{b},{meta}")?;
    }
    w.flush()?;

    if h.replications >= 2 {
        let mut w = create(cfg, "hawkes_summary.csv")?;
        write_summary(&mut w, &shard.acc.summary()?, &meta)?;
        w.flush()?;
    }
    if h.replications >= 1 {
        let ev = simulate_hawkes(&HawkesModel::from_params(&p), cfg.seed, 0, &opts)?;
        let mut w = create(cfg, "hawkes_events_0.csv")?;
        ev.write_csv(&mut w)?;
        w.flush()?;
    }
    let mut m = provenance(cfg, "simulate-hawkes");
    m["T"] = json!(h.horizon);
    m["approx_mode"] = json!(h.mode.is_approx());
    m["mean_bound1"] = json!(p.mean_bound1());
    m["mean_bound2"] = json!(p.mean_bound2());
    write_json(cfg, "hawkes_meta.json", &m)?;
    Ok(true)
}

fn write_covariance(cfg: &ExperimentConfig, run: &SveRun) -> Result<()> {
    let mut w = create(cfg, "covariance.csv")?;
    writeln!(w, "t,cov,se_cov,cov_exact")?;
    for (k, r) in run.summary.rows.iter().enumerate() {
        writeln!(w, "{:.12e},{:.12e},{:.12e},{:.12e}", r.t, r.cov, r.se_cov, run.cov_exact.values()[k])?;
    }
    w.flush()?;
    Ok(())
}

/// Slope reports of the decorrelation exponent and increment moments.
pub fn sve_slopes(cfg: &ExperimentConfig, run: &SveRun) -> Vec<SlopeRecord> {
    let (a1, a2) = (cfg.limit.alpha1, cfg.limit.alpha2);
    let tol = &cfg.tolerances;
    let mut out = Vec::new();
    let t: Vec<f64> = run.summary.rows.iter().map(|r| r.t).collect();
    let rho: Vec<f64> = run.summary.rows.iter().map(|r| r.corr.unwrap_or(f64::NAN)).collect();
    let [lo, hi] = cfg.sve.rho_window;
    let dt = run.scheme.dt;
    let range = ((lo / dt).round() as usize).max(1)..(hi / dt).round() as usize + 1;
    if let Ok(fit) = loglog_slope(&t, &rho, range.clone()) {
        out.push(SlopeRecord::new("rho_hat", [lo, hi], fit, a1, tol.rho_slope));
    }
    if let Ok(fit) = loglog_slope(&t, run.rho_exact.values(), range) {
        out.push(SlopeRecord::new("rho_exact", [lo, hi], fit, a1, tol.rho_slope));
    }
    let levels = cfg.sve.lag_levels as usize;
    let window = [dt, dt * (1usize << (levels - 1)) as f64];
    let e = &run.ensemble;
    for (name, acc, expected, tol) in [
        ("cross_increment_q2", &e.cross_increments, 2.0 * (a1 + a2) - 1.0, tol.cross_increment),
        ("self2_increment_q2", &e.self2_increments, 2.0 * a2 - 1.0, tol.self_increment),
        ("martingale1_increment_q2", &e.mart1_increments, 2.0 * a1 - 1.0, tol.self_increment),
    ] {
        if let Ok(fit) = acc.slope_over(levels) {
            out.push(SlopeRecord::new(name, window, fit, expected, tol));
        }
    }
    out
}

/// Ensemble summary, exact covariance, raw paths and slope reports.
/// Raw paths, and with at least two paths the ensemble summary, exact
/// covariance and slope reports.
pub fn simulate_sve(cfg: &ExperimentConfig) -> Result<bool> {
    let (scheme, drifts) = sve_setup(cfg)?;
    let keep = if cfg.sve.n_paths < 2 { cfg.sve.n_paths } else { cfg.sve.write_paths.min(cfg.sve.n_paths) };
    for rep in 0..keep {
        let paths = simulate_sve_pair(&scheme, &drifts, cfg.seed, rep as u64)?;
        let mut w = create(cfg, &format!("sve_path_{rep}.csv"))?;
        paths.write_csv(&mut w)?;
        w.flush()?;
    }
    if cfg.sve.n_paths >= 2 {
        let run = sve_run(cfg).context("SVE ensemble")?;
        let mut w = create(cfg, "sve_summary.csv")?;
        write_summary(&mut w, &run.summary, "")?;
        w.flush()?;
        write_covariance(cfg, &run)?;
        write_json(cfg, "sve_slopes.json", &sve_slopes(cfg, &run))?;
    } else {
        eprintln!("fewer than two paths: ensemble summary skipped");
    }
    write_json(cfg, "sve_meta.json", &provenance(cfg, "simulate-sve"))?;
    Ok(true)
}

/// Monte Carlo Laplace functional against the affine prediction.
pub fn riccati_check(cfg: &ExperimentConfig) -> Result<bool> {
    let l = laplace_run(cfg)?;
    let z = (l.estimate - l.prediction).abs() / l.stderr;
    let (t, psi) = riccati_curve(cfg)?;
    let mut w = create(cfg, "riccati.csv")?;
    writeln!(w, "t,psi")?;
    for (a, b) in t.iter().zip(&psi) {
        writeln!(w, "{a:.12e},{b:.12e}")?;
    }
    w.flush()?;
    let mut m = provenance(cfg, "riccati-check");
    m["result"] = json!(l);
    m["z"] = json!(z);
    write_json(cfg, "riccati.json", &m)?;
    eprintln!("Laplace functional: MC {:.5} ± {:.5}, prediction {:.5}, |z| = {z:.2}", l.estimate, l.stderr, l.prediction);
    Ok(z <= cfg.tolerances.laplace_z)
}

/// Every acceptance criterion, written to `verify.json`.
pub fn verify(cfg: &ExperimentConfig) -> Result<(bool, Vec<Criterion>)> {
    let criteria = checks::run_all(cfg, |c| eprintln!("{}", c.line()));
    let all = criteria.iter().all(|c| c.pass);
    let report = json!({
        "seed": cfg.seed,
        "config_hash": cfg.hash(),
        "all_pass": all,
        "criteria": criteria,
    });
    write_json(cfg, "verify.json", &report)?;
    Ok((all, criteria))
}

/// Every CSV the figure component reads, with metadata sidecars.
pub fn report_data(cfg: &ExperimentConfig) -> Result<bool> {
    let p = &cfg.limit;
    let hier = kernel_hierarchy(p, 1.0, 4096)?;
    let mut w = create(cfg, "kernel_hierarchy.csv")?;
    writeln!(w, "t,K1,K2,L12")?;
    for [t, a, b, c] in &hier {
        writeln!(w, "{t:.12e},{a:.12e},{b:.12e},{c:.12e}")?;
    }
    w.flush()?;
    let mut m = provenance(cfg, "report-data");
    m["exponents"] = json!({
        "K1": p.alpha1 - 1.0,
        "K2": p.alpha2 - 1.0,
        "L12": p.alpha1 + p.alpha2 - 1.0,
    });
    write_json(cfg, "kernel_hierarchy_meta.json", &m)?;

    let rows = kernel_sweep(&cfg.base, &cfg.kernels.horizons, cfg.kernels.n_cells)?;
    write_sweep(cfg, &rows)?;

    let run = sve_run(cfg).context("SVE ensemble")?;
    write_covariance(cfg, &run)?;
    let mut w = create(cfg, "decorrelation.csv")?;
    writeln!(w, "t,rho_hat,se_rho,rho_exact,asymptote")?;
    for (k, r) in run.summary.rows.iter().enumerate().skip(1) {
        writeln!(
            w,
            "{:.12e},{},{},{:.12e},{:.12e}",
            r.t,
            opt(r.corr),
            opt(r.se_corr),
            run.rho_exact.values()[k],
            correlation_asymptote(p, r.t, cfg.convention)?
        )?;
    }
    w.flush()?;
    let mut m = provenance(cfg, "report-data");
    m["alpha1"] = json!(p.alpha1);
    m["c_rho"] = json!(c_rho(p, cfg.convention));
    m["convention"] = json!(cfg.convention.label());
    m["slopes"] = json!(sve_slopes(cfg, &run));
    write_json(cfg, "decorrelation_meta.json", &m)?;
    Ok(true)
}
