//! Acceptance report: one PASS/FAIL line per criterion at the reference
//! configuration, with the tolerances pinned in `rhl_verify::PINNED`.

use std::process::ExitCode;
use std::time::Instant;

use rhl_cli::checks::{self, Criterion};
use rhl_cli::config::ExperimentConfig;
use rhl_cli::experiments::sve_run;
use rhl_verify::PINNED;

fn timed(f: impl FnOnce() -> Criterion) -> (Criterion, f64) {
    let t0 = Instant::now();
    let c = f();
    (c, t0.elapsed().as_secs_f64())
}

fn main() -> ExitCode {
    let cfg = ExperimentConfig { tolerances: PINNED, ..ExperimentConfig::default() };
    let threads = std::env::var("RHL_THREADS").ok().and_then(|v| v.parse().ok());
    let results = rhl_core::rng::with_threads(threads, || {
        let mut out = vec![
            timed(|| checks::crho_table(&cfg.tolerances)),
            timed(|| checks::crho_linear_range(&cfg)),
            timed(|| checks::cross_kernel_asymptote(&cfg)),
            timed(|| checks::product_vs_triple(&cfg)),
            timed(|| checks::kernel_sweep_check(&cfg)),
            timed(|| checks::shift_modulus_check(&cfg)),
        ];
        let t0 = Instant::now();
        match sve_run(&cfg) {
            Ok(run) => {
                let shared = t0.elapsed().as_secs_f64();
                out.push(timed(|| checks::sve_mean_covariance(&cfg, &run)));
                out.push(timed(|| checks::decorrelation_exponent(&cfg, &run)));
                out.push(timed(|| checks::increment_scaling(&cfg, &run)));
                let n = out.len();
                out[n - 3].1 += shared;
            }
            Err(e) => {
                for id in ["sve_mean_covariance", "decorrelation_exponent", "increment_scaling"] {
                    out.push((Criterion::errored(id, &e), t0.elapsed().as_secs_f64()));
                }
            }
        }
        out.push(timed(|| checks::riccati_laplace(&cfg)));
        out.push(timed(|| checks::hawkes_moment_bounds(&cfg)));
        out.push(timed(|| checks::hawkes_trend_check(&cfg)));
        out.push(timed(checks::criticality));
        out
    });

    println!("acceptance at seed {} (config {})", cfg.seed, &cfg.hash()[..12]);
    for (c, secs) in &results {
        println!("{} [{secs:.1}s]", c.line());
    }
    let passed = results.iter().filter(|(c, _)| c.pass).count();
    println!("acceptance: {passed}/{} criteria pass", results.len());
    assert_eq!(results.len(), checks::CRITERIA.len());
    if passed == results.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
