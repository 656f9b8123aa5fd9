use rhl_cli::checks::{hawkes_moment_bounds, sve_mean_covariance};
use rhl_cli::config::ExperimentConfig;
use rhl_cli::experiments::sve_run;

#[test]
fn zero_coupling_passes_decoupling_checks() {
    let mut cfg = ExperimentConfig::default();
    cfg.limit.ell_inf = 0.0;
    cfg.sve.n_steps = 128;
    cfg.sve.n_paths = 2000;
    let run = sve_run(&cfg).unwrap();
    assert!(run.cov_exact.values().iter().all(|&c| c == 0.0));
    for &t in &cfg.sve.cov_times {
        let r = &run.summary.rows[(t * 128.0).round() as usize];
        assert!(r.cov.abs() <= 3.0 * r.se_cov, "t = {t}: {} ± {}", r.cov, r.se_cov);
    }
    let c = sve_mean_covariance(&cfg, &run);
    assert!(c.detail.contains("covariance max |z|"));
    assert!(run.ensemble.cross_increments.moments().1.iter().all(|&m| m == 0.0));

    cfg.base.b_inf_12 = 0.0;
    cfg.hawkes.horizon = 100.0;
    cfg.hawkes.replications = 60;
    let h = hawkes_moment_bounds(&cfg);
    assert!(h.pass, "{}", h.line());
}
