//! Acceptance criteria as data: each check returns a measured value, its
//! target and tolerance, and a pass flag.

use rhl_core::analytics::{
    criticality_determinant, product_vs_triple_ratio, LimitParams, RhoConvention, c_rho,
};
use rhl_core::kernels::product_kernel_constant;
use rhl_core::stats::loglog_slope;
use serde::Serialize;

use crate::config::{ExperimentConfig, Tolerances};
use crate::experiments::{
    crho_rows, cross_kernel_ratio, hawkes_bounds, hawkes_trend, kernel_sweep, laplace_run, shift_moduli,
    sve_run, sweep_decreasing, SveRun,
};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Criterion {
    pub id: String,
    pub measured: f64,
    pub expected: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub detail: String,
}

impl Criterion {
    fn new(id: &str, measured: f64, expected: f64, tolerance: f64, pass: bool, detail: String) -> Self {
        Self { id: id.to_string(), measured, expected, tolerance, pass, detail }
    }

    /// A criterion whose computation itself failed.
    pub fn errored(id: &str, err: impl std::fmt::Display) -> Self {
        Self::new(id, f64::NAN, f64::NAN, f64::NAN, false, format!("error: {err}"))
    }

    pub fn line(&self) -> String {
        format!(
            "{} {}: measured {:.6} expected {:.6} tol {:.3e} | {}",
            if self.pass { "PASS" } else { "FAIL" },
            self.id,
            self.measured,
            self.expected,
            self.tolerance,
            self.detail
        )
    }
}

/// Identifiers in report order.
pub const CRITERIA: [&str; 13] = [
    "crho_table",
    "crho_linear_range",
    "cross_kernel_asymptote",
    "product_vs_triple",
    "kernel_sweep",
    "shift_modulus",
    "sve_mean_covariance",
    "decorrelation_exponent",
    "increment_scaling",
    "riccati_laplace",
    "hawkes_moment_bounds",
    "hawkes_trend",
    "criticality_determinant",
];

fn or_error(id: &str, r: rhl_core::Result<Criterion>) -> Criterion {
    r.unwrap_or_else(|e| Criterion::errored(id, e))
}

pub fn crho_table(tol: &Tolerances) -> Criterion {
    let rows = crho_rows(&[0.25, 0.5, 0.75], RhoConvention::SqrtEll);
    let (worst, at) = rows
        .iter()
        .map(|r| ((r.c_rho - r.golden.unwrap_or(f64::NAN)).abs(), r))
        .fold((0.0f64, rows[0]), |(w, a), (d, r)| if d > w || d.is_nan() { (d, *r) } else { (w, a) });
    let n = rows.iter().filter(|r| r.golden.is_some()).count();
    Criterion::new(
        "crho_table",
        worst,
        0.0,
        tol.crho_table,
        n == 24 && worst <= tol.crho_table,
        format!("{n} cells, worst at ({}, {}, {}) = {:.5}", at.alpha1, at.alpha2, at.ell, at.c_rho),
    )
}

pub fn crho_linear_range(cfg: &ExperimentConfig) -> Criterion {
    let c = &cfg.crho;
    let p = &cfg.limit;
    let v = c.range_ells.map(|ell| c_rho(&LimitParams::unit(p.alpha1, p.alpha2, ell), RhoConvention::LinearInEll));
    let dev = (v[0] - c.range_expected[0]).abs().max((v[1] - c.range_expected[1]).abs());
    Criterion::new(
        "crho_linear_range",
        dev,
        0.0,
        cfg.tolerances.crho_range,
        dev <= cfg.tolerances.crho_range,
        format!("[{:.4}, {:.4}] vs [{}, {}]", v[0], v[1], c.range_expected[0], c.range_expected[1]),
    )
}

pub fn cross_kernel_asymptote(cfg: &ExperimentConfig) -> Criterion {
    let id = "cross_kernel_asymptote";
    or_error(id, (|| {
        let p = LimitParams { delta_tilde1: 1.0, delta_tilde2: 1.0, ..cfg.limit };
        let t = cfg.kernels.asymptote_t;
        let r = cross_kernel_ratio(&p, t, cfg.kernels.asymptote_cells)?;
        let want = product_kernel_constant(&p.k1()?, &p.k2()?);
        let rel = (r / want - 1.0).abs();
        Ok(Criterion::new(
            id,
            r,
            want,
            cfg.tolerances.cross_asymptote_rel,
            rel <= cfg.tolerances.cross_asymptote_rel,
            format!("t = {t}, relative error {rel:.2e}"),
        ))
    })())
}

pub fn product_vs_triple(cfg: &ExperimentConfig) -> Criterion {
    let id = "product_vs_triple";
    or_error(id, (|| {
        let p = LimitParams { delta_tilde1: 1.0, delta_tilde2: 1.0, ..cfg.limit };
        let t = cfg.kernels.asymptote_t;
        let r = product_vs_triple_ratio(&p, t, cfg.kernels.asymptote_cells)?;
        let tol = cfg.tolerances.triple_rel;
        let rel = (r.ratio / r.constant_stated - 1.0).abs();
        let distinct = (r.constant_stated - 1.0).abs() > tol;
        Ok(Criterion::new(
            id,
            r.ratio,
            r.constant_stated,
            tol,
            rel <= tol && distinct,
            format!(
                "t = {t}, relative error {rel:.3} against the stated constant; power-law constant {:.4} (error {:.2e})",
                r.constant_derived,
                (r.ratio / r.constant_derived - 1.0).abs()
            ),
        ))
    })())
}

pub fn kernel_sweep_check(cfg: &ExperimentConfig) -> Criterion {
    let id = "kernel_sweep";
    or_error(id, (|| {
        let rows = kernel_sweep(&cfg.base, &cfg.kernels.horizons, cfg.kernels.n_cells)?;
        let (first, last) = (rows[0], rows[rows.len() - 1]);
        let ratios = [
            first.l2_self_1 / last.l2_self_1,
            first.l2_self_2 / last.l2_self_2,
            first.l2_cross / last.l2_cross,
            first.l1_product / last.l1_product,
        ];
        let worst = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        let decreasing = sweep_decreasing(&rows);
        let cols: Vec<String> = rows
            .iter()
            .map(|r| format!("T={:.0e}: {:.4} {:.4} {:.4} {:.4}", r.horizon, r.l2_self_1, r.l2_self_2, r.l2_cross, r.l1_product))
            .collect();
        Ok(Criterion::new(
            id,
            worst,
            cfg.tolerances.sweep_factor,
            0.0,
            decreasing && worst >= cfg.tolerances.sweep_factor,
            format!(
                "decreasing {decreasing}; drop factors {:.2} {:.2} {:.2} {:.2}; {}",
                ratios[0],
                ratios[1],
                ratios[2],
                ratios[3],
                cols.join("; ")
            ),
        ))
    })())
}

pub fn shift_modulus_check(cfg: &ExperimentConfig) -> Criterion {
    let id = "shift_modulus";
    or_error(id, (|| {
        let k = &cfg.kernels;
        let d = shift_moduli(&cfg.base, k.shift_horizon, k.n_cells, k.shift_window, k.shift_points)?;
        let all = 0..d.h.len();
        let (s_self, _) = loglog_slope(&d.h, &d.self_modulus, all.clone())?;
        let (s_cross, _) = loglog_slope(&d.h, &d.cross_modulus, all)?;
        let (a1, a2) = (cfg.base.alpha1, cfg.base.alpha2);
        let (e_self, e_cross) = (2.0 * a1 - 1.0, 2.0 * (a1 + a2) - 1.0);
        let tol = &cfg.tolerances;
        let ok_self = (s_self - e_self).abs() <= tol.shift_self;
        let ok_cross = (s_cross - e_cross).abs() <= tol.shift_cross;
        Ok(Criterion::new(
            id,
            s_cross,
            e_cross,
            tol.shift_cross,
            ok_self && ok_cross,
            format!(
                "T = {:.0e}, h in [{}, {}]: g_T slope {s_self:.3} (expected {e_self:.2} ± {}), h_T slope {s_cross:.3} (expected {e_cross:.2} ± {})",
                k.shift_horizon, k.shift_window[0], k.shift_window[1], tol.shift_self, tol.shift_cross
            ),
        ))
    })())
}

fn index_of(run: &SveRun, t: f64) -> usize {
    (t / run.scheme.dt).round() as usize
}

pub fn sve_mean_covariance(cfg: &ExperimentConfig, run: &SveRun) -> Criterion {
    let z = cfg.tolerances.sve_z;
    let mut worst: f64 = 0.0;
    let mut worst_at = 0.0;
    for (k, r) in run.summary.rows.iter().enumerate() {
        for (m, b, se) in [(r.mean1, run.drifts.b1[k], r.se_mean1), (r.mean2, run.drifts.b2[k], r.se_mean2)] {
            let d = (m - b).abs();
            let zk = if se > 0.0 { d / se } else if d == 0.0 { 0.0 } else { f64::INFINITY };
            if zk > worst {
                worst = zk;
                worst_at = r.t;
            }
        }
    }
    let mut cov_worst: f64 = 0.0;
    let mut parts = Vec::new();
    for &t in &cfg.sve.cov_times {
        let k = index_of(run, t);
        let r = &run.summary.rows[k];
        let exact = run.cov_exact.values()[k];
        let zk = (r.cov - exact).abs() / r.se_cov;
        cov_worst = cov_worst.max(zk);
        parts.push(format!("t={t}: {:.5}±{:.5} vs {:.5}", r.cov, r.se_cov, exact));
    }
    Criterion::new(
        "sve_mean_covariance",
        worst.max(cov_worst),
        0.0,
        z,
        worst <= z && cov_worst <= z,
        format!(
            "{} paths; mean max |z| {worst:.2} at t = {worst_at:.4}; covariance max |z| {cov_worst:.2}; {}",
            run.summary.count,
            parts.join("; ")
        ),
    )
}

pub fn decorrelation_exponent(cfg: &ExperimentConfig, run: &SveRun) -> Criterion {
    let id = "decorrelation_exponent";
    let [lo, hi] = cfg.sve.rho_window;
    let (a, b) = (index_of(run, lo).max(1), index_of(run, hi) + 1);
    let t: Vec<f64> = run.summary.rows.iter().map(|r| r.t).collect();
    let rho: Vec<f64> = run.summary.rows.iter().map(|r| r.corr.unwrap_or(f64::NAN)).collect();
    let expected = cfg.limit.alpha1;
    let tol = cfg.tolerances.rho_slope;
    let exact = loglog_slope(&t, run.rho_exact.values(), a..b).map(|s| s.0).unwrap_or(f64::NAN);
    let k = index_of(run, lo);
    let context = format!(
        "window [{lo}, {hi}]; exact curve slope {exact:.3}; rho_hat({lo}) = {:.4} ± {:.4} vs exact {:.4}",
        rho[k],
        run.summary.rows[k].se_corr.unwrap_or(f64::NAN),
        run.rho_exact.values()[k]
    );
    match loglog_slope(&t, &rho, a..b) {
        Ok((s, se)) => Criterion::new(
            id,
            s,
            expected,
            tol,
            (s - expected).abs() <= tol,
            format!("sample slope {s:.3} (regression se {se:.3}); {context}"),
        ),
        Err(e) => Criterion::new(id, f64::NAN, expected, tol, false, format!("sample slope undefined ({e}); {context}")),
    }
}

pub fn increment_scaling(cfg: &ExperimentConfig, run: &SveRun) -> Criterion {
    let id = "increment_scaling";
    or_error(id, (|| {
        let levels = cfg.sve.lag_levels as usize;
        let e = &run.ensemble;
        let (c, _) = e.cross_increments.slope_over(levels)?;
        let (s, _) = e.self2_increments.slope_over(levels)?;
        let (m, _) = e.mart1_increments.slope_over(levels)?;
        let (c_all, _) = e.cross_increments.slope()?;
        let (a1, a2) = (cfg.limit.alpha1, cfg.limit.alpha2);
        let (ec, es) = (2.0 * (a1 + a2) - 1.0, 2.0 * a2 - 1.0);
        let tol = &cfg.tolerances;
        let pass = (c - ec).abs() <= tol.cross_increment && (s - es).abs() <= tol.self_increment && c > s;
        Ok(Criterion::new(
            id,
            c,
            ec,
            tol.cross_increment,
            pass,
            format!(
                "lags 1..{} steps: cross {c:.3}, self {s:.3} (expected {es:.2} ± {}), V1 martingale {m:.3}; cross over 1..{} steps {c_all:.3}",
                1usize << (levels - 1),
                tol.self_increment,
                1usize << (e.cross_increments.moments().0.len() - 1)
            ),
        ))
    })())
}

pub fn riccati_laplace(cfg: &ExperimentConfig) -> Criterion {
    let id = "riccati_laplace";
    or_error(id, (|| {
        let l = laplace_run(cfg)?;
        let z = (l.estimate - l.prediction).abs() / l.stderr;
        Ok(Criterion::new(
            id,
            l.estimate,
            l.prediction,
            cfg.tolerances.laplace_z * l.stderr,
            z <= cfg.tolerances.laplace_z,
            format!(
                "MC {:.5} ± {:.5} ({} paths), |z| {z:.2}; sign {:?} from the K = 0 oracle; kernel-average dual {:.5}; quadratic form without 1/2 {:.5}",
                l.estimate, l.stderr, cfg.riccati.n_paths, l.sign, l.prediction_kernel, l.prediction_literal
            ),
        ))
    })())
}

pub fn hawkes_moment_bounds(cfg: &ExperimentConfig) -> Criterion {
    let id = "hawkes_moment_bounds";
    or_error(id, (|| {
        let h = hawkes_bounds(cfg)?;
        let z = cfg.tolerances.hawkes_z;
        let slack = |c: &crate::experiments::CountStats| (c.mean - c.bound) / c.stderr;
        let (z1, z2) = (slack(&h.intensity1), slack(&h.intensity2));
        let zc = h.decoupled_corr.abs() / h.decoupled_corr_se;
        Ok(Criterion::new(
            id,
            z1.max(z2).max(zc),
            0.0,
            z,
            z1 <= z && z2 <= z && zc <= z,
            format!(
                "T = {}, {} reps, {:?}: mean 1 {:.4}±{:.4} <= {:.4}, mean 2 {:.4}±{:.4} <= {:.4}; decoupled count corr {:.3}±{:.3}",
                h.horizon,
                h.replications,
                cfg.hawkes.mode,
                h.intensity1.mean,
                h.intensity1.stderr,
                h.intensity1.bound,
                h.intensity2.mean,
                h.intensity2.stderr,
                h.intensity2.bound,
                h.decoupled_corr,
                h.decoupled_corr_se
            ),
        ))
    })())
}

pub fn hawkes_trend_check(cfg: &ExperimentConfig) -> Criterion {
    let id = "hawkes_trend";
    or_error(id, (|| {
        let tr = hawkes_trend(cfg)?;
        let gaps: Vec<f64> = tr.rows.iter().map(|r| (r.cov - tr.limit).abs()).collect();
        let monotone = gaps.windows(2).all(|w| w[1] < w[0]);
        let final_gap = gaps.last().copied().unwrap_or(f64::NAN) / tr.limit.abs();
        let rows: Vec<String> = tr
            .rows
            .iter()
            .map(|r| format!("T={}: {:.5}±{:.5} (exact {:.5})", r.horizon, r.cov, r.stderr, r.cov_prelimit))
            .collect();
        Ok(Criterion::new(
            id,
            final_gap,
            0.0,
            cfg.tolerances.trend_gap,
            monotone && final_gap < cfg.tolerances.trend_gap,
            format!(
                "t = {}, limit {:.6}, monotone {monotone}, {:?} mode, {} reps; {}",
                tr.t,
                tr.limit,
                cfg.hawkes.trend_mode,
                cfg.hawkes.trend_replications,
                rows.join("; ")
            ),
        ))
    })())
}

pub fn criticality() -> Criterion {
    let id = "criticality_determinant";
    or_error(id, (|| {
        let mut min_tri = f64::INFINITY;
        for i in 0..20 {
            for j in 0..20 {
                let a1 = i as f64 / 20.0 + 0.01;
                let a2 = 1.0 - 10f64.powf(-(j as f64) / 4.0 - 0.5);
                for b12 in [0.0, 0.1, 1.0, 10.0] {
                    min_tri = min_tri.min(criticality_determinant(a1, a2, b12, 0.0)?);
                }
            }
        }
        let a = 1.0 - 1e-2;
        let sym = criticality_determinant(a, a, 0.1, 0.1)?;
        Ok(Criterion::new(
            id,
            sym,
            -0.0099,
            0.0,
            min_tri > 0.0 && sym < 0.0,
            format!("min over triangular grid {min_tri:.3e}; symmetric a = 0.99, b = 0.1 gives {sym:.4e}"),
        ))
    })())
}

/// All criteria, running the SVE ensemble once.
pub fn run_all(cfg: &ExperimentConfig, mut report: impl FnMut(&Criterion)) -> Vec<Criterion> {
    let mut out = Vec::new();
    let mut push = |c: Criterion| {
        report(&c);
        out.push(c);
    };
    push(crho_table(&cfg.tolerances));
    push(crho_linear_range(cfg));
    push(cross_kernel_asymptote(cfg));
    push(product_vs_triple(cfg));
    push(kernel_sweep_check(cfg));
    push(shift_modulus_check(cfg));
    match sve_run(cfg) {
        Ok(run) => {
            push(sve_mean_covariance(cfg, &run));
            push(decorrelation_exponent(cfg, &run));
            push(increment_scaling(cfg, &run));
        }
        Err(e) => {
            for id in ["sve_mean_covariance", "decorrelation_exponent", "increment_scaling"] {
                push(Criterion::errored(id, &e));
            }
        }
    }
    push(riccati_laplace(cfg));
    push(hawkes_moment_bounds(cfg));
    push(hawkes_trend_check(cfg));
    push(criticality());
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_criteria_at_reference() {
        let cfg = ExperimentConfig::default();
        assert!(crho_table(&cfg.tolerances).pass);
        assert!(crho_linear_range(&cfg).pass);
        let c = criticality();
        assert!(c.pass);
        assert!((c.measured - (1e-4 - 1e-2)).abs() < 1e-15);
    }

    #[test]
    fn tightened_tolerance_fails() {
        let mut cfg = ExperimentConfig::default();
        cfg.tolerances.crho_table = 1e-9;
        cfg.tolerances.crho_range = 1e-4;
        assert!(!crho_table(&cfg.tolerances).pass);
        assert!(!crho_linear_range(&cfg).pass);
    }

    #[test]
    fn triple_check_reports_both_constants() {
        let mut cfg = ExperimentConfig::default();
        cfg.kernels.asymptote_cells = 4096;
        let c = product_vs_triple(&cfg);
        assert!((c.expected - 2.909963).abs() < 1e-5);
        assert!(c.detail.contains("1.321"));
        assert!(!c.pass);
    }

    #[test]
    fn errors_become_failed_records() {
        let c = Criterion::errored("x", "boom");
        assert!(!c.pass && c.measured.is_nan() && c.detail.contains("boom"));
        assert!(c.line().starts_with("FAIL x:"));
    }

    #[test]
    fn criteria_ids_are_unique() {
        let mut ids = CRITERIA.to_vec();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), 13);
    }
}
