//! Numerical experiments shared by the subcommands and the acceptance checks.

use rhl_core::analytics::{
    affine_laplace_prediction, c_rho, correlation_exact, covariance_exact, kernel_product_cells,
    laplace_functional_prediction, prelimit_covariance, prelimit_limit_covariance,
    reverse_time, riccati_volterra_solve, CovarianceDrift, LaplaceSign, LimitParams, RhoConvention,
    CRHO_TABLE, CRHO_TABLE_ELLS,
};
use rhl_core::grid::GridFunction;
use rhl_core::hawkes::{renormalized_replication, simulate_hawkes, HawkesModel, SimOptions};
use rhl_core::kernels::{
    l1_distance, l2_distance, l2_shift_modulus, limit_cross_kernel, limit_kernel, renormalized_cross_kernel,
    renormalized_self_kernel, MittagLefflerKernel, SelfDensity,
};
use rhl_core::params::{scale_parameters, BaseParams};
use rhl_core::rng::sharded_reduce;
use rhl_core::stats::{correlation_with_se, EnsembleAccumulator, EnsembleSummary};
use rhl_core::sve::{monte_carlo_laplace, sve_ensemble, SveDrifts, SveEnsemble, SveScheme};
use rhl_core::{Error, Result};
use serde::Serialize;

use crate::config::ExperimentConfig;

/// Lag levels gathered by the SVE driver; fits use a prefix of them.
pub const RECORDED_LAG_LEVELS: u32 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CrhoRow {
    pub alpha1: f64,
    pub alpha2: f64,
    pub ell: f64,
    pub c_rho: f64,
    /// Reference value, for table couplings under the square-root convention.
    pub golden: Option<f64>,
}

/// `C_ϱ` on the reference `(α₁, α₂)` pairs for each coupling in `ells`.
pub fn crho_rows(ells: &[f64], conv: RhoConvention) -> Vec<CrhoRow> {
    let mut rows = Vec::new();
    for (a1, a2, golden) in CRHO_TABLE {
        for &ell in ells {
            let g = CRHO_TABLE_ELLS.iter().position(|&e| e == ell).map(|i| golden[i]);
            rows.push(CrhoRow {
                alpha1: a1,
                alpha2: a2,
                ell,
                c_rho: c_rho(&LimitParams::unit(a1, a2, ell), conv),
                golden: if conv == RhoConvention::SqrtEll { g } else { None },
            });
        }
    }
    rows
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub horizon: f64,
    pub l2_self_1: f64,
    pub l2_self_2: f64,
    pub l2_cross: f64,
    pub l1_product: f64,
}

/// Distances of the renormalized kernels from their limits on `[0, 1]`.
pub fn kernel_sweep(base: &BaseParams, horizons: &[f64], n: usize) -> Result<Vec<SweepRow>> {
    let ds = 1.0 / n as f64;
    let k1 = limit_kernel(base.alpha1)?.grid(ds, n)?;
    let k2 = limit_kernel(base.alpha2)?.grid(ds, n)?;
    horizons
        .iter()
        .map(|&t| {
            let p = scale_parameters(base, t)?;
            let g1 = renormalized_self_kernel(base.alpha1, base.lambda1, t, ds, n, SelfDensity::Pareto)?;
            let g2 = renormalized_self_kernel(base.alpha2, base.lambda2, t, ds, n, SelfDensity::Pareto)?;
            let h = renormalized_cross_kernel(&p, ds, n, SelfDensity::Pareto)?;
            let l = limit_cross_kernel(&p, ds, n)?;
            Ok(SweepRow {
                horizon: t,
                l2_self_1: l2_distance(&g1, &k1, 1.0)?,
                l2_self_2: l2_distance(&g2, &k2, 1.0)?,
                l2_cross: l2_distance(&h, &l, 1.0)?,
                l1_product: l1_distance(&g1.product(&h)?, &k1.product(&l)?, 1.0)?,
            })
        })
        .collect()
}

/// Whether every column decreases strictly along the sweep.
pub fn sweep_decreasing(rows: &[SweepRow]) -> bool {
    rows.windows(2).all(|w| {
        let (a, b) = (w[0], w[1]);
        b.l2_self_1 < a.l2_self_1 && b.l2_self_2 < a.l2_self_2 && b.l2_cross < a.l2_cross && b.l1_product < a.l1_product
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShiftData {
    pub h: Vec<f64>,
    pub self_modulus: Vec<f64>,
    pub cross_modulus: Vec<f64>,
}

/// `∫(f(u+h)-f(u))²` of `g_T¹` and `h̃_T` at geometrically spaced shifts.
pub fn shift_moduli(base: &BaseParams, horizon: f64, n: usize, window: [f64; 2], points: usize) -> Result<ShiftData> {
    let ds = 1.0 / n as f64;
    let p = scale_parameters(base, horizon)?;
    let g = renormalized_self_kernel(base.alpha1, base.lambda1, horizon, ds, n, SelfDensity::Pareto)?;
    let c = renormalized_cross_kernel(&p, ds, n, SelfDensity::Pareto)?;
    let ratio = (window[1] / window[0]).ln() / (points - 1) as f64;
    let mut h: Vec<f64> = (0..points)
        .map(|i| ((window[0] * (ratio * i as f64).exp() / ds).round().max(1.0)) * ds)
        .collect();
    h.dedup();
    let self_modulus = h.iter().map(|&x| l2_shift_modulus(&g, x)).collect::<Result<_>>()?;
    let cross_modulus = h.iter().map(|&x| l2_shift_modulus(&c, x)).collect::<Result<_>>()?;
    Ok(ShiftData { h, self_modulus, cross_modulus })
}

/// `(K₁*K₂)(t)/t^{α₁+α₂-1}` from `n` cells on `[0, t]`, with the end node
/// extrapolated linearly from the last two cell averages.
pub fn cross_kernel_ratio(p: &LimitParams, t: f64, n: usize) -> Result<f64> {
    let c = kernel_product_cells(p, t / n as f64, n)?;
    let node = 1.5 * c[n - 1] - 0.5 * c[n - 2];
    Ok(node / t.powf(p.alpha1 + p.alpha2 - 1.0))
}

/// One SVE ensemble with its deterministic references.
#[derive(Debug, Clone)]
pub struct SveRun {
    pub scheme: SveScheme,
    pub drifts: SveDrifts,
    pub ensemble: SveEnsemble,
    pub summary: EnsembleSummary,
    pub cov_exact: GridFunction,
    pub rho_exact: GridFunction,
}

/// Scheme and drift profiles of the configured limit system.
pub fn sve_setup(cfg: &ExperimentConfig) -> Result<(SveScheme, SveDrifts)> {
    let p = &cfg.limit;
    let n = cfg.sve.n_steps;
    let dt = 1.0 / n as f64;
    let scheme = SveScheme::with_rule(p, dt, n, cfg.sve.weight_rule)?.with_clipping(cfg.sve.clipping);
    Ok((scheme, SveDrifts::profiles(p, dt, n)?))
}

pub fn sve_run(cfg: &ExperimentConfig) -> Result<SveRun> {
    let p = &cfg.limit;
    let n = cfg.sve.n_steps;
    let dt = 1.0 / n as f64;
    let (scheme, drifts) = sve_setup(cfg)?;
    let ensemble = sve_ensemble(&scheme, &drifts, cfg.sve.n_paths, cfg.seed, RECORDED_LAG_LEVELS)?;
    let summary = ensemble.moments.summary()?;
    Ok(SveRun {
        cov_exact: covariance_exact(p, dt, n, CovarianceDrift::Profile)?,
        rho_exact: correlation_exact(p, dt, n, CovarianceDrift::Profile)?,
        scheme,
        drifts,
        ensemble,
        summary,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LaplaceRun {
    pub estimate: f64,
    pub stderr: f64,
    /// Discrete affine dual `ψ = K*(-u + ψ²/2)` on the scheme weights.
    pub prediction: f64,
    /// Same dual with the exact cell averages of `K`.
    pub prediction_kernel: f64,
    /// `ψ + u = K*ψ²` as written, with the calibrated sign.
    pub prediction_literal: f64,
    pub sign: LaplaceSign,
}

pub fn laplace_run(cfg: &ExperimentConfig) -> Result<LaplaceRun> {
    let r = &cfg.riccati;
    let n = r.n_steps;
    let dt = 1.0 / n as f64;
    let k = MittagLefflerKernel::new(r.alpha, r.delta_tilde)?;
    let scheme = SveScheme::for_kernel(&k, dt, n, cfg.sve.weight_rule)?;
    let u = vec![r.u; n + 1];
    let b = vec![r.b; n + 1];
    let (estimate, stderr) = monte_carlo_laplace(&scheme, &b, &u, r.n_paths, cfg.seed)?;
    let sign = LaplaceSign::calibrate()?;
    let kg = k.grid(dt, n)?;
    let ug = GridFunction::sample(dt, n, |_| r.u)?;
    let bg = GridFunction::sample(dt, n, |_| r.b)?;
    let psi = reverse_time(&riccati_volterra_solve(&kg, &ug, 1e6)?)?;
    Ok(LaplaceRun {
        estimate,
        stderr,
        prediction: affine_laplace_prediction(&scheme.averages1(), &u, &b, dt)?,
        prediction_kernel: affine_laplace_prediction(&k.cell_averages(dt, n)?, &u, &b, dt)?,
        prediction_literal: laplace_functional_prediction(&psi, &bg, sign)?.value,
        sign,
    })
}

/// Affine Riccati solution `ψ(t)` on `[0, 1]` for the configured kernel.
pub fn riccati_curve(cfg: &ExperimentConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    let r = &cfg.riccati;
    let n = r.n_steps;
    let dt = 1.0 / n as f64;
    let k = MittagLefflerKernel::new(r.alpha, r.delta_tilde)?;
    let scheme = SveScheme::for_kernel(&k, dt, n, cfg.sve.weight_rule)?;
    let theta = rhl_core::analytics::riccati_affine_discrete(&scheme.averages1(), &vec![r.u; n + 1], dt)?;
    Ok(((0..=n).map(|k| k as f64 * dt).collect(), theta.iter().map(|t| t / dt).collect()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CountStats {
    pub mean: f64,
    pub stderr: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HawkesBounds {
    pub horizon: f64,
    pub replications: usize,
    pub intensity1: CountStats,
    pub intensity2: CountStats,
    /// Correlation of total counts across replications with `b_∞¹² = 0`.
    pub decoupled_corr: f64,
    pub decoupled_corr_se: f64,
}

/// Per-replication event counts `(N¹_T, N²_T)`.
pub fn hawkes_counts(model: &HawkesModel, opts: &SimOptions, seed: u64, reps: usize) -> Result<Vec<(usize, usize)>> {
    sharded_reduce(
        reps,
        Vec::new,
        |v: &mut Vec<(usize, usize)>, rep| {
            let ev = simulate_hawkes(model, seed, rep as u64, opts)?;
            v.push((ev.times1.len(), ev.times2.len()));
            Ok(())
        },
        |a, b| {
            a.extend(b);
            Ok(())
        },
    )
}

fn mean_se(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|y| (y - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

pub fn hawkes_bounds(cfg: &ExperimentConfig) -> Result<HawkesBounds> {
    let h = &cfg.hawkes;
    if h.replications < 3 {
        return Err(Error::TooFewSamples { needed: 3, got: h.replications });
    }
    let opts = SimOptions { mode: h.mode, event_cap: h.event_cap };
    let p = scale_parameters(&cfg.base, h.horizon)?;
    let counts = hawkes_counts(&HawkesModel::from_params(&p), &opts, cfg.seed, h.replications)?;
    let rate = |i: usize| -> Vec<f64> {
        counts.iter().map(|c| if i == 0 { c.0 } else { c.1 } as f64 / h.horizon).collect()
    };
    let (m1, s1) = mean_se(&rate(0));
    let (m2, s2) = mean_se(&rate(1));
    let free = BaseParams { b_inf_12: 0.0, ..cfg.base };
    let pf = scale_parameters(&free, h.horizon)?;
    let fc = hawkes_counts(&HawkesModel::from_params(&pf), &opts, cfg.seed, h.replications)?;
    let mut acc = EnsembleAccumulator::new(1.0, 1);
    for (a, b) in &fc {
        acc.accumulate(&[*a as f64], &[*b as f64])?;
    }
    let (r, se) = acc
        .central_moments(0)
        .and_then(|m| correlation_with_se(&m))
        .ok_or(Error::Domain("decoupled counts have zero variance".into()))?;
    Ok(HawkesBounds {
        horizon: h.horizon,
        replications: h.replications,
        intensity1: CountStats { mean: m1, stderr: s1, bound: p.mean_bound1() },
        intensity2: CountStats { mean: m2, stderr: s2, bound: p.mean_bound2() },
        decoupled_corr: r,
        decoupled_corr_se: se,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrendRow {
    pub horizon: f64,
    pub cov: f64,
    pub stderr: f64,
    /// Exact pre-limit covariance from the kernel quadrature.
    pub cov_prelimit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HawkesTrend {
    pub t: f64,
    pub limit: f64,
    pub rows: Vec<TrendRow>,
}

pub fn hawkes_trend(cfg: &ExperimentConfig) -> Result<HawkesTrend> {
    let h = &cfg.hawkes;
    let n = h.grid_cells;
    let k = (h.trend_time * n as f64).round() as usize;
    if (k as f64 - h.trend_time * n as f64).abs() > 1e-9 || k == 0 || k >= n {
        return Err(Error::GridMismatch(format!("trend_time {} is not a node of {n} cells", h.trend_time)));
    }
    let nq = h.trend_quadrature_cells;
    let ds = h.trend_time / nq as f64;
    let lp = LimitParams::from_base(&cfg.base, 1.0, 1.0)?;
    let limit = prelimit_limit_covariance(&lp, ds, nq)?.values()[nq];
    let opts = SimOptions { mode: h.trend_mode, event_cap: h.event_cap };
    let mut rows = Vec::new();
    for &t in &h.trend_horizons {
        let p = scale_parameters(&cfg.base, t)?;
        let acc = sharded_reduce(
            h.trend_replications,
            || EnsembleAccumulator::new(1.0 / n as f64, n + 1),
            |acc, rep| {
                let (_, v1, v2) = renormalized_replication(&p, &opts, cfg.seed, rep as u64, n)?;
                acc.accumulate(v1.values(), v2.values())
            },
            |a, b| a.merge(&b),
        )?;
        let row = acc.summary()?.rows[k];
        let exact = prelimit_covariance(&p, ds, nq, SelfDensity::Pareto)?.values()[nq];
        rows.push(TrendRow { horizon: t, cov: row.cov, stderr: row.se_cov, cov_prelimit: exact });
    }
    Ok(HawkesTrend { t: h.trend_time, limit, rows })
}

/// `(t, K₁, K₂, L₁₂)` on `n` cells of `[0, t_max]` for the regularity plot.
pub fn kernel_hierarchy(p: &LimitParams, t_max: f64, n: usize) -> Result<Vec<[f64; 4]>> {
    let dt = t_max / n as f64;
    let e1 = p.k1()?.evaluator()?;
    let e2 = p.k2()?.evaluator()?;
    let l = kernel_product_cells(p, dt, n)?;
    let mut rows = Vec::with_capacity(n);
    for j in 1..n {
        let t = j as f64 * dt;
        rows.push([t, e1.eval(t)?, e2.eval(t)?, p.ell_inf * 0.5 * (l[j - 1] + l[j])]);
    }
    Ok(rows)
}
