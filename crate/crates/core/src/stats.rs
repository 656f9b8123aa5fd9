//! Streaming Monte-Carlo moments, correlation curves and log-log slope fits.
//!
//! The accumulator keeps, per grid point, the shifted power sums
//! `S_pq = Σ (x - K₁)^p (y - K₂)^q` for `p + q ≤ 4`, where the shift `K` is the
//! first sample seen. Accumulators with different shifts are merged by exact
//! binomial re-centering, so shard-and-merge reductions reproduce a single
//! pass up to compensated-summation rounding.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};

/// Neumaier compensated sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &NeumaierSum) {
        self.add(other.sum);
        self.add(other.comp);
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Compensated sum of a slice.
pub fn compensated_sum(xs: &[f64]) -> f64 {
    let mut s = NeumaierSum::new();
    for &x in xs {
        s.add(x);
    }
    s.value()
}

/// Index pairs `(p, q)` with `p + q ≤ 4`.
const POWERS: [(usize, usize); 15] = [
    (0, 0),
    (1, 0),
    (0, 1),
    (2, 0),
    (1, 1),
    (0, 2),
    (3, 0),
    (2, 1),
    (1, 2),
    (0, 3),
    (4, 0),
    (3, 1),
    (2, 2),
    (1, 3),
    (0, 4),
];
const NPOW: usize = POWERS.len();

fn pow_index(p: usize, q: usize) -> usize {
    let d = p + q;
    d * (d + 1) / 2 + q
}

const BINOM: [[f64; 5]; 5] = [
    [1.0, 0.0, 0.0, 0.0, 0.0],
    [1.0, 1.0, 0.0, 0.0, 0.0],
    [1.0, 2.0, 1.0, 0.0, 0.0],
    [1.0, 3.0, 3.0, 1.0, 0.0],
    [1.0, 4.0, 6.0, 4.0, 1.0],
];

/// Re-express shifted power sums around a shift moved by `(d1, d2)`:
/// `x - K' = (x - K) + d` with `d = K - K'`.
fn recenter(s: &[f64; NPOW], d1: f64, d2: f64) -> [f64; NPOW] {
    let mut out = [0.0; NPOW];
    let pw = |d: f64, k: usize| d.powi(k as i32);
    for &(p, q) in POWERS.iter() {
        let mut acc = NeumaierSum::new();
        for i in 0..=p {
            for j in 0..=q {
                acc.add(BINOM[p][i] * BINOM[q][j] * pw(d1, p - i) * pw(d2, q - j) * s[pow_index(i, j)]);
            }
        }
        out[pow_index(p, q)] = acc.value();
    }
    out
}

/// Moments of one grid point.
#[derive(Debug, Clone, Copy, PartialEq)]
struct PointSums {
    shift: (f64, f64),
    sums: [NeumaierSum; NPOW],
}

impl PointSums {
    fn values(&self) -> [f64; NPOW] {
        let mut v = [0.0; NPOW];
        for (k, s) in self.sums.iter().enumerate() {
            v[k] = s.value();
        }
        v
    }
}

/// Streaming per-grid-point moments of a pair of path ensembles.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleAccumulator {
    dt: f64,
    n_points: usize,
    count: usize,
    points: Vec<PointSums>,
}

/// Central moments at one grid point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CentralMoments {
    pub count: usize,
    pub mean: (f64, f64),
    /// `μ_pq` indexed like the internal power table.
    mu: [f64; NPOW],
}

impl CentralMoments {
    pub fn mu(&self, p: usize, q: usize) -> f64 {
        self.mu[pow_index(p, q)]
    }
}

impl EnsembleAccumulator {
    pub fn new(dt: f64, n_points: usize) -> Self {
        Self { dt, n_points, count: 0, points: Vec::new() }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Add one path pair sampled on the accumulator grid.
    pub fn accumulate(&mut self, x: &[f64], y: &[f64]) -> Result<()> {
        if x.len() != self.n_points || y.len() != self.n_points {
            return Err(Error::GridMismatch(format!(
                "expected {} points, got {} and {}",
                self.n_points,
                x.len(),
                y.len()
            )));
        }
        if self.count == 0 {
            self.points = x
                .iter()
                .zip(y)
                .map(|(&a, &b)| PointSums { shift: (a, b), sums: [NeumaierSum::new(); NPOW] })
                .collect();
        }
        for (pt, (&a, &b)) in self.points.iter_mut().zip(x.iter().zip(y)) {
            let u = a - pt.shift.0;
            let v = b - pt.shift.1;
            let (u2, v2) = (u * u, v * v);
            let terms = [
                1.0,
                u,
                v,
                u2,
                u * v,
                v2,
                u2 * u,
                u2 * v,
                u * v2,
                v2 * v,
                u2 * u2,
                u2 * u * v,
                u2 * v2,
                u * v2 * v,
                v2 * v2,
            ];
            for (s, t) in pt.sums.iter_mut().zip(terms) {
                s.add(t);
            }
        }
        self.count += 1;
        Ok(())
    }

    /// Combine with another accumulator over the same grid.
    pub fn merge(&mut self, other: &EnsembleAccumulator) -> Result<()> {
        if other.n_points != self.n_points || other.dt != self.dt {
            return Err(Error::GridMismatch("accumulator grids differ".into()));
        }
        if other.count == 0 {
            return Ok(());
        }
        if self.count == 0 {
            *self = other.clone();
            return Ok(());
        }
        for (a, b) in self.points.iter_mut().zip(&other.points) {
            let moved = recenter(&b.values(), b.shift.0 - a.shift.0, b.shift.1 - a.shift.1);
            for (s, m) in a.sums.iter_mut().zip(moved) {
                s.add(m);
            }
        }
        self.count += other.count;
        Ok(())
    }

    /// Central moments at grid index `k`.
    pub fn central_moments(&self, k: usize) -> Option<CentralMoments> {
        if self.count == 0 || k >= self.n_points {
            return None;
        }
        let pt = &self.points[k];
        let raw = pt.values();
        let n = self.count as f64;
        let d1 = raw[pow_index(1, 0)] / n;
        let d2 = raw[pow_index(0, 1)] / n;
        let centered = recenter(&raw, -d1, -d2);
        let mut mu = [0.0; NPOW];
        for i in 0..NPOW {
            mu[i] = centered[i] / n;
        }
        mu[pow_index(1, 0)] = 0.0;
        mu[pow_index(0, 1)] = 0.0;
        mu[pow_index(2, 0)] = mu[pow_index(2, 0)].max(0.0);
        mu[pow_index(0, 2)] = mu[pow_index(0, 2)].max(0.0);
        Some(CentralMoments { count: self.count, mean: (pt.shift.0 + d1, pt.shift.1 + d2), mu })
    }

    /// Means, unbiased (co)variances, correlation and their standard errors.
    pub fn summary(&self) -> Result<EnsembleSummary> {
        if self.count < 2 {
            return Err(Error::TooFewSamples { needed: 2, got: self.count });
        }
        let n = self.count as f64;
        let bessel = n / (n - 1.0);
        let mut out = EnsembleSummary { dt: self.dt, count: self.count, rows: Vec::with_capacity(self.n_points) };
        for k in 0..self.n_points {
            let m = self.central_moments(k).expect("non-empty accumulator");
            let (m20, m02, m11) = (m.mu(2, 0), m.mu(0, 2), m.mu(1, 1));
            let corr = correlation_with_se(&m);
            out.rows.push(SummaryRow {
                t: k as f64 * self.dt,
                mean1: m.mean.0,
                mean2: m.mean.1,
                var1: bessel * m20,
                var2: bessel * m02,
                cov: bessel * m11,
                corr: corr.map(|c| c.0),
                se_mean1: (bessel * m20 / n).sqrt(),
                se_mean2: (bessel * m02 / n).sqrt(),
                se_var1: ((m.mu(4, 0) - m20 * m20).max(0.0) / n).sqrt(),
                se_var2: ((m.mu(0, 4) - m02 * m02).max(0.0) / n).sqrt(),
                se_cov: ((m.mu(2, 2) - m11 * m11).max(0.0) / n).sqrt(),
                se_corr: corr.map(|c| c.1),
            });
        }
        Ok(out)
    }
}

/// Sample correlation and its delta-method standard error, `None` when a
/// variance vanishes.
pub fn correlation_with_se(m: &CentralMoments) -> Option<(f64, f64)> {
    let (m20, m02, m11) = (m.mu(2, 0), m.mu(0, 2), m.mu(1, 1));
    if !(m20 > 0.0 && m02 > 0.0) {
        return None;
    }
    let r = (m11 / (m20.sqrt() * m02.sqrt())).clamp(-1.0, 1.0);
    let n = m.count as f64;
    let a = m.mu(4, 0) / (4.0 * m20 * m20) + m.mu(0, 4) / (4.0 * m02 * m02) + m.mu(2, 2) / (2.0 * m20 * m02);
    let b = m.mu(2, 2) / (m20 * m02);
    let c = m.mu(3, 1) / (m20.powf(1.5) * m02.sqrt()) + m.mu(1, 3) / (m02.powf(1.5) * m20.sqrt());
    let var = (r * r * a + b - r * c) / n;
    Some((r, var.max(0.0).sqrt()))
}

/// One grid point of an ensemble summary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SummaryRow {
    pub t: f64,
    pub mean1: f64,
    pub mean2: f64,
    pub var1: f64,
    pub var2: f64,
    pub cov: f64,
    pub corr: Option<f64>,
    pub se_mean1: f64,
    pub se_mean2: f64,
    pub se_var1: f64,
    pub se_var2: f64,
    pub se_cov: f64,
    pub se_corr: Option<f64>,
}

/// Finalized moments of an ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSummary {
    pub dt: f64,
    pub count: usize,
    pub rows: Vec<SummaryRow>,
}

/// Correlation estimate per grid point; `None` marks a zero-variance point.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationCurve {
    pub dt: f64,
    pub values: Vec<Option<f64>>,
    pub stderr: Vec<Option<f64>>,
}

/// Pointwise correlation `Ĉov/√(V̂ar₁V̂ar₂)` with delta-method standard errors.
pub fn correlation_curve(acc: &EnsembleAccumulator) -> Result<CorrelationCurve> {
    if acc.count() < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: acc.count() });
    }
    let mut values = Vec::with_capacity(acc.n_points());
    let mut stderr = Vec::with_capacity(acc.n_points());
    for k in 0..acc.n_points() {
        let m = acc.central_moments(k).expect("non-empty accumulator");
        match correlation_with_se(&m) {
            Some((r, se)) => {
                values.push(Some(r));
                stderr.push(Some(se));
            }
            None => {
                values.push(None);
                stderr.push(None);
            }
        }
    }
    Ok(CorrelationCurve { dt: acc.dt(), values, stderr })
}

/// Bootstrap standard error of the correlation curve, resampling whole shards
/// (independent sub-ensembles) with replacement.
pub fn bootstrap_correlation_se(
    shards: &[EnsembleAccumulator],
    resamples: usize,
    seed: u64,
) -> Result<Vec<Option<f64>>> {
    if shards.len() < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: shards.len() });
    }
    let n_points = shards[0].n_points();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sums = vec![(NeumaierSum::new(), NeumaierSum::new(), 0usize); n_points];
    for _ in 0..resamples {
        let mut acc = EnsembleAccumulator::new(shards[0].dt(), n_points);
        for _ in 0..shards.len() {
            acc.merge(&shards[rng.random_range(0..shards.len())])?;
        }
        let curve = correlation_curve(&acc)?;
        for (s, v) in sums.iter_mut().zip(curve.values) {
            if let Some(r) = v {
                s.0.add(r);
                s.1.add(r * r);
                s.2 += 1;
            }
        }
    }
    Ok(sums
        .into_iter()
        .map(|(s1, s2, c)| {
            if c < 2 {
                return None;
            }
            let n = c as f64;
            let mean = s1.value() / n;
            Some(((s2.value() / n - mean * mean).max(0.0) * n / (n - 1.0)).sqrt())
        })
        .collect())
}

/// Least-squares fit of `log y` against `log x` over `window` with the
/// regression standard error of the slope.
pub fn loglog_slope(x: &[f64], y: &[f64], window: std::ops::Range<usize>) -> Result<(f64, f64)> {
    if x.len() != y.len() || window.end > x.len() {
        return Err(Error::GridMismatch("slope window exceeds data".into()));
    }
    let len = window.len();
    if len < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: len });
    }
    let mut lx = Vec::with_capacity(len);
    let mut ly = Vec::with_capacity(len);
    for i in window {
        if !(x[i] > 0.0) {
            return Err(Error::NonPositive { index: i, value: x[i] });
        }
        if !(y[i] > 0.0) {
            return Err(Error::NonPositive { index: i, value: y[i] });
        }
        lx.push(x[i].ln());
        ly.push(y[i].ln());
    }
    Ok(linear_fit(&lx, &ly))
}

/// Ordinary least-squares slope and its standard error.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = compensated_sum(x) / n;
    let my = compensated_sum(y) / n;
    let mut sxx = NeumaierSum::new();
    let mut sxy = NeumaierSum::new();
    for (a, b) in x.iter().zip(y) {
        sxx.add((a - mx) * (a - mx));
        sxy.add((a - mx) * (b - my));
    }
    let slope = sxy.value() / sxx.value();
    if x.len() < 3 {
        return (slope, 0.0);
    }
    let mut ssr = NeumaierSum::new();
    for (a, b) in x.iter().zip(y) {
        let r = b - my - slope * (a - mx);
        ssr.add(r * r);
    }
    let se = (ssr.value() / (n - 2.0) / sxx.value()).sqrt();
    (slope, se)
}

/// A fitted exponent together with its acceptance test.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeRecord {
    pub quantity: String,
    pub window: [f64; 2],
    pub slope: f64,
    pub stderr: f64,
    pub expected: f64,
    pub pass: bool,
}

impl SlopeRecord {
    pub fn new(quantity: &str, window: [f64; 2], fit: (f64, f64), expected: f64, tolerance: f64) -> Self {
        Self {
            quantity: quantity.to_string(),
            window,
            slope: fit.0,
            stderr: fit.1,
            expected,
            pass: (fit.0 - expected).abs() <= tolerance,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn neumaier_recovers_cancelled_terms() {
        let mut s = NeumaierSum::new();
        for x in [1.0, 1e100, 1.0, -1e100] {
            s.add(x);
        }
        assert_eq!(s.value(), 2.0);
    }

    #[test]
    fn constant_pair_has_zero_variance() {
        let mut acc = EnsembleAccumulator::new(0.5, 3);
        for _ in 0..10 {
            acc.accumulate(&[1.5, 2.0, -3.0], &[0.25, 0.0, 7.0]).unwrap();
        }
        let s = acc.summary().unwrap();
        for (row, (c1, c2)) in s.rows.iter().zip([(1.5, 0.25), (2.0, 0.0), (-3.0, 7.0)]) {
            assert_eq!(row.mean1, c1);
            assert_eq!(row.mean2, c2);
            assert_eq!(row.var1, 0.0);
            assert_eq!(row.var2, 0.0);
            assert!(row.corr.is_none());
        }
        let curve = correlation_curve(&acc).unwrap();
        assert!(curve.values.iter().all(|v| v.is_none()));
    }

    #[test]
    fn identical_slots_give_unit_correlation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut acc = EnsembleAccumulator::new(1.0, 4);
        for _ in 0..200 {
            let x: Vec<f64> = (0..4).map(|_| rng.random::<f64>() * 3.0).collect();
            acc.accumulate(&x, &x).unwrap();
        }
        let curve = correlation_curve(&acc).unwrap();
        for v in curve.values {
            assert!((v.unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gaussian_pairs_recover_correlation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rho: f64 = 0.5;
        let mut acc = EnsembleAccumulator::new(1.0, 1);
        for _ in 0..10_000 {
            let z1: f64 = StandardNormal.sample(&mut rng);
            let z2: f64 = StandardNormal.sample(&mut rng);
            let y = rho * z1 + (1.0 - rho * rho).sqrt() * z2;
            acc.accumulate(&[2.0 + z1], &[-1.0 + 3.0 * y]).unwrap();
        }
        let curve = correlation_curve(&acc).unwrap();
        let (r, se) = (curve.values[0].unwrap(), curve.stderr[0].unwrap());
        assert!((r - rho).abs() < 3.0 * se, "r = {r}, se = {se}");
        // Normal theory: (1 - ρ²)/√n.
        assert!((se / (0.75 / 100.0) - 1.0).abs() < 0.1);
    }

    #[test]
    fn independent_ensembles_are_uncorrelated() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut acc = EnsembleAccumulator::new(1.0, 5);
        for _ in 0..4000 {
            let x: Vec<f64> = (0..5).map(|_| StandardNormal.sample(&mut rng)).collect();
            let y: Vec<f64> = (0..5).map(|_| rng.random::<f64>()).collect();
            acc.accumulate(&x, &y).unwrap();
        }
        let c = correlation_curve(&acc).unwrap();
        for (v, se) in c.values.iter().zip(&c.stderr) {
            assert!(v.unwrap().abs() < 3.5 * se.unwrap());
        }
    }

    #[test]
    fn merge_matches_single_pass() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let data: Vec<(Vec<f64>, Vec<f64>)> = (0..300)
            .map(|_| {
                let x: Vec<f64> = (0..3).map(|_| 10.0 + rng.random::<f64>()).collect();
                let y: Vec<f64> = x.iter().map(|v| v * v + rng.random::<f64>()).collect();
                (x, y)
            })
            .collect();
        let mut whole = EnsembleAccumulator::new(0.1, 3);
        for (x, y) in &data {
            whole.accumulate(x, y).unwrap();
        }
        let mut a = EnsembleAccumulator::new(0.1, 3);
        let mut b = EnsembleAccumulator::new(0.1, 3);
        for (i, (x, y)) in data.iter().enumerate() {
            if i < 117 { a.accumulate(x, y) } else { b.accumulate(x, y) }.unwrap();
        }
        let mut ab = a.clone();
        ab.merge(&b).unwrap();
        let mut ba = b.clone();
        ba.merge(&a).unwrap();
        let (s, s_ab, s_ba) = (whole.summary().unwrap(), ab.summary().unwrap(), ba.summary().unwrap());
        for ((r, p), q) in s.rows.iter().zip(&s_ab.rows).zip(&s_ba.rows) {
            for (u, v, w) in [
                (r.mean1, p.mean1, q.mean1),
                (r.var2, p.var2, q.var2),
                (r.cov, p.cov, q.cov),
                (r.se_cov, p.se_cov, q.se_cov),
            ] {
                assert!((u - v).abs() <= 1e-12 * u.abs().max(1.0));
                assert!((u - w).abs() <= 1e-12 * u.abs().max(1.0));
            }
        }
    }

    #[test]
    fn slope_of_pure_power() {
        let x: Vec<f64> = (1..20).map(|k| k as f64 * 0.1).collect();
        let y: Vec<f64> = x.iter().map(|v| v * v).collect();
        let (s, se) = loglog_slope(&x, &y, 0..x.len()).unwrap();
        assert!((s - 2.0).abs() < 1e-12);
        assert!(se < 1e-10);
    }

    #[test]
    fn slope_of_noisy_power_law() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..50).map(|k| 10f64.powf(-3.0 + 2.0 * k as f64 / 49.0)).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|v| {
                let e: f64 = StandardNormal.sample(&mut rng);
                1.7 * v.powf(0.6) * (1.0 + 0.01 * e)
            })
            .collect();
        let (s, _) = loglog_slope(&x, &y, 0..50).unwrap();
        assert!((s - 0.6).abs() < 0.02);
    }

    #[test]
    fn slope_rejects_nonpositive() {
        let r = loglog_slope(&[1.0, 2.0, 3.0], &[1.0, 0.0, 2.0], 0..3);
        assert!(matches!(r, Err(Error::NonPositive { index: 1, .. })));
    }

    #[test]
    fn bootstrap_se_is_close_to_delta_method() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let shards: Vec<EnsembleAccumulator> = (0..50)
            .map(|_| {
                let mut acc = EnsembleAccumulator::new(1.0, 1);
                for _ in 0..100 {
                    let z1: f64 = StandardNormal.sample(&mut rng);
                    let z2: f64 = StandardNormal.sample(&mut rng);
                    acc.accumulate(&[z1], &[0.3 * z1 + z2]).unwrap();
                }
                acc
            })
            .collect();
        let mut all = EnsembleAccumulator::new(1.0, 1);
        for s in &shards {
            all.merge(s).unwrap();
        }
        let delta = correlation_curve(&all).unwrap().stderr[0].unwrap();
        let boot = bootstrap_correlation_se(&shards, 400, 2).unwrap()[0].unwrap();
        assert!((boot / delta - 1.0).abs() < 0.25, "boot {boot} delta {delta}");
    }
}
