//! Volterra-Euler simulation of the limit system
//!
//! ```text
//! V¹_t = b₁(t) + ∫₀^t K₁(t-s)√V¹_s dB¹_s
//! V²_t = b₂(t) + ∫₀^t K₂(t-s)√V²_s dB²_s + ℓ∞∫₀^t (K₁*K₂)(t-s)√V¹_s dB¹_s
//! ```
//!
//! on `t_k = k·dt`. The state enters the recursion only through `√(V⁺)`, so
//! clipping the stored value at zero changes the reported path and never the
//! dynamics. By default nothing is clipped and `E[V_k] = b_k` holds exactly for
//! the scheme. Near `t = 0` the profiles are `O(t)` while the noise is
//! `O(t^{α})`, so clipped paths have a mean well above `b`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::analytics::{b1_profile, b2_profile, kernel_product_cells, LimitParams};
use crate::error::{Error, Result};
use crate::grid::{AtZero, GridFunction};
use crate::kernels::MittagLefflerKernel;
use crate::rng::{sharded_reduce, stream_rng};
use crate::stats::{loglog_slope, EnsembleAccumulator, NeumaierSum};

/// Minimum ensemble size for increment-moment fits.
pub const MIN_INCREMENT_PATHS: usize = 500;

/// Dyadic lag levels `1, 2, 4, 8` steps: the power laws hold as `h → 0`, and
/// at `dt = 2^{-10}` longer lags pick up the `O(h^{α})` corrections of the
/// Mittag-Leffler kernels.
pub const DEFAULT_LAG_LEVELS: u32 = 4;

/// `w_k = ∫_{k·dt}^{(k+1)dt} K` for `k < n`.
pub fn kernel_weights(k: &MittagLefflerKernel, dt: f64, n: usize) -> Result<Vec<f64>> {
    if !(dt > 0.0) {
        return Err(Error::Domain(format!("weights with dt = {dt}")));
    }
    Ok(k.cell_averages(dt, n)?.into_iter().map(|c| c * dt).collect())
}

/// `w_k = √(dt∫_{k·dt}^{(k+1)dt} K²)`, so each cell carries the exact Itô
/// variance of its kernel mass.
pub fn kernel_weights_l2(k: &MittagLefflerKernel, dt: f64, n: usize) -> Result<Vec<f64>> {
    if !(dt > 0.0) {
        return Err(Error::Domain(format!("weights with dt = {dt}")));
    }
    Ok(k.squared_cell_averages(dt, n)?.into_iter().map(|c| dt * c.sqrt()).collect())
}

/// How kernel weights are formed from a cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightRule {
    /// `∫_cell K`: exact conditional means.
    CellIntegral,
    /// `√(dt∫_cell K²)`: exact conditional variances. On the first cell of a
    /// `t^{α-1}` kernel the cell integral carries only `(2α-1)/α²` of the variance.
    #[default]
    L2Matched,
}

/// Cell integrals of a grid function.
pub fn grid_weights(k: &GridFunction) -> Vec<f64> {
    k.cells().iter().map(|c| c * k.dt()).collect()
}

/// Whether the stored state is clipped at zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Clipping {
    /// Store `V` as computed; only the diffusion sees `V⁺`.
    #[default]
    None,
    /// Store `max(V, 0)`.
    Store,
}

/// Discretization of the limit system.
#[derive(Debug, Clone, PartialEq)]
pub struct SveScheme {
    pub dt: f64,
    pub n_steps: usize,
    pub weights1: Vec<f64>,
    pub weights2: Vec<f64>,
    /// Cell integrals of `K₁*K₂`, without the `ℓ∞` factor.
    pub weights_cross: Vec<f64>,
    pub ell_inf: f64,
    pub clipping: Clipping,
    pub rule: WeightRule,
}

impl SveScheme {
    /// Weights of `K₁`, `K₂` under the default rule and cell integrals of
    /// `K₁*K₂` on `[0, n·dt]`.
    pub fn new(p: &LimitParams, dt: f64, n_steps: usize) -> Result<Self> {
        Self::with_rule(p, dt, n_steps, WeightRule::default())
    }

    /// The cross kernel vanishes at zero and always uses cell integrals.
    pub fn with_rule(p: &LimitParams, dt: f64, n_steps: usize, rule: WeightRule) -> Result<Self> {
        p.validate()?;
        if n_steps == 0 {
            return Err(Error::Domain("scheme needs at least one step".into()));
        }
        let weights = |k: MittagLefflerKernel| match rule {
            WeightRule::CellIntegral => kernel_weights(&k, dt, n_steps),
            WeightRule::L2Matched => kernel_weights_l2(&k, dt, n_steps),
        };
        Ok(Self {
            dt,
            n_steps,
            weights1: weights(p.k1()?)?,
            weights2: weights(p.k2()?)?,
            weights_cross: kernel_product_cells(p, dt, n_steps)?.into_iter().map(|c| c * dt).collect(),
            ell_inf: p.ell_inf,
            clipping: Clipping::None,
            rule,
        })
    }

    pub fn with_clipping(mut self, clipping: Clipping) -> Self {
        self.clipping = clipping;
        self
    }

    /// Weights of `K₁` as cell averages, the form used by the affine dual.
    pub fn averages1(&self) -> Vec<f64> {
        self.weights1.iter().map(|w| w / self.dt).collect()
    }

    /// Scheme for `V¹` alone with kernel `k`: `ℓ∞ = 0` and `K₂ ≡ 0`, so `V²`
    /// stays at its drift.
    pub fn for_kernel(k: &MittagLefflerKernel, dt: f64, n_steps: usize, rule: WeightRule) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::Domain("scheme needs at least one step".into()));
        }
        let weights1 = match rule {
            WeightRule::CellIntegral => kernel_weights(k, dt, n_steps)?,
            WeightRule::L2Matched => kernel_weights_l2(k, dt, n_steps)?,
        };
        Ok(Self {
            dt,
            n_steps,
            weights1,
            weights2: vec![0.0; n_steps],
            weights_cross: vec![0.0; n_steps],
            ell_inf: 0.0,
            clipping: Clipping::None,
            rule,
        })
    }

    fn check(&self, d: &SveDrifts) -> Result<()> {
        let n1 = self.n_steps + 1;
        if d.b1.len() != n1 || d.b2.len() != n1 {
            return Err(Error::GridMismatch(format!(
                "drifts have {} and {} nodes, scheme needs {n1}",
                d.b1.len(),
                d.b2.len()
            )));
        }
        Ok(())
    }
}

/// Drift curves `b₁, b₂` at the scheme nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct SveDrifts {
    pub b1: Vec<f64>,
    pub b2: Vec<f64>,
}

impl SveDrifts {
    /// Profiles of the limit system.
    pub fn profiles(p: &LimitParams, dt: f64, n: usize) -> Result<Self> {
        Ok(Self { b1: b1_profile(p, dt, n)?.values().to_vec(), b2: b2_profile(p, dt, n)?.values().to_vec() })
    }

    /// Constant drifts.
    pub fn constant(v1: f64, v2: f64, n: usize) -> Self {
        Self { b1: vec![v1; n + 1], b2: vec![v2; n + 1] }
    }
}

/// One simulated path triple.
#[derive(Debug, Clone, PartialEq)]
pub struct SvePaths {
    pub v1: GridFunction,
    pub v2: GridFunction,
    /// `ℓ∞∫(K₁*K₂)(t-s)√V¹ dB¹` alone.
    pub cross_term: GridFunction,
    pub seed: u64,
    pub replication: u64,
}

impl SvePaths {
    /// `t,v1,v2,cross` rows.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,v1,v2,cross")?;
        for k in 0..self.v1.values().len() {
            writeln!(
                w,
                "{:.12e},{:.12e},{:.12e},{:.12e}",
                self.v1.t(k),
                self.v1.values()[k],
                self.v2.values()[k],
                self.cross_term.values()[k]
            )?;
        }
        Ok(())
    }
}

/// Raw node arrays of one path.
#[derive(Debug, Clone, PartialEq)]
pub struct RawPath {
    pub v1: Vec<f64>,
    pub v2: Vec<f64>,
    pub cross: Vec<f64>,
    /// `∫K₂√V² dB²`, the self-excited noise of component 2.
    pub self2: Vec<f64>,
}

fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

#[inline]
fn causal_dot(w: &[f64], s: &[f64], k: usize) -> f64 {
    // Σ_{j<k} w_{k-1-j} s_j.
    let mut acc = 0.0;
    for (x, y) in w[..k].iter().rev().zip(&s[..k]) {
        acc += x * y;
    }
    acc
}

/// Path driven by explicit normal draws `z1, z2` of length `n_steps`.
pub fn simulate_with_noise(scheme: &SveScheme, drifts: &SveDrifts, z1: &[f64], z2: &[f64]) -> Result<RawPath> {
    scheme.check(drifts)?;
    let n = scheme.n_steps;
    if z1.len() < n || z2.len() < n {
        return Err(Error::GridMismatch("fewer normal draws than steps".into()));
    }
    let root = 1.0 / scheme.dt.sqrt();
    let clip = scheme.clipping == Clipping::Store;
    let mut v1 = Vec::with_capacity(n + 1);
    let mut v2 = Vec::with_capacity(n + 1);
    let mut cross = Vec::with_capacity(n + 1);
    let mut self2 = Vec::with_capacity(n + 1);
    // s_j = √(V_j⁺)·ΔW_j/dt, so Σ w_{k-1-j}s_j is the Euler Itô sum.
    let mut s1 = Vec::with_capacity(n);
    let mut s2 = Vec::with_capacity(n);
    for k in 0..=n {
        let c = scheme.ell_inf * causal_dot(&scheme.weights_cross, &s1, k);
        let m2 = causal_dot(&scheme.weights2, &s2, k);
        let mut x1 = drifts.b1[k] + causal_dot(&scheme.weights1, &s1, k);
        let mut x2 = drifts.b2[k] + m2 + c;
        if clip {
            x1 = x1.max(0.0);
            x2 = x2.max(0.0);
        }
        v1.push(x1);
        v2.push(x2);
        cross.push(c);
        self2.push(m2);
        if k < n {
            s1.push(x1.max(0.0).sqrt() * z1[k] * root);
            s2.push(x2.max(0.0).sqrt() * z2[k] * root);
        }
    }
    Ok(RawPath { v1, v2, cross, self2 })
}

/// Replication `rep` with `Z¹` from stream slot 0 and `Z²` from slot 1.
///
/// The same `Z¹` drives `V¹` and the cross sum of `V²`.
pub fn simulate_raw(scheme: &SveScheme, drifts: &SveDrifts, seed: u64, rep: u64) -> Result<RawPath> {
    let z1 = normals(&mut stream_rng(seed, rep, 0), scheme.n_steps);
    let z2 = normals(&mut stream_rng(seed, rep, 1), scheme.n_steps);
    simulate_with_noise(scheme, drifts, &z1, &z2)
}

/// One path triple as grid functions.
pub fn simulate_sve_pair(scheme: &SveScheme, drifts: &SveDrifts, seed: u64, rep: u64) -> Result<SvePaths> {
    let raw = simulate_raw(scheme, drifts, seed, rep)?;
    let g = |v: Vec<f64>| GridFunction::from_nodes(scheme.dt, v, AtZero::Point);
    Ok(SvePaths { v1: g(raw.v1)?, v2: g(raw.v2)?, cross_term: g(raw.cross)?, seed, replication: rep })
}

/// Streaming estimate of `E|X_{t+h} - X_t|^q` on a set of lags in steps,
/// pooled over all start times and paths.
#[derive(Debug, Clone, PartialEq)]
pub struct IncrementAccumulator {
    dt: f64,
    q: i32,
    lags: Vec<usize>,
    sums: Vec<NeumaierSum>,
    counts: Vec<usize>,
    paths: usize,
}

impl IncrementAccumulator {
    /// `q` must be a positive even integer.
    pub fn new(dt: f64, q: i32, lags: Vec<usize>) -> Result<Self> {
        if q <= 0 || q % 2 != 0 {
            return Err(Error::Domain(format!("increment moment q = {q} must be a positive even integer")));
        }
        if lags.len() < 3 || lags.contains(&0) {
            return Err(Error::Domain("need at least three positive lags".into()));
        }
        let n = lags.len();
        Ok(Self { dt, q, lags, sums: vec![NeumaierSum::new(); n], counts: vec![0; n], paths: 0 })
    }

    /// Lags `1, 2, 4, ..., 2^{levels-1}` steps.
    pub fn dyadic(dt: f64, q: i32, levels: u32) -> Result<Self> {
        Self::new(dt, q, (0..levels).map(|k| 1usize << k).collect())
    }

    pub fn add_path(&mut self, x: &[f64]) {
        for (i, &h) in self.lags.iter().enumerate() {
            if h >= x.len() {
                continue;
            }
            let mut s = 0.0;
            for j in 0..x.len() - h {
                s += (x[j + h] - x[j]).powi(self.q);
            }
            self.sums[i].add(s);
            self.counts[i] += x.len() - h;
        }
        self.paths += 1;
    }

    pub fn merge(&mut self, other: &IncrementAccumulator) -> Result<()> {
        if other.lags != self.lags || other.q != self.q || other.dt != self.dt {
            return Err(Error::GridMismatch("increment accumulators differ".into()));
        }
        for i in 0..self.lags.len() {
            self.sums[i].merge(&other.sums[i]);
            self.counts[i] += other.counts[i];
        }
        self.paths += other.paths;
        Ok(())
    }

    pub fn paths(&self) -> usize {
        self.paths
    }

    /// Lags in time units and the pooled moments.
    pub fn moments(&self) -> (Vec<f64>, Vec<f64>) {
        let h = self.lags.iter().map(|&l| l as f64 * self.dt).collect();
        let m = self.sums.iter().zip(&self.counts).map(|(s, &c)| if c > 0 { s.value() / c as f64 } else { 0.0 }).collect();
        (h, m)
    }

    /// Log-log slope and regression standard error over all lags.
    pub fn slope(&self) -> Result<(f64, f64)> {
        self.slope_over(self.lags.len())
    }

    /// Slope over the first `count` lags.
    pub fn slope_over(&self, count: usize) -> Result<(f64, f64)> {
        if self.paths < MIN_INCREMENT_PATHS {
            return Err(Error::TooFewSamples { needed: MIN_INCREMENT_PATHS, got: self.paths });
        }
        if count < 3 || count > self.lags.len() {
            return Err(Error::Domain(format!("slope over {count} of {} lags", self.lags.len())));
        }
        let (h, m) = self.moments();
        loglog_slope(&h, &m, 0..count)
    }
}

/// Increment-moment slope of an ensemble of paths on dyadic lags.
pub fn increment_moment_scaling(paths: &[GridFunction], q: i32, levels: u32) -> Result<(f64, f64)> {
    let first = paths.first().ok_or(Error::TooFewSamples { needed: MIN_INCREMENT_PATHS, got: 0 })?;
    let mut acc = IncrementAccumulator::dyadic(first.dt(), q, levels)?;
    for p in paths {
        acc.add_path(p.values());
    }
    acc.slope()
}

/// Ensemble statistics gathered in one pass.
#[derive(Debug, Clone, PartialEq)]
pub struct SveEnsemble {
    /// Moments of `(V¹, V²)` per node.
    pub moments: EnsembleAccumulator,
    /// Increments of the cross term.
    pub cross_increments: IncrementAccumulator,
    /// Increments of `∫K₂√V² dB²`.
    pub self2_increments: IncrementAccumulator,
    /// Increments of `V¹ - b₁`.
    pub mart1_increments: IncrementAccumulator,
}

/// Simulate `n_paths` replications in parallel.
pub fn sve_ensemble(scheme: &SveScheme, drifts: &SveDrifts, n_paths: usize, seed: u64, levels: u32) -> Result<SveEnsemble> {
    scheme.check(drifts)?;
    let n1 = scheme.n_steps + 1;
    let init = || -> SveEnsemble {
        let inc = IncrementAccumulator::dyadic(scheme.dt, 2, levels).expect("validated lags");
        SveEnsemble {
            moments: EnsembleAccumulator::new(scheme.dt, n1),
            cross_increments: inc.clone(),
            self2_increments: inc.clone(),
            mart1_increments: inc,
        }
    };
    IncrementAccumulator::dyadic(scheme.dt, 2, levels)?;
    sharded_reduce(
        n_paths,
        init,
        |acc, rep| {
            let raw = simulate_raw(scheme, drifts, seed, rep as u64)?;
            acc.moments.accumulate(&raw.v1, &raw.v2)?;
            acc.cross_increments.add_path(&raw.cross);
            acc.self2_increments.add_path(&raw.self2);
            let mart: Vec<f64> = raw.v1.iter().zip(&drifts.b1).map(|(v, b)| v - b).collect();
            acc.mart1_increments.add_path(&mart);
            Ok(())
        },
        |a, b| {
            a.moments.merge(&b.moments)?;
            a.cross_increments.merge(&b.cross_increments)?;
            a.self2_increments.merge(&b.self2_increments)?;
            a.mart1_increments.merge(&b.mart1_increments)
        },
    )
}

/// `V¹` alone, driven by slot 0 of replication `rep`.
fn simulate_v1(scheme: &SveScheme, b1: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = scheme.n_steps;
    let root = 1.0 / scheme.dt.sqrt();
    let mut v = Vec::with_capacity(n + 1);
    let mut s = Vec::with_capacity(n);
    for (k, &b) in b1.iter().enumerate().take(n + 1) {
        let mut x = b + causal_dot(&scheme.weights1, &s, k);
        if scheme.clipping == Clipping::Store {
            x = x.max(0.0);
        }
        v.push(x);
        if k < n {
            let z: f64 = StandardNormal.sample(rng);
            s.push(x.max(0.0).sqrt() * z * root);
        }
    }
    v
}

/// Monte-Carlo estimate and standard error of `E[exp(-Σ_{k=1}^n u_k V¹_k dt)]`.
pub fn monte_carlo_laplace(scheme: &SveScheme, b1: &[f64], u: &[f64], n_paths: usize, seed: u64) -> Result<(f64, f64)> {
    let n1 = scheme.n_steps + 1;
    if b1.len() != n1 || u.len() != n1 {
        return Err(Error::GridMismatch(format!("drift and u need {n1} nodes")));
    }
    if u.iter().any(|&x| !(x >= 0.0)) {
        return Err(Error::Domain("u must be non-negative".into()));
    }
    if n_paths < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n_paths });
    }
    let dt = scheme.dt;
    let (s1, s2) = sharded_reduce(
        n_paths,
        || (NeumaierSum::new(), NeumaierSum::new()),
        |acc, rep| {
            let mut rng = stream_rng(seed, rep as u64, 0);
            let v = simulate_v1(scheme, b1, &mut rng);
            let e: f64 = v[1..].iter().zip(&u[1..]).map(|(x, w)| w * x * dt).sum();
            let y = (-e).exp();
            acc.0.add(y);
            acc.1.add(y * y);
            Ok(())
        },
        |a, b| {
            a.0.merge(&b.0);
            a.1.merge(&b.1);
            Ok(())
        },
    )?;
    let n = n_paths as f64;
    let mean = s1.value() / n;
    let var = ((s2.value() - n * mean * mean) / (n - 1.0)).max(0.0);
    Ok((mean, (var / n).sqrt()))
}

/// Brownian paths on `n` steps of `dt`, a test fixture for increment fits.
pub fn brownian_paths(dt: f64, n: usize, count: usize, seed: u64) -> Result<Vec<GridFunction>> {
    (0..count)
        .map(|r| {
            let mut rng = stream_rng(seed, r as u64, 0);
            let mut x = 0.0;
            let mut v = Vec::with_capacity(n + 1);
            v.push(0.0);
            for _ in 0..n {
                x += dt.sqrt() * rng.sample::<f64, _>(StandardNormal);
                v.push(x);
            }
            GridFunction::from_nodes(dt, v, AtZero::Point)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::loglog_slope;

    fn small(p: &LimitParams, n: usize) -> (SveScheme, SveDrifts) {
        let dt = 1.0 / n as f64;
        (SveScheme::new(p, dt, n).unwrap(), SveDrifts::profiles(p, dt, n).unwrap())
    }

    #[test]
    fn weights_telescope() {
        let k = MittagLefflerKernel::new(0.6, 1.0).unwrap();
        let w = kernel_weights(&k, 1e-3, 1000).unwrap();
        let total: f64 = w.iter().sum();
        assert!((total - k.evaluator().unwrap().cdf(1.0).unwrap()).abs() < 1e-12);
        assert!(w.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn exponential_weights() {
        let k = MittagLefflerKernel::new(1.0, 1.0).unwrap();
        let dt = 0.01;
        for (j, w) in kernel_weights(&k, dt, 50).unwrap().iter().enumerate() {
            let want = (-(j as f64) * dt).exp() * (1.0 - (-dt).exp());
            assert!((w - want).abs() < 1e-15);
        }
    }

    #[test]
    fn first_weight_of_power_law() {
        // For small dt, ∫₀^dt K ≈ dt^α/(δ̃Γ(α+1)).
        let k = MittagLefflerKernel::new(0.6, 1.0).unwrap();
        let dt = 1e-8;
        let w = kernel_weights(&k, dt, 1).unwrap()[0];
        let lead = dt.powf(0.6) / crate::special::gamma(1.6);
        assert!((w / lead - 1.0).abs() < 1e-4);
        let q = quadrature::double_exponential::integrate(|v: f64| v.powf(-0.4), 0.0, 1.0, 1e-12).integral;
        assert!((q / crate::special::gamma(0.6) - 1.0 / crate::special::gamma(1.6)).abs() < 1e-8);
    }

    #[test]
    fn l2_weights() {
        let k = MittagLefflerKernel::new(1.0, 1.0).unwrap();
        let dt = 0.01;
        for (j, w) in kernel_weights_l2(&k, dt, 20).unwrap().iter().enumerate() {
            let want = (dt * (-2.0 * j as f64 * dt).exp() * (1.0 - (-2.0 * dt).exp()) / 2.0).sqrt();
            assert!((w - want).abs() < 1e-14);
        }
        // First cell of t^{α-1}/Γ(α): (w_l2/w)² → α²/(2α-1).
        let k = MittagLefflerKernel::new(0.6, 1.0).unwrap();
        let dt = 1e-8;
        let r = kernel_weights_l2(&k, dt, 1).unwrap()[0] / kernel_weights(&k, dt, 1).unwrap()[0];
        assert!((r * r - 0.36 / 0.2).abs() < 1e-3, "{r}");
        // Later cells differ from the cell integral only by the in-cell spread.
        let a = kernel_weights(&k, 1e-3, 100).unwrap();
        let b = kernel_weights_l2(&k, 1e-3, 100).unwrap();
        assert!(b.iter().zip(&a).skip(10).all(|(x, y)| x >= y && x / y - 1.0 < 1e-3));
    }

    #[test]
    fn seeded_paths_repeat() {
        let (s, d) = small(&LimitParams::reference(), 64);
        let a = simulate_sve_pair(&s, &d, 3, 5).unwrap();
        let b = simulate_sve_pair(&s, &d, 3, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.cross_term.values()[0], 0.0);
    }

    #[test]
    fn cross_term_uses_first_noise() {
        // With K₂ ≡ 0 and b₂ ≡ 0, V² is the cross sum of the Z¹ draws alone.
        let p = LimitParams::reference();
        let (mut s, d) = small(&p, 32);
        s.weights2.iter_mut().for_each(|w| *w = 0.0);
        let d = SveDrifts { b1: d.b1, b2: vec![0.0; 33] };
        let z1: Vec<f64> = (0..32).map(|k| ((k * 37 % 11) as f64 - 5.0) / 3.0).collect();
        let a = simulate_with_noise(&s, &d, &z1, &vec![1.0; 32]).unwrap();
        let b = simulate_with_noise(&s, &d, &z1, &vec![-2.0; 32]).unwrap();
        assert_eq!(a.v2, b.v2);
        assert_eq!(a.v2, a.cross);
        let root = 1.0 / s.dt.sqrt();
        for k in 0..=32 {
            let direct: f64 = (0..k).map(|j| s.weights_cross[k - 1 - j] * a.v1[j].max(0.0).sqrt() * z1[j] * root).sum();
            assert!((a.cross[k] - p.ell_inf * direct).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_noise_reproduces_drift() {
        let (s, d) = small(&LimitParams::reference(), 32);
        let z = vec![0.0; 32];
        let r = simulate_with_noise(&s, &d, &z, &z).unwrap();
        assert_eq!(r.v1, d.b1);
        assert_eq!(r.v2, d.b2);
    }

    #[test]
    fn clipping_keeps_state_nonnegative() {
        let (s, d) = small(&LimitParams::reference(), 128);
        let s = s.with_clipping(Clipping::Store);
        for rep in 0..20 {
            let r = simulate_raw(&s, &d, 1, rep).unwrap();
            assert!(r.v1.iter().chain(&r.v2).all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn decoupled_components_are_uncorrelated() {
        let p = LimitParams { ell_inf: 0.0, ..LimitParams::reference() };
        let n = 64;
        let dt = 1.0 / n as f64;
        let s = SveScheme::new(&p, dt, n).unwrap();
        let d = SveDrifts::constant(1.0, 1.0, n);
        let e = sve_ensemble(&s, &d, 2000, 17, 3).unwrap();
        let m = e.moments.central_moments(n / 2).unwrap();
        let (r, se) = crate::stats::correlation_with_se(&m).unwrap();
        assert!(r.abs() < 3.0 * se, "{r} ± {se}");
    }

    #[test]
    fn ensemble_mean_tracks_drift() {
        let p = LimitParams::reference();
        let (s, d) = small(&p, 64);
        let e = sve_ensemble(&s, &d, 2000, 8, 3).unwrap();
        let sum = e.moments.summary().unwrap();
        let mut worst: f64 = 0.0;
        for (k, row) in sum.rows.iter().enumerate().skip(1) {
            worst = worst.max((row.mean1 - d.b1[k]).abs() / row.se_mean1);
            worst = worst.max((row.mean2 - d.b2[k]).abs() / row.se_mean2);
        }
        assert!(worst < 4.0, "{worst}");
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let (s, d) = small(&LimitParams::reference(), 32);
        let a = crate::rng::with_threads(Some(1), || sve_ensemble(&s, &d, 300, 2, 3).unwrap());
        let b = crate::rng::with_threads(Some(3), || sve_ensemble(&s, &d, 300, 2, 3).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn brownian_increment_slope() {
        let paths = brownian_paths(1.0 / 256.0, 256, 600, 4).unwrap();
        let (slope, se) = increment_moment_scaling(&paths, 2, 6).unwrap();
        assert!((slope - 1.0).abs() < 0.05, "{slope} ± {se}");
        assert!(matches!(increment_moment_scaling(&paths[..100], 2, 6), Err(Error::TooFewSamples { .. })));
        assert!(IncrementAccumulator::dyadic(0.1, 3, 4).is_err());
    }

    #[test]
    fn laplace_degenerate_cases() {
        let p = LimitParams::reference();
        let n = 64;
        let dt = 1.0 / n as f64;
        let s = SveScheme::new(&p, dt, n).unwrap();
        let b1 = vec![1.0; n + 1];
        let (e, se) = monte_carlo_laplace(&s, &b1, &vec![0.0; n + 1], 100, 1).unwrap();
        assert_eq!((e, se), (1.0, 0.0));
        let flat = MittagLefflerKernel::new(0.6, 1e12).unwrap();
        let s = SveScheme::for_kernel(&flat, dt, n, WeightRule::default()).unwrap();
        let u = vec![0.5; n + 1];
        let (e, se) = monte_carlo_laplace(&s, &b1, &u, 200, 1).unwrap();
        let exact = (-0.5f64).exp();
        assert!((e - exact).abs() <= 3.0 * se + 1e-6, "{e} vs {exact}");
    }

    #[test]
    fn laplace_matches_affine_dual() {
        let k = MittagLefflerKernel::new(0.6, 1.0).unwrap();
        let n = 64;
        let dt = 1.0 / n as f64;
        let s = SveScheme::for_kernel(&k, dt, n, WeightRule::default()).unwrap();
        let wide = SveScheme::new(&LimitParams::reference(), dt, n).unwrap();
        assert_eq!(s.weights1, wide.weights1);
        let b1 = vec![1.0; n + 1];
        let u = vec![0.5; n + 1];
        let (e, se) = monte_carlo_laplace(&s, &b1, &u, 4000, 12).unwrap();
        let pred = crate::analytics::affine_laplace_prediction(&s.averages1(), &u, &b1, dt).unwrap();
        assert!((e - pred).abs() < 3.0 * se, "{e} ± {se} vs {pred}");
    }

    #[test]
    fn variance_slope_with_constant_drift() {
        // Var(V¹_t) ≈ V̄∫₀^t K² ~ t^{2α-1}.
        let p = LimitParams::reference();
        let n = 256;
        let dt = 1.0 / n as f64;
        let s = SveScheme::new(&p, dt, n).unwrap();
        let d = SveDrifts::constant(1.0, 1.0, n);
        let e = sve_ensemble(&s, &d, 3000, 5, DEFAULT_LAG_LEVELS).unwrap();
        let sum = e.moments.summary().unwrap();
        let t: Vec<f64> = sum.rows.iter().map(|r| r.t).collect();
        let v: Vec<f64> = sum.rows.iter().map(|r| r.var1).collect();
        let (slope, _) = loglog_slope(&t, &v, 3..26).unwrap();
        assert!((slope - 0.2).abs() < 0.1, "{slope}");
        let (exact, _) = crate::analytics::variance_exact(&p, dt, n, crate::analytics::CovarianceDrift::Stationary).unwrap();
        for k in [16, 64, 256] {
            let r = &sum.rows[k];
            assert!((r.var1 - exact.values()[k]).abs() < 4.0 * r.se_var1, "{k}: {} vs {}", r.var1, exact.values()[k]);
        }
        let (slope, _) = e.mart1_increments.slope().unwrap();
        assert!((slope - 0.2).abs() < 0.1, "{slope}");
    }

    #[test]
    fn cell_integral_rule_loses_first_cell_variance() {
        let p = LimitParams::reference();
        let n = 256;
        let dt = 1.0 / n as f64;
        let d = SveDrifts::constant(1.0, 1.0, n);
        let run = |rule| {
            let s = SveScheme::with_rule(&p, dt, n, rule).unwrap();
            sve_ensemble(&s, &d, 1000, 3, DEFAULT_LAG_LEVELS).unwrap().mart1_increments.moments().1[0]
        };
        let ratio = run(WeightRule::L2Matched) / run(WeightRule::CellIntegral);
        assert!(ratio > 1.1, "{ratio}");
    }
}
