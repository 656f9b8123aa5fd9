//! Ogata thinning for the bivariate triangular Hawkes process
//!
//! ```text
//! λ¹(t) = μ¹ + a¹ Σ_{s<t, s∈N¹} φ¹(t-s)
//! λ²(t) = μ² + a² Σ_{s<t, s∈N²} φ²(t-s) + b¹² Σ_{s<t, s∈N¹} ψ¹²(t-s)
//! ```
//!
//! with intensity reconstruction and the renormalized paths
//! `V^{T,i}(t) = (1-a_T^i)/(mᵢT^{αᵢ-1})·λ^{T,i}(Tt)`.
//!
//! All kernels are nonincreasing, so the intensity just after the current
//! time bounds it until the next event and thinning is exact. Pareto memories
//! are summed over the full history, or replaced by a positive
//! sum-of-exponentials fit that updates in `O(nodes)`.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{AtZero, GridFunction};
use crate::params::{CrossExciteKernel, PreLimitParams};
use crate::rng::stream_rng;
use crate::special::gamma;

/// Default per-replication event cap.
pub const DEFAULT_EVENT_CAP: usize = 10_000_000;

/// Self-excitation density of one component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExcitationDensity {
    /// `α(1+t)^{-(1+α)}`.
    Pareto { alpha: f64 },
    /// `r·e^{-rt}`.
    Exponential { rate: f64 },
}

impl ExcitationDensity {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            ExcitationDensity::Pareto { alpha } => alpha * (1.0 + t).powf(-1.0 - alpha),
            ExcitationDensity::Exponential { rate } => rate * (-rate * t).exp(),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            ExcitationDensity::Pareto { alpha } => alpha > 0.0 && alpha < 1.0,
            ExcitationDensity::Exponential { rate } => rate > 0.0 && rate.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!("invalid excitation density {self:?}")))
        }
    }
}

/// How Pareto memories are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntensityMode {
    /// Direct summation over the history.
    #[default]
    Exact,
    /// Sum-of-exponentials fit of the Pareto density.
    SumOfExponentials,
}

impl IntensityMode {
    pub fn is_approx(&self) -> bool {
        matches!(self, IntensityMode::SumOfExponentials)
    }
}

/// Simulation controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimOptions {
    pub mode: IntensityMode,
    pub event_cap: usize,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self { mode: IntensityMode::Exact, event_cap: DEFAULT_EVENT_CAP }
    }
}

/// Fully specified bivariate triangular model on `[0, horizon]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HawkesModel {
    pub horizon: f64,
    pub mu: [f64; 2],
    pub a: [f64; 2],
    pub phi: [ExcitationDensity; 2],
    pub b12: f64,
    pub cross: CrossExciteKernel,
}

impl HawkesModel {
    /// Pareto self-kernels with the near-critical scalings of `p`.
    pub fn from_params(p: &PreLimitParams) -> Self {
        Self {
            horizon: p.horizon,
            mu: [p.mu1, p.mu2],
            a: [p.a1, p.a2],
            phi: [
                ExcitationDensity::Pareto { alpha: p.base.alpha1 },
                ExcitationDensity::Pareto { alpha: p.base.alpha2 },
            ],
            b12: p.b12,
            cross: p.base.cross,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidParams(format!("horizon {} must be positive", self.horizon)));
        }
        for i in 0..2 {
            if !(self.mu[i] >= 0.0 && self.mu[i].is_finite()) {
                return Err(Error::InvalidParams(format!("mu{} = {} must be non-negative", i + 1, self.mu[i])));
            }
            if !(self.a[i] >= 0.0) {
                return Err(Error::InvalidParams(format!("a{} = {} must be non-negative", i + 1, self.a[i])));
            }
            if self.a[i] >= 1.0 {
                return Err(Error::Supercritical(self.a[i]));
            }
            self.phi[i].validate()?;
        }
        if !(self.b12 >= 0.0 && self.b12.is_finite()) {
            return Err(Error::InvalidParams(format!("b12 = {} must be non-negative", self.b12)));
        }
        self.cross.validate()
    }
}

/// Positive sum-of-exponentials fit `φ(t) ≈ Σ_k w_k e^{-β_k t}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpSum {
    pub rates: Vec<f64>,
    pub weights: Vec<f64>,
}

impl ExpSum {
    pub fn eval(&self, t: f64) -> f64 {
        self.rates.iter().zip(&self.weights).map(|(b, w)| w * (-b * t).exp()).sum()
    }

    /// Fit of `α(1+t)^{-(1+α)}` on `[0, t_max]`.
    ///
    /// Nodes `β_k = e^{y_k}` are spaced by 0.7 in `y` and start from the
    /// trapezoid rule for `(1+t)^{-(1+α)} = Γ(1+α)⁻¹∫ e^{(1+α)y - e^y(1+t)} dy`,
    /// which is already positive. The weights are then refit by least squares
    /// of the relative residual on log-spaced points; the refit is kept only
    /// if it stays positive and lowers the error.
    pub fn pareto(alpha: f64, t_max: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) || !(t_max > 0.0 && t_max.is_finite()) {
            return Err(Error::Domain(format!("Pareto fit: alpha = {alpha}, t_max = {t_max}")));
        }
        let p = 1.0 + alpha;
        let step = 0.7;
        let y_lo = -(1.0 + t_max).ln() - 11.5 / p;
        let y_hi = 50f64.ln();
        let count = ((y_hi - y_lo) / step).ceil() as usize + 1;
        let scale = alpha / gamma(p);
        let mut rates = Vec::with_capacity(count);
        let mut weights = Vec::with_capacity(count);
        for k in 0..count {
            let y = y_lo + k as f64 * step;
            rates.push(y.exp());
            weights.push(scale * step * (p * y - y.exp()).exp());
        }
        let quad = Self { rates, weights };
        let target = ExcitationDensity::Pareto { alpha };
        let pts = fit_points(t_max);
        let rows = pts.len();
        let a = DMatrix::from_fn(rows, count, |i, k| (-quad.rates[k] * pts[i]).exp() / target.eval(pts[i]));
        let b = DVector::from_element(rows, 1.0);
        let refit = a.svd(true, true).solve(&b, 1e-14).ok().map(|w| Self { rates: quad.rates.clone(), weights: w.iter().copied().collect() });
        let base_err = quad.relative_l1_error(&target, 1e-3, t_max);
        match refit {
            Some(r) if r.weights.iter().all(|&w| w > 0.0) && r.relative_l1_error(&target, 1e-3, t_max) < base_err => Ok(r),
            _ => Ok(quad),
        }
    }

    /// `∫|Σ - φ| / ∫φ` over `[t_lo, t_hi]` on a fine logarithmic grid.
    pub fn relative_l1_error(&self, target: &ExcitationDensity, t_lo: f64, t_hi: f64) -> f64 {
        let n = 4000;
        let (l0, l1) = (t_lo.ln(), t_hi.ln());
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..n {
            // Midpoint rule in log t with Jacobian t.
            let t = (l0 + (i as f64 + 0.5) * (l1 - l0) / n as f64).exp();
            let f = target.eval(t);
            num += (self.eval(t) - f).abs() * t;
            den += f * t;
        }
        num / den
    }
}

fn fit_points(t_max: f64) -> Vec<f64> {
    let mut pts = vec![0.0];
    let n = 200;
    let (l0, l1) = (1e-4f64.ln(), t_max.ln());
    pts.extend((0..n).map(|i| (l0 + i as f64 * (l1 - l0) / (n - 1) as f64).exp()));
    pts
}

/// Memory `Σ_{s<t} φ(t-s)` of one source component.
#[derive(Debug, Clone)]
enum Memory {
    Pareto { alpha: f64, times: Vec<f64> },
    Exponentials { rates: Vec<f64>, weights: Vec<f64>, state: Vec<f64>, last: f64 },
}

impl Memory {
    fn new(phi: &ExcitationDensity, mode: IntensityMode, horizon: f64) -> Result<Self> {
        Ok(match (*phi, mode) {
            (ExcitationDensity::Pareto { alpha }, IntensityMode::Exact) => Memory::Pareto { alpha, times: Vec::new() },
            (ExcitationDensity::Pareto { alpha }, IntensityMode::SumOfExponentials) => {
                let fit = ExpSum::pareto(alpha, horizon.max(1.0))?;
                Self::exponentials(fit.rates, fit.weights)
            }
            (ExcitationDensity::Exponential { rate }, _) => Self::exponentials(vec![rate], vec![rate]),
        })
    }

    fn cross(k: &CrossExciteKernel) -> Self {
        let r = k.rate();
        Self::exponentials(vec![r], vec![k.l1_norm * r])
    }

    fn exponentials(rates: Vec<f64>, weights: Vec<f64>) -> Self {
        let n = rates.len();
        Memory::Exponentials { rates, weights, state: vec![0.0; n], last: 0.0 }
    }

    /// Value at `t`, not before the last call.
    fn value(&mut self, t: f64) -> f64 {
        match self {
            Memory::Pareto { alpha, times } => {
                let e = -1.0 - *alpha;
                let mut s = 0.0;
                for &u in times.iter() {
                    s += (1.0 + (t - u)).powf(e);
                }
                *alpha * s
            }
            Memory::Exponentials { rates, weights, state, last } => {
                let dt = t - *last;
                *last = t;
                let mut s = 0.0;
                for ((x, b), w) in state.iter_mut().zip(rates.iter()).zip(weights.iter()) {
                    *x *= (-b * dt).exp();
                    s += w * *x;
                }
                s
            }
        }
    }

    /// Register an event at the time of the last `value` call.
    fn push(&mut self, t: f64) {
        match self {
            Memory::Pareto { times, .. } => times.push(t),
            Memory::Exponentials { state, .. } => state.iter_mut().for_each(|x| *x += 1.0),
        }
    }

    fn at_zero(&self) -> f64 {
        match self {
            Memory::Pareto { alpha, .. } => *alpha,
            Memory::Exponentials { weights, .. } => weights.iter().sum(),
        }
    }
}

/// Both conditional intensities as memories of the event history.
struct Intensities {
    mu: [f64; 2],
    a: [f64; 2],
    b12: f64,
    self1: Memory,
    self2: Memory,
    cross: Memory,
}

impl Intensities {
    fn new(m: &HawkesModel, mode: IntensityMode) -> Result<Self> {
        Ok(Self {
            mu: m.mu,
            a: m.a,
            b12: m.b12,
            self1: Memory::new(&m.phi[0], mode, m.horizon)?,
            self2: Memory::new(&m.phi[1], mode, m.horizon)?,
            cross: Memory::cross(&m.cross),
        })
    }

    fn at(&mut self, t: f64) -> (f64, f64) {
        let l1 = self.mu[0] + self.a[0] * self.self1.value(t);
        let l2 = self.mu[1] + self.a[1] * self.self2.value(t) + self.b12 * self.cross.value(t);
        (l1, l2)
    }

    fn push(&mut self, comp: usize, t: f64) {
        if comp == 0 {
            self.self1.push(t);
            self.cross.push(t);
        } else {
            self.self2.push(t);
        }
    }

    /// Upward jump of the total intensity caused by an event of `comp`.
    fn jump(&self, comp: usize) -> f64 {
        if comp == 0 {
            self.a[0] * self.self1.at_zero() + self.b12 * self.cross.at_zero()
        } else {
            self.a[1] * self.self2.at_zero()
        }
    }
}

/// Sorted event times of both components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventStream {
    pub times1: Vec<f64>,
    pub times2: Vec<f64>,
    pub seed: u64,
    pub replication: u64,
    pub horizon: f64,
    pub approx_mode: bool,
}

impl EventStream {
    pub fn len(&self) -> usize {
        self.times1.len() + self.times2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `component,time,seed,T,approx_mode` rows in time order.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "component,time,seed,T,approx_mode")?;
        let (mut i, mut j) = (0, 0);
        while i < self.times1.len() || j < self.times2.len() {
            let take1 = j >= self.times2.len() || (i < self.times1.len() && self.times1[i] < self.times2[j]);
            let (c, t) = if take1 {
                i += 1;
                (1, self.times1[i - 1])
            } else {
                j += 1;
                (2, self.times2[j - 1])
            };
            writeln!(w, "{c},{t:.15e},{},{},{}", self.seed, self.horizon, self.approx_mode)?;
        }
        Ok(())
    }
}

/// One replication of the model, driven by stream `(seed, replication)`.
pub fn simulate_hawkes(model: &HawkesModel, seed: u64, replication: u64, opts: &SimOptions) -> Result<EventStream> {
    model.validate()?;
    let mut rng = stream_rng(seed, replication, 0);
    let mut lam = Intensities::new(model, opts.mode)?;
    let mut out = EventStream {
        times1: Vec::new(),
        times2: Vec::new(),
        seed,
        replication,
        horizon: model.horizon,
        approx_mode: opts.mode.is_approx(),
    };
    let (l1, l2) = lam.at(0.0);
    let mut bound = l1 + l2;
    let mut t = 0.0;
    while bound > 0.0 {
        let e: f64 = Exp1.sample(&mut rng);
        t += e / bound;
        if t > model.horizon {
            break;
        }
        let (l1, l2) = lam.at(t);
        let total = l1 + l2;
        if rng.random::<f64>() * bound <= total {
            let comp = if rng.random::<f64>() * total < l1 { 0 } else { 1 };
            lam.push(comp, t);
            if comp == 0 {
                out.times1.push(t);
            } else {
                out.times2.push(t);
            }
            if out.len() > opts.event_cap {
                return Err(Error::EventCap { cap: opts.event_cap, time: t });
            }
            bound = total + lam.jump(comp);
        } else {
            bound = total;
        }
    }
    Ok(out)
}

/// `λ^i(t_k)` at `t_k = k·T/n`, counting events strictly before `t_k`.
pub fn intensity_path(ev: &EventStream, model: &HawkesModel, n: usize, mode: IntensityMode) -> Result<(GridFunction, GridFunction)> {
    model.validate()?;
    if n == 0 {
        return Err(Error::Domain("intensity grid needs at least one cell".into()));
    }
    let dt = model.horizon / n as f64;
    let mut lam = Intensities::new(model, mode)?;
    let (mut i, mut j) = (0, 0);
    let mut v1 = Vec::with_capacity(n + 1);
    let mut v2 = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let t = k as f64 * dt;
        loop {
            let next1 = ev.times1.get(i).copied().filter(|&s| s < t);
            let next2 = ev.times2.get(j).copied().filter(|&s| s < t);
            let (comp, s) = match (next1, next2) {
                (Some(a), Some(b)) if a < b => (0, a),
                (Some(_), Some(b)) => (1, b),
                (Some(a), None) => (0, a),
                (None, Some(b)) => (1, b),
                (None, None) => break,
            };
            lam.at(s);
            lam.push(comp, s);
            if comp == 0 {
                i += 1;
            } else {
                j += 1;
            }
        }
        let (a, b) = lam.at(t);
        v1.push(a);
        v2.push(b);
    }
    Ok((GridFunction::from_nodes(dt, v1, AtZero::Point)?, GridFunction::from_nodes(dt, v2, AtZero::Point)?))
}

/// `V^{T,i}(t) = (1-a_T^i)/(mᵢT^{αᵢ-1})·λ^{T,i}(Tt)` on `[0, 1]`.
pub fn renormalized_paths(lam: &(GridFunction, GridFunction), p: &PreLimitParams) -> Result<(GridFunction, GridFunction)> {
    let b = &p.base;
    if !(b.m1 > 0.0 && b.m2 > 0.0) {
        return Err(Error::InvalidParams("renormalization needs m1, m2 > 0".into()));
    }
    if (lam.0.t_max() - p.horizon).abs() > 1e-9 * p.horizon {
        return Err(Error::GridMismatch(format!("intensity grid ends at {}, horizon is {}", lam.0.t_max(), p.horizon)));
    }
    let c1 = p.gap1() / (b.m1 * p.horizon.powf(b.alpha1 - 1.0));
    let c2 = p.gap2() / (b.m2 * p.horizon.powf(b.alpha2 - 1.0));
    let dt = lam.0.dt() / p.horizon;
    let rescale = |g: &GridFunction, c: f64| GridFunction::from_nodes(dt, g.values().iter().map(|v| v * c).collect(), AtZero::Point);
    Ok((rescale(&lam.0, c1)?, rescale(&lam.1, c2)?))
}

/// Simulate replication `rep` and return its renormalized paths on `n` cells.
pub fn renormalized_replication(
    p: &PreLimitParams,
    opts: &SimOptions,
    seed: u64,
    rep: u64,
    n: usize,
) -> Result<(EventStream, GridFunction, GridFunction)> {
    let model = HawkesModel::from_params(p);
    let ev = simulate_hawkes(&model, seed, rep, opts)?;
    let lam = intensity_path(&ev, &model, n, opts.mode)?;
    let (v1, v2) = renormalized_paths(&lam, p)?;
    Ok((ev, v1, v2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{scale_parameters, BaseParams};

    fn base() -> BaseParams {
        BaseParams {
            alpha1: 0.6,
            alpha2: 0.8,
            lambda1: 1.0,
            lambda2: 1.0,
            m1: 1.0,
            m2: 1.0,
            b_inf_12: 0.5,
            cross: CrossExciteKernel::exponential(1.0, 1.0).unwrap(),
        }
    }

    fn exp_model(mu: f64, a: f64, horizon: f64) -> HawkesModel {
        HawkesModel {
            horizon,
            mu: [mu, 0.0],
            a: [a, 0.0],
            phi: [ExcitationDensity::Exponential { rate: 1.0 }; 2],
            b12: 0.0,
            cross: CrossExciteKernel::exponential(1.0, 1.0).unwrap(),
        }
    }

    #[test]
    fn zero_baseline_has_no_events() {
        let mut b = base();
        b.m1 = 0.0;
        b.m2 = 0.0;
        let p = scale_parameters(&b, 100.0).unwrap();
        let ev = simulate_hawkes(&HawkesModel::from_params(&p), 1, 0, &SimOptions::default()).unwrap();
        assert!(ev.is_empty());
    }

    #[test]
    fn seeded_runs_are_identical() {
        let p = scale_parameters(&base(), 50.0).unwrap();
        let m = HawkesModel::from_params(&p);
        let a = simulate_hawkes(&m, 9, 2, &SimOptions::default()).unwrap();
        let b = simulate_hawkes(&m, 9, 2, &SimOptions::default()).unwrap();
        assert_eq!(a, b);
        let c = simulate_hawkes(&m, 9, 3, &SimOptions::default()).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn streams_are_sorted_and_disjoint() {
        let p = scale_parameters(&base(), 100.0).unwrap();
        let ev = simulate_hawkes(&HawkesModel::from_params(&p), 4, 0, &SimOptions::default()).unwrap();
        assert!(!ev.times1.is_empty() && !ev.times2.is_empty());
        for ts in [&ev.times1, &ev.times2] {
            assert!(ts.windows(2).all(|w| w[0] < w[1]));
            assert!(ts.iter().all(|&t| (0.0..=100.0).contains(&t)));
        }
        for t in &ev.times1 {
            assert!(ev.times2.binary_search_by(|x| x.partial_cmp(t).unwrap()).is_err());
        }
    }

    #[test]
    fn event_cap_is_enforced() {
        let p = scale_parameters(&base(), 100.0).unwrap();
        let opts = SimOptions { event_cap: 10, ..SimOptions::default() };
        let r = simulate_hawkes(&HawkesModel::from_params(&p), 1, 0, &opts);
        assert!(matches!(r, Err(Error::EventCap { cap: 10, .. })));
    }

    #[test]
    fn exponential_mean_count() {
        // Stationary mean count μT/(1-a), corrected for the transient:
        // E N_T = μT/(1-a) - μa(1-e^{-(1-a)T})/(1-a)².
        let (mu, a, horizon) = (1.0, 0.5, 200.0);
        let m = exp_model(mu, a, horizon);
        let reps = 1000;
        let counts: Vec<f64> = (0..reps)
            .map(|r| simulate_hawkes(&m, 5, r, &SimOptions::default()).unwrap().times1.len() as f64)
            .collect();
        let mean = counts.iter().sum::<f64>() / reps as f64;
        let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
        let se = (var / reps as f64).sqrt();
        let exact = mu * horizon / (1.0 - a) - mu * a * (1.0 - (-(1.0 - a) * horizon).exp()) / (1.0 - a).powi(2);
        assert!((mean - exact).abs() < 3.0 * se, "{mean} vs {exact} ± {se}");
    }

    #[test]
    fn sum_of_exponentials_fit() {
        for (alpha, t_max) in [(0.6, 100.0), (0.8, 1000.0), (0.55, 1e4)] {
            let fit = ExpSum::pareto(alpha, t_max).unwrap();
            assert!(fit.weights.iter().all(|&w| w > 0.0));
            let target = ExcitationDensity::Pareto { alpha };
            let err = fit.relative_l1_error(&target, 1e-3, t_max);
            assert!(err < 1e-3, "alpha {alpha}: {err}");
            assert!((fit.eval(0.0) / alpha - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn intensity_of_single_event() {
        let p = scale_parameters(&base(), 10.0).unwrap();
        let m = HawkesModel::from_params(&p);
        let s0 = 2.5;
        let ev = EventStream { times1: vec![s0], times2: vec![], seed: 0, replication: 0, horizon: 10.0, approx_mode: false };
        let (l1, l2) = intensity_path(&ev, &m, 40, IntensityMode::Exact).unwrap();
        for (k, (&x, &y)) in l1.values().iter().zip(l2.values()).enumerate() {
            let t = k as f64 * 0.25;
            if t <= s0 {
                assert_eq!(x, p.mu1);
                assert_eq!(y, p.mu2);
            } else {
                let want = p.a1 * 0.6 * (1.0 + t - s0).powf(-1.6);
                assert!((x - p.mu1 - want).abs() < 1e-15);
                let cross = p.b12 * (-(t - s0)).exp();
                assert!((y - p.mu2 - cross).abs() < 1e-15);
            }
        }
        let empty = EventStream { times1: vec![], ..ev };
        let (l1, _) = intensity_path(&empty, &m, 10, IntensityMode::Exact).unwrap();
        assert!(l1.values().iter().all(|&v| v == p.mu1));
    }

    #[test]
    fn approximate_intensity_tracks_exact() {
        let p = scale_parameters(&base(), 200.0).unwrap();
        let m = HawkesModel::from_params(&p);
        let ev = simulate_hawkes(&m, 3, 0, &SimOptions::default()).unwrap();
        let (e1, e2) = intensity_path(&ev, &m, 64, IntensityMode::Exact).unwrap();
        let (a1, a2) = intensity_path(&ev, &m, 64, IntensityMode::SumOfExponentials).unwrap();
        for (x, y) in e1.values().iter().zip(a1.values()).chain(e2.values().iter().zip(a2.values())) {
            assert!((x - y).abs() <= 2e-3 * x, "{x} vs {y}");
        }
    }

    #[test]
    fn renormalization_of_constant_intensity() {
        let p = scale_parameters(&base(), 1e3).unwrap();
        let c = |v: f64| GridFunction::from_nodes(100.0, vec![v; 11], AtZero::Point).unwrap();
        let (v1, v2) = renormalized_paths(&(c(p.mu1), c(p.mu2)), &p).unwrap();
        assert_eq!(v1.dt(), 0.1);
        assert!(v1.values().iter().all(|&v| (v - p.gap1()).abs() < 1e-15));
        assert!(v2.values().iter().all(|&v| (v - p.gap2()).abs() < 1e-15));
        let mut b = base();
        b.m1 = 2.0;
        let q = scale_parameters(&b, 1e3).unwrap();
        let (w1, _) = renormalized_paths(&(c(p.mu1), c(p.mu2)), &q).unwrap();
        for (x, y) in v1.values().iter().zip(w1.values()) {
            assert!((x - 2.0 * y).abs() < 1e-15);
        }
        b.m1 = 0.0;
        let z = scale_parameters(&b, 1e3).unwrap();
        assert!(renormalized_paths(&(c(1.0), c(1.0)), &z).is_err());
    }

    #[test]
    fn csv_merges_components() {
        let ev = EventStream { times1: vec![0.5, 2.0], times2: vec![1.0], seed: 3, replication: 0, horizon: 5.0, approx_mode: true };
        let mut buf = Vec::new();
        ev.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let comps: Vec<&str> = s.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
        assert_eq!(comps, ["1", "2", "1"]);
        assert!(s.lines().nth(1).unwrap().ends_with(",3,5,true"));
    }
}
