//! Mittag-Leffler limit kernels, heavy-tail pre-limit densities, cell-average
//! convolutions, resolvents and the renormalized kernels `g_T^i`, `h̃_T`.
//!
//! Convolutions act on the piecewise-constant cell representation: for cell
//! averages `f̄, ḡ` on a step `dt`,
//! `(f*g)(t_k) = dt·Σ_{j<k} f̄_j ḡ_{k-1-j}`, exact for piecewise-constant inputs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::{convolve_full, solve_volterra};
use crate::grid::{same_dt, same_grid, GridFunction};
use crate::params::{tail_scale, PreLimitParams};
use crate::special::{gamma, MittagLeffler};

/// Limit kernel `K` with `K̂(z) = 1/(1 + δ̃ z^α)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MittagLefflerKernel {
    pub alpha: f64,
    pub delta_tilde: f64,
}

impl MittagLefflerKernel {
    /// `α ∈ (0, 1]` (the rough regime is `α ∈ (1/2, 1)`), `δ̃ > 0`.
    pub fn new(alpha: f64, delta_tilde: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::Domain(format!("kernel alpha = {alpha} not in (0, 1]")));
        }
        if !(delta_tilde > 0.0 && delta_tilde.is_finite()) {
            return Err(Error::Domain(format!("delta_tilde = {delta_tilde} must be positive")));
        }
        Ok(Self { alpha, delta_tilde })
    }

    /// Evaluator reusing cached series coefficients.
    pub fn evaluator(&self) -> Result<MlKernelEval> {
        MlKernelEval::new(*self)
    }

    /// `K̂(z)` for real `z ≥ 0`.
    pub fn laplace(&self, z: f64) -> f64 {
        1.0 / (1.0 + self.delta_tilde * z.powf(self.alpha))
    }

    /// Exact cell averages `dt⁻¹∫_{j dt}^{(j+1)dt} K`.
    pub fn cell_averages(&self, dt: f64, n: usize) -> Result<Vec<f64>> {
        let e = self.evaluator()?;
        let mut prev = 0.0;
        let mut out = Vec::with_capacity(n);
        for j in 0..n {
            let next = e.cdf((j + 1) as f64 * dt)?;
            out.push((next - prev) / dt);
            prev = next;
        }
        Ok(out)
    }

    /// Exact cell masses and first moments, using `∫₀^t (1 - F) = t·E_{α,2}(-t^α/δ̃)`.
    pub fn cell_measure(&self, h: f64, n: usize) -> Result<CellMeasure> {
        let e = self.evaluator()?;
        let e2 = MittagLeffler::new(self.alpha, 2.0)?;
        let tail_integral = |t: f64| -> Result<f64> {
            if self.alpha == 1.0 {
                return Ok(-self.delta_tilde * (-t / self.delta_tilde).exp_m1());
            }
            Ok(t * e2.eval(-t.powf(self.alpha) / self.delta_tilde)?)
        };
        let mut mass = Vec::with_capacity(n);
        let mut moment = Vec::with_capacity(n);
        let (mut f_prev, mut g_prev) = (0.0, 0.0);
        for j in 0..n {
            let t = (j + 1) as f64 * h;
            let f = e.cdf(t)?;
            let g = tail_integral(t)?;
            let m = f - f_prev;
            let w = ((g - g_prev) / h - (1.0 - f)).clamp(0.0, m);
            mass.push(m);
            moment.push(w);
            f_prev = f;
            g_prev = g;
        }
        Ok(CellMeasure { h, mass, moment })
    }

    /// Grid representation on `n` cells of width `dt`.
    pub fn grid(&self, dt: f64, n: usize) -> Result<GridFunction> {
        let e = self.evaluator()?;
        let cells = self.cell_averages(dt, n)?;
        let mut values = Vec::with_capacity(n + 1);
        values.push(cells[0]);
        for k in 1..=n {
            values.push(e.eval(k as f64 * dt)?);
        }
        GridFunction::from_parts(dt, values, cells)
    }

    /// Cell averages of `K²`, `dt⁻¹∫_{j dt}^{(j+1)dt} K²`, for `α > 1/2`.
    ///
    /// The first cell is integrated in `w` with `s = dt·w^{1/(2α-1)}`, which
    /// turns the `s^{2α-2}` singularity into a bounded integrand.
    pub fn squared_cell_averages(&self, dt: f64, n: usize) -> Result<Vec<f64>> {
        let a = self.alpha;
        if !(a > 0.5) {
            return Err(Error::Domain(format!("K² is not integrable at alpha = {a}")));
        }
        let e = self.evaluator()?;
        let bad = std::cell::Cell::new(false);
        let k2 = |s: f64| match e.eval(s) {
            Ok(v) => v * v,
            Err(_) => {
                bad.set(true);
                0.0
            }
        };
        let p = 1.0 / (2.0 * a - 1.0);
        let mut out = Vec::with_capacity(n);
        for j in 0..n {
            let v = if j == 0 {
                let f = |w: f64| if w > 0.0 { k2(dt * w.powf(p)) * dt * p * w.powf(p - 1.0) } else { 0.0 };
                quadrature::double_exponential::integrate(f, 0.0, 1.0, 1e-13).integral
            } else {
                quadrature::double_exponential::integrate(k2, j as f64 * dt, (j + 1) as f64 * dt, 1e-13).integral
            };
            out.push(v / dt);
        }
        if bad.get() {
            return Err(Error::Domain("kernel evaluation failed inside a cell".into()));
        }
        Ok(out)
    }
}

/// Cached evaluator for `K`, its primitive and its cell integrals.
#[derive(Debug, Clone)]
pub struct MlKernelEval {
    kernel: MittagLefflerKernel,
    e_aa: MittagLeffler,
    e_a1: MittagLeffler,
    e_a_a1: MittagLeffler,
}

impl MlKernelEval {
    pub fn new(kernel: MittagLefflerKernel) -> Result<Self> {
        let a = kernel.alpha;
        Ok(Self {
            kernel,
            e_aa: MittagLeffler::new(a, a)?,
            e_a1: MittagLeffler::new(a, 1.0)?,
            e_a_a1: MittagLeffler::new(a, a + 1.0)?,
        })
    }

    /// `K(t) = t^{α-1} E_{α,α}(-t^α/δ̃)/δ̃` for `t > 0`.
    pub fn eval(&self, t: f64) -> Result<f64> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::Domain(format!("kernel evaluated at t = {t}; need t > 0")));
        }
        let MittagLefflerKernel { alpha, delta_tilde } = self.kernel;
        if alpha == 1.0 {
            return Ok((-t / delta_tilde).exp() / delta_tilde);
        }
        let x = t.powf(alpha) / delta_tilde;
        Ok(t.powf(alpha - 1.0) * self.e_aa.eval(-x)? / delta_tilde)
    }

    /// `∫₀^t K = 1 - E_α(-t^α/δ̃) = x·E_{α,α+1}(-x)` with `x = t^α/δ̃`.
    pub fn cdf(&self, t: f64) -> Result<f64> {
        if t < 0.0 || t.is_nan() {
            return Err(Error::Domain(format!("kernel primitive at t = {t}")));
        }
        if t == 0.0 {
            return Ok(0.0);
        }
        let MittagLefflerKernel { alpha, delta_tilde } = self.kernel;
        if alpha == 1.0 {
            return Ok(-(-t / delta_tilde).exp_m1());
        }
        let x = t.powf(alpha) / delta_tilde;
        if x <= 1.0 {
            Ok(x * self.e_a_a1.eval(-x)?)
        } else {
            Ok(1.0 - self.e_a1.eval(-x)?)
        }
    }
}

/// `K(t)` for `t > 0`.
pub fn ml_kernel_eval(k: &MittagLefflerKernel, t: f64) -> Result<f64> {
    MlKernelEval::new(*k)?.eval(t)
}

/// Limit kernel of a component whose pre-limit density has tail scale
/// `δ = Γ(1-α)`: `K̂(z) = 1/(1 + Γ(1-α)z^α)`.
pub fn limit_kernel(alpha: f64) -> Result<MittagLefflerKernel> {
    MittagLefflerKernel::new(alpha, tail_scale(alpha))
}

/// Pareto density `φ(t) = α(1+t)^{-(1+α)}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParetoKernel {
    pub alpha: f64,
}

impl ParetoKernel {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Domain(format!("Pareto alpha = {alpha} not in (0, 1)")));
        }
        Ok(Self { alpha })
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        if t < 0.0 || t.is_nan() {
            return Err(Error::Domain(format!("Pareto density at t = {t}")));
        }
        Ok(self.alpha * (1.0 + t).powf(-1.0 - self.alpha))
    }

    /// Tail function `∫_t^∞ φ = (1+t)^{-α}`.
    pub fn survival(&self, t: f64) -> f64 {
        (1.0 + t).powf(-self.alpha)
    }

    /// Exact cell averages over `[j·h, (j+1)·h]`.
    pub fn cell_averages(&self, h: f64, n: usize) -> Vec<f64> {
        let a = self.alpha;
        (0..n)
            .map(|j| {
                let left = 1.0 + j as f64 * h;
                let ratio = (h / left).ln_1p();
                left.powf(-a) * (-(-a * ratio).exp_m1()) / h
            })
            .collect()
    }

    /// Exact cell masses and first moments on `n` cells of width `h`.
    pub fn cell_measure(&self, h: f64, n: usize) -> CellMeasure {
        let a = self.alpha;
        let mut mass = Vec::with_capacity(n);
        let mut moment = Vec::with_capacity(n);
        for j in 0..n {
            let x = 1.0 + j as f64 * h;
            let r = h / x;
            mass.push(x.powf(-a) * (-(-a * r.ln_1p()).exp_m1()));
            // h·w_j = ∫_cell S - h·S(t_{j+1}) = x^{1-α}·f(r).
            moment.push(x.powf(1.0 - a) * pareto_moment_factor(a, r) / h);
        }
        CellMeasure { h, mass, moment }
    }
}

/// `f(r) = ((1+r)^{1-α} - 1)/(1-α) - r(1+r)^{-α}`, by series for small `r`.
fn pareto_moment_factor(a: f64, r: f64) -> f64 {
    if r >= 0.25 {
        let l = r.ln_1p();
        return ((1.0 - a) * l).exp_m1() / (1.0 - a) - r * (-a * l).exp();
    }
    // f(r) = -Σ_{k≥2} ((k-1)/k)·C(-α, k-1)·r^k.
    let mut binom = 1.0;
    let mut rk = r;
    let mut sum = 0.0;
    for k in 2..60 {
        binom *= (-a - (k - 2) as f64) / (k - 1) as f64;
        rk *= r;
        let term = -((k - 1) as f64 / k as f64) * binom * rk;
        sum += term;
        if term.abs() < 1e-18 * sum.abs() {
            break;
        }
    }
    sum
}

/// A non-negative measure on a uniform grid, stored as cell masses
/// `m_j = μ(cell j)` and first moments `w_j = h⁻¹∫_{cell j}(s - t_j)dμ(s)`.
///
/// Convolving the measure with a function whose primitive is interpolated
/// linearly on each cell gives cell averages `Σ_j κ_j ḡ_{m-j}` with
/// `κ_0 = m_0 - w_0`, `κ_j = m_j - w_j + w_{j-1}`. A density that is constant on
/// each cell has `w_j = m_j/2`, which is the plain cell-average rule; heavy
/// tails on coarse cells concentrate mass near the left edge and need the
/// exact moments.
#[derive(Debug, Clone, PartialEq)]
pub struct CellMeasure {
    pub h: f64,
    pub mass: Vec<f64>,
    pub moment: Vec<f64>,
}

impl CellMeasure {
    /// Measure with density constant on each cell.
    pub fn uniform(cells: &[f64], h: f64) -> Self {
        let mass: Vec<f64> = cells.iter().map(|c| c * h).collect();
        let moment = mass.iter().map(|m| 0.5 * m).collect();
        Self { h, mass, moment }
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub fn total(&self) -> f64 {
        crate::stats::compensated_sum(&self.mass)
    }

    /// Cell averages of the measure.
    pub fn cell_averages(&self) -> Vec<f64> {
        self.mass.iter().map(|m| m / self.h).collect()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            h: self.h,
            mass: self.mass.iter().map(|m| m * c).collect(),
            moment: self.moment.iter().map(|w| w * c).collect(),
        }
    }

    /// Convolution weights `κ_j`.
    pub fn weights(&self) -> Vec<f64> {
        (0..self.len())
            .map(|j| {
                let prev = if j == 0 { 0.0 } else { self.moment[j - 1] };
                self.mass[j] - self.moment[j] + prev
            })
            .collect()
    }

    /// Cell averages of `μ * g` for cell averages `g` on the same step.
    pub fn convolve(&self, g: &[f64]) -> Vec<f64> {
        let n = self.len().min(g.len());
        let mut out = convolve_full(&self.weights()[..n], &g[..n]);
        out.truncate(n);
        out
    }
}

/// `φ(t) = α(1+t)^{-(1+α)}`.
pub fn pareto_eval(k: &ParetoKernel, t: f64) -> Result<f64> {
    k.eval(t)
}

/// Admissible heavy-tail density of the self-excitation kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelfDensity {
    /// `α(1+t)^{-(1+α)}`.
    #[default]
    Pareto,
    /// Mittag-Leffler density with Laplace transform `1/(1 + Γ(1-α)z^α)`.
    MittagLeffler,
}

impl SelfDensity {
    /// Exact cell averages of the density on `n` cells of width `h`.
    pub fn cell_averages(&self, alpha: f64, h: f64, n: usize) -> Result<Vec<f64>> {
        match self {
            SelfDensity::Pareto => Ok(ParetoKernel::new(alpha)?.cell_averages(h, n)),
            SelfDensity::MittagLeffler => limit_kernel(alpha)?.cell_averages(h, n),
        }
    }

    /// Exact cell masses and first moments.
    pub fn cell_measure(&self, alpha: f64, h: f64, n: usize) -> Result<CellMeasure> {
        match self {
            SelfDensity::Pareto => Ok(ParetoKernel::new(alpha)?.cell_measure(h, n)),
            SelfDensity::MittagLeffler => limit_kernel(alpha)?.cell_measure(h, n),
        }
    }
}

/// Cell-average convolution of two cell arrays of equal step `dt`.
///
/// Returns the nodal values at `t_0..t_n` and the cell averages of the
/// piecewise-linear result on the first `n` cells.
pub fn convolve_cells(f: &[f64], g: &[f64], dt: f64) -> (Vec<f64>, Vec<f64>) {
    let n = f.len().min(g.len());
    let s = convolve_full(&f[..n], &g[..n]);
    let mut nodes = Vec::with_capacity(n + 1);
    nodes.push(0.0);
    for k in 1..=n {
        nodes.push(dt * s[k - 1]);
    }
    let cells = (0..n).map(|m| 0.5 * (nodes[m] + nodes[m + 1])).collect();
    (nodes, cells)
}

/// `(f*g)(t_k) = dt·Σ_{j<k} f̄_j ḡ_{k-1-j}` on the common grid.
pub fn convolve(f: &GridFunction, g: &GridFunction) -> Result<GridFunction> {
    same_grid(f, g)?;
    let (nodes, cells) = convolve_cells(f.cells(), g.cells(), f.dt());
    GridFunction::from_parts(f.dt(), nodes, cells)
}

/// Resolvent `ψ = aφ + aφ*ψ` in cell-average form.
///
/// With cell averages the convolution average over cell `m` is
/// `(dt/2)(S_{m-1} + S_m)`, `S_m = Σ_{j≤m} φ̄_j ψ̄_{m-j}`, which gives the
/// generating-function identity `Ψ(z)(1 - (a·dt/2)(1+z)Φ(z)) = aΦ(z)`.
pub fn resolvent(phi: &GridFunction, a: f64) -> Result<GridFunction> {
    let cells = resolvent_cells(phi.cells(), a, phi.dt())?;
    GridFunction::from_cells(phi.dt(), cells)
}

/// Cell-average resolvent of a non-negative cell array.
pub fn resolvent_cells(phi: &[f64], a: f64, dt: f64) -> Result<Vec<f64>> {
    if let Some(k) = phi.iter().position(|&v| !(v >= 0.0)) {
        return Err(Error::Domain(format!("negative or NaN density at cell {k}")));
    }
    resolvent_measure(&CellMeasure::uniform(phi, dt), a)
}

/// Cell averages of the resolvent `ψ = aφ + aφ*ψ` of a density given as a
/// [`CellMeasure`]: `ψ̄_m(1 - aκ_0) = a·m_m/h + a·Σ_{j≥1} κ_j ψ̄_{m-j}`.
pub fn resolvent_measure(phi: &CellMeasure, a: f64) -> Result<Vec<f64>> {
    if a >= 1.0 {
        return Err(Error::Supercritical(a));
    }
    if !(a > 0.0) {
        return Err(Error::Domain(format!("branching ratio a = {a} must be in (0, 1)")));
    }
    let kern = phi.weights();
    if let Some(k) = kern.iter().position(|&v| !(v >= 0.0)) {
        return Err(Error::Domain(format!("negative or NaN weight at cell {k}")));
    }
    let d0 = 1.0 - a * kern[0];
    if !(d0 > 0.0) {
        return Err(Error::Domain("grid too coarse for the resolvent recursion".into()));
    }
    let h = phi.h;
    let kern: Vec<f64> = kern.iter().map(|k| a * k).collect();
    Ok(solve_volterra(phi.len(), &kern, |m, s| {
        // Exact forward substitution is non-negative; clip FFT rounding.
        let y = ((a * phi.mass[m] / h + s) / d0).max(0.0);
        (y, y)
    }))
}

/// Renormalized self-resolvent `g_T(s) = ((1-a_T)/ε_T)·ψ_T(s/ε_T)` on `n`
/// cells of width `ds`.
pub fn renormalized_self_kernel(
    alpha: f64,
    lambda: f64,
    horizon: f64,
    ds: f64,
    n: usize,
    density: SelfDensity,
) -> Result<GridFunction> {
    let gap = lambda * horizon.powf(-alpha);
    let a = 1.0 - gap;
    if horizon < 1.0 || !(a > 0.0) {
        return Err(Error::InvalidParams(format!(
            "a_T = {a} <= 0 at T = {horizon}: horizon too small"
        )));
    }
    let eps = gap.powf(1.0 / alpha);
    let h = ds / eps;
    let phi = density.cell_measure(alpha, h, n)?;
    let psi = resolvent_measure(&phi, a)?;
    let scale = gap / eps;
    GridFunction::from_cells(ds, psi.into_iter().map(|v| v * scale).collect())
}

/// Renormalized cross kernel
/// `h̃_T(s) = T^{2α₁-α₂}(1-a_T¹)(1-a_T²)/ε_T¹ · Ψ_T^{12}(s/ε_T¹)` with
/// `Ψ^{12} = (δ + ψ²) * φ^{12} * (δ + ψ¹)`.
pub fn renormalized_cross_kernel(
    p: &PreLimitParams,
    ds: f64,
    n: usize,
    density: SelfDensity,
) -> Result<GridFunction> {
    if p.b12 < 0.0 {
        return Err(Error::InvalidParams(format!("b_T^12 = {} < 0", p.b12)));
    }
    let b = &p.base;
    let eps1 = p.eps1();
    let h = ds / eps1;
    let psi1 = resolvent_measure(&density.cell_measure(b.alpha1, h, n)?, p.a1)?;
    let psi2 = resolvent_measure(&density.cell_measure(b.alpha2, h, n)?, p.a2)?;
    let phi12 = b.cross.cell_measure(h, n).scaled(p.b12);
    // Ψ^{12} = φ^{12} + φ^{12}*ψ² + φ^{12}*ψ¹ + (φ^{12}*ψ²)*ψ¹.
    let a = phi12.convolve(&psi2);
    let b1 = phi12.convolve(&psi1);
    let (_, c) = convolve_cells(&a, &psi1, h);
    let scale = p.horizon.powf(2.0 * p.base.alpha1 - p.base.alpha2) * p.gap1() * p.gap2() / eps1;
    let cells: Vec<f64> = phi12
        .cell_averages()
        .iter()
        .zip(&a)
        .zip(&b1)
        .zip(&c)
        .map(|(((w, x), y), z)| (w + x + y + z) * scale)
        .collect();
    GridFunction::from_cells(ds, cells)
}

/// Limit `L₁₂^{(ρ)} = ℓ∞·(K₁ * K₂^{(ρ)})` of the renormalized cross kernel, where
/// `K₂^{(ρ)}(t) = ρ⁻¹K₂(t/ρ)` has scale `δ̃₂ρ^{α₂}` and `ρ = ρ₁₂`.
pub fn limit_cross_kernel(p: &PreLimitParams, ds: f64, n: usize) -> Result<GridFunction> {
    let b = &p.base;
    let rho = b.rho12();
    let k1 = limit_kernel(b.alpha1)?;
    let k2 = MittagLefflerKernel::new(b.alpha2, tail_scale(b.alpha2) * rho.powf(b.alpha2))?;
    let cells = k1.cell_measure(ds, n)?.convolve(&k2.cell_averages(ds, n)?);
    Ok(GridFunction::from_cells(ds, cells)?.scaled(b.ell_inf()))
}

fn cells_upto(f: &GridFunction, g: &GridFunction, t_max: f64) -> Result<usize> {
    if !same_dt(f.dt(), g.dt()) {
        return Err(Error::GridMismatch(format!("dt {} vs {}", f.dt(), g.dt())));
    }
    let m = (t_max / f.dt()).round();
    if !(m >= 1.0) || (m * f.dt() - t_max).abs() > 1e-9 * t_max.max(f.dt()) {
        return Err(Error::GridMismatch(format!("t_max = {t_max} is not a multiple of dt")));
    }
    let m = m as usize;
    if m > f.n_cells() || m > g.n_cells() {
        return Err(Error::GridMismatch(format!("t_max = {t_max} beyond the grid")));
    }
    Ok(m)
}

/// `(∫₀^{t_max}(f-g)²)^{1/2}` on the cell-averaged representation.
pub fn l2_distance(f: &GridFunction, g: &GridFunction, t_max: f64) -> Result<f64> {
    let m = cells_upto(f, g, t_max)?;
    let mut s = crate::stats::NeumaierSum::new();
    for (a, b) in f.cells()[..m].iter().zip(&g.cells()[..m]) {
        s.add((a - b) * (a - b));
    }
    Ok((s.value() * f.dt()).sqrt())
}

/// `∫₀^{t_max}|f-g|` on the cell-averaged representation.
pub fn l1_distance(f: &GridFunction, g: &GridFunction, t_max: f64) -> Result<f64> {
    let m = cells_upto(f, g, t_max)?;
    let mut s = crate::stats::NeumaierSum::new();
    for (a, b) in f.cells()[..m].iter().zip(&g.cells()[..m]) {
        s.add((a - b).abs());
    }
    Ok(s.value() * f.dt())
}

/// `∫₀^{t_max-h}(f(u+h) - f(u))² du` for a shift `h` that is a multiple of `dt`.
pub fn l2_shift_modulus(f: &GridFunction, h: f64) -> Result<f64> {
    if !(h > 0.0) || h >= f.t_max() {
        return Err(Error::Domain(format!("shift h = {h} must lie in (0, t_max)")));
    }
    let m = (h / f.dt()).round();
    if (m * f.dt() - h).abs() > 1e-9 * h {
        return Err(Error::GridMismatch(format!("shift h = {h} is not a multiple of dt")));
    }
    let m = m as usize;
    let c = f.cells();
    let mut s = crate::stats::NeumaierSum::new();
    for j in 0..c.len() - m {
        let d = c[j + m] - c[j];
        s.add(d * d);
    }
    Ok(s.value() * f.dt())
}

/// `(K₁*K₂)(t)/t^{α₁+α₂-1}` as `t ↓ 0` equals `1/(δ̃₁δ̃₂Γ(α₁+α₂))`.
pub fn product_kernel_constant(k1: &MittagLefflerKernel, k2: &MittagLefflerKernel) -> f64 {
    1.0 / (k1.delta_tilde * k2.delta_tilde * gamma(k1.alpha + k2.alpha))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::AtZero;
    use crate::params::{scale_parameters, BaseParams, CrossExciteKernel};
    use rustfft::num_complex::Complex64;

    #[test]
    fn squared_cells() {
        let k = MittagLefflerKernel::new(1.0, 2.0).unwrap();
        let dt = 0.1;
        for (j, c) in k.squared_cell_averages(dt, 10).unwrap().iter().enumerate() {
            let want = ((-(j as f64) * dt).exp() - (-((j + 1) as f64) * dt).exp()) / (4.0 * dt);
            assert!((c - want).abs() < 1e-13, "{c} vs {want}");
        }
        // Leading power law t^{2α-2}/Γ(α)² on a tiny first cell.
        let k = MittagLefflerKernel::new(0.7, 1.0).unwrap();
        let dt = 1e-10;
        let c = k.squared_cell_averages(dt, 1).unwrap()[0];
        let lead = dt.powf(0.4) / (0.4 * crate::special::gamma(0.7).powi(2)) / dt;
        assert!((c / lead - 1.0).abs() < 1e-3);
        assert!(MittagLefflerKernel::new(0.5, 1.0).unwrap().squared_cell_averages(0.1, 2).is_err());
    }

    fn talbot_inverse(f: impl Fn(Complex64) -> Complex64, t: f64, m: usize) -> f64 {
        // Fixed Talbot contour (Abate-Valkó); roundoff grows like e^{0.4m}.
        let r = 2.0 * m as f64 / (5.0 * t);
        let mut sum = 0.5 * (f(Complex64::new(r, 0.0)) * (r * t).exp()).re;
        for k in 1..m {
            let th = k as f64 * std::f64::consts::PI / m as f64;
            let cot = th.cos() / th.sin();
            let s = Complex64::new(r * th * cot, r * th);
            let sigma = th + (th * cot - 1.0) * cot;
            sum += ((s * t).exp() * f(s) * Complex64::new(1.0, sigma)).re;
        }
        sum * r / m as f64
    }

    #[test]
    fn short_time_asymptote() {
        let k = MittagLefflerKernel::new(0.6, 1.0).unwrap();
        let t: f64 = 1e-6;
        let v = ml_kernel_eval(&k, t).unwrap() * t.powf(0.4) * gamma(0.6);
        assert!((v - 1.0).abs() < 1e-3);
    }

    #[test]
    fn exponential_boundary_case() {
        let k = MittagLefflerKernel::new(1.0, 1.0).unwrap();
        assert!((ml_kernel_eval(&k, 1.0).unwrap() - (-1f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn talbot_oracle() {
        let k = MittagLefflerKernel::new(0.75, 2.0).unwrap();
        let want = talbot_inverse(|s| 1.0 / (1.0 + 2.0 * s.powf(0.75)), 0.5, 22);
        let got = ml_kernel_eval(&k, 0.5).unwrap();
        assert!((got / want - 1.0).abs() < 1e-9, "{got} vs {want}");
    }

    #[test]
    fn talbot_oracle_large_argument() {
        // x = t^α/δ̃ > 1 exercises the integral branch.
        let k = MittagLefflerKernel::new(0.6, 0.5).unwrap();
        let want = talbot_inverse(|s| 1.0 / (1.0 + 0.5 * s.powf(0.6)), 7.0, 22);
        let got = ml_kernel_eval(&k, 7.0).unwrap();
        assert!((got / want - 1.0).abs() < 1e-9, "{got} vs {want}");
    }

    #[test]
    fn kernel_rejects_origin() {
        let k = MittagLefflerKernel::new(0.6, 1.0).unwrap();
        assert!(ml_kernel_eval(&k, 0.0).is_err());
        assert!(ml_kernel_eval(&k, -1.0).is_err());
    }

    #[test]
    fn laplace_transform_by_quadrature() {
        let k = MittagLefflerKernel::new(0.7, 1.3).unwrap();
        let e = k.evaluator().unwrap();
        for z in [0.5, 2.0] {
            // ∫ e^{-zt}K(t)dt = ∫ e^{-zt} dF(t) = z∫ e^{-zt}F(t)dt.
            let f = |u: f64| {
                let t = u / (1.0 - u);
                z * (-z * t).exp() * e.cdf(t).unwrap() / ((1.0 - u) * (1.0 - u))
            };
            let q = quadrature::double_exponential::integrate(f, 0.0, 1.0, 1e-13).integral;
            assert!((q - k.laplace(z)).abs() < 1e-9, "z = {z}: {q} vs {}", k.laplace(z));
        }
    }

    #[test]
    fn cdf_tends_to_one() {
        let e = MittagLefflerKernel::new(0.6, 1.0).unwrap().evaluator().unwrap();
        let tail = 1.0 - e.cdf(1e8).unwrap();
        // Tail ~ t^{-α}/(δ̃Γ(1-α)).
        let expect = 1e8f64.powf(-0.6) / gamma(0.4);
        assert!((tail / expect - 1.0).abs() < 1e-3);
    }

    #[test]
    fn first_cell_weight_matches_fractional_integral() {
        let k = MittagLefflerKernel::new(0.6, 1.0).unwrap();
        let dt: f64 = 1e-8;
        let c0 = k.cell_averages(dt, 1).unwrap()[0] * dt;
        let leading = dt.powf(0.6) / gamma(1.6);
        assert!((c0 / leading - 1.0).abs() < 1e-4);
    }

    #[test]
    fn pareto_basics() {
        let p = ParetoKernel::new(0.6).unwrap();
        assert_eq!(pareto_eval(&p, 0.0).unwrap(), 0.6);
        let f = |u: f64| {
            let t = u / (1.0 - u);
            p.eval(t).unwrap() / ((1.0 - u) * (1.0 - u))
        };
        let mass = quadrature::double_exponential::integrate(f, 0.0, 1.0, 1e-12).integral;
        assert!((mass - 1.0).abs() < 1e-8);
        let h = 0.37;
        let cells = p.cell_averages(h, 4);
        for (j, c) in cells.iter().enumerate() {
            let exact = (p.survival(j as f64 * h) - p.survival((j + 1) as f64 * h)) / h;
            assert!((c - exact).abs() < 1e-14);
        }
    }

    #[test]
    fn pareto_laplace_tail_constant() {
        // (1 - φ̂(z))/z^α → Γ(1-α), using 1 - φ̂(z) = z∫e^{-zt}(1+t)^{-α}dt.
        let a = 0.6;
        let mut prev = f64::INFINITY;
        for z in [1e-3, 1e-4, 1e-5] {
            let f = |u: f64| {
                let t = u / (1.0 - u);
                (-z * t).exp() * (1.0 + t).powf(-a) / ((1.0 - u) * (1.0 - u))
            };
            let mut s = 0.0;
            let cuts = [0.0, 0.5, 0.9, 0.99, 0.999, 0.9999, 0.99999, 0.999999, 1.0];
            for w in cuts.windows(2) {
                s += quadrature::double_exponential::integrate(f, w[0], w[1], 1e-14).integral;
            }
            let r = z * s / z.powf(a);
            let err = (r - gamma(0.4)).abs();
            assert!(err < prev);
            prev = err;
        }
        assert!(prev / gamma(0.4) < 0.02);
    }

    #[test]
    fn box_convolution_is_a_triangle() {
        let dt = 0.01;
        let f = GridFunction::from_cells(dt, vec![1.0; 200].into_iter().enumerate().map(|(j, v)| if j < 100 { v } else { 0.0 }).collect()).unwrap();
        let c = convolve(&f, &f).unwrap();
        assert!((c.values()[100] - 1.0).abs() < 1e-6);
        assert!((c.values()[50] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn unit_mass_first_cell_is_identity() {
        let dt = 0.01;
        let mut delta = vec![0.0; 300];
        delta[0] = 1.0 / dt;
        let d = GridFunction::from_cells(dt, delta).unwrap();
        let g = GridFunction::sample(dt, 300, |t| (2.0 * t).sin() + t).unwrap();
        let c = convolve(&d, &g).unwrap();
        for k in 1..300 {
            assert!((c.values()[k] - g.values()[k]).abs() < 2.0 * dt * 3.0);
        }
    }

    #[test]
    fn kernel_product_asymptote() {
        let k1 = MittagLefflerKernel::new(0.6, 1.0).unwrap();
        let k2 = MittagLefflerKernel::new(0.8, 1.0).unwrap();
        let t: f64 = 1e-3;
        let n = 2000;
        let dt = t / n as f64;
        let c = convolve(&k1.grid(dt, n).unwrap(), &k2.grid(dt, n).unwrap()).unwrap();
        let r = c.values()[n] / t.powf(0.4);
        assert!((r * gamma(1.4) - 1.0).abs() < 0.02, "ratio {r}");
        assert!((product_kernel_constant(&k1, &k2) - 1.127_09).abs() < 5e-5);
    }

    #[test]
    fn exponential_resolvent_closed_form() {
        let dt = 1e-3;
        let phi = GridFunction::from_cells(dt, (0..2000).map(|j| (-(j as f64) * dt).exp() * (-(-dt).exp_m1()) / dt).collect()).unwrap();
        let psi = resolvent(&phi, 0.5).unwrap();
        assert!((psi.values()[1000] - 0.5 * (-0.5f64).exp()).abs() < 1e-4);
    }

    #[test]
    fn small_branching_ratio_is_first_generation() {
        let p = ParetoKernel::new(0.6).unwrap();
        let phi = GridFunction::from_cells(0.05, p.cell_averages(0.05, 400)).unwrap();
        let a = 1e-6;
        let psi = resolvent(&phi, a).unwrap();
        let err = psi.cells().iter().zip(phi.cells()).map(|(x, y)| (x - a * y).abs()).fold(0.0, f64::max);
        assert!(err / a <= 1e-3);
    }

    #[test]
    fn resolvent_mass_and_positivity() {
        let h: f64 = 0.5;
        let n = 1 << 15;
        let w = -(-0.2 * h).exp_m1() / h;
        let phi = GridFunction::from_cells(h, (0..n).map(|j| (-(j as f64) * h * 0.2).exp() * w).collect()).unwrap();
        let a = 0.6;
        let psi = resolvent(&phi, a).unwrap();
        assert!(psi.cells().iter().all(|&v| v >= 0.0));
        let mass = psi.integral();
        let discrete_a = a * phi.integral();
        assert!((mass - discrete_a / (1.0 - discrete_a)).abs() < 1e-9);
        assert!(mass <= a / (1.0 - a) + 1e-12);
    }

    #[test]
    fn resolvent_rejects_supercritical() {
        let phi = GridFunction::from_cells(0.1, vec![1.0; 10]).unwrap();
        assert!(matches!(resolvent(&phi, 1.0), Err(Error::Supercritical(_))));
    }

    #[test]
    fn renormalized_mass_is_preserved() {
        // ∫₀^S g_T ≈ a_T·F_K(S); the missing tail vanishes only as S → ∞.
        let (ds, n) = (1.0 / 64.0, 1 << 14);
        let s_max = ds * n as f64;
        let a = 1.0 - 1e3f64.powf(-0.6);
        let g = renormalized_self_kernel(0.6, 1.0, 1e3, ds, n, SelfDensity::Pareto).unwrap();
        let f = limit_kernel(0.6).unwrap().evaluator().unwrap().cdf(s_max).unwrap();
        assert!((g.integral() - a * f).abs() < 1e-3, "{} vs {}", g.integral(), a * f);
        assert!(g.integral() <= a);
    }

    #[test]
    fn renormalized_fourier_modulus() {
        // Long rescaled horizon so that the transform converges.
        let n = 1 << 18;
        let s_max = 2000.0;
        let ds = s_max / n as f64;
        let g = renormalized_self_kernel(0.6, 1.0, 1e4, ds, n, SelfDensity::Pareto).unwrap();
        let xi = 1.0;
        let mut acc = Complex64::new(0.0, 0.0);
        for (j, c) in g.cells().iter().enumerate() {
            let (a, b) = (j as f64 * ds, (j + 1) as f64 * ds);
            // ∫_a^b e^{-iξs} ds
            let w = (Complex64::new(0.0, -xi * b).exp() - Complex64::new(0.0, -xi * a).exp()) / Complex64::new(0.0, -xi);
            acc += w * *c;
        }
        let target = 1.0 / (Complex64::new(1.0, 0.0) + gamma(0.4) * Complex64::new(0.0, xi).powf(0.6));
        assert!((acc.norm() / target.norm() - 1.0).abs() < 0.05, "{} vs {}", acc.norm(), target.norm());
    }

    fn base(b_inf: f64, lambda2: f64) -> BaseParams {
        BaseParams {
            alpha1: 0.6,
            alpha2: 0.8,
            lambda1: 1.0,
            lambda2,
            m1: 1.0,
            m2: 1.0,
            b_inf_12: b_inf,
            cross: CrossExciteKernel::exponential(1.0, 1.0).unwrap(),
        }
    }

    #[test]
    fn zero_coupling_gives_zero_cross_kernel() {
        let p = scale_parameters(&base(0.0, 1.0), 1e2).unwrap();
        let h = renormalized_cross_kernel(&p, 1.0 / 1024.0, 1024, SelfDensity::Pareto).unwrap();
        assert!(h.cells().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cross_kernel_tracks_rho_rescaled_limit() {
        // ρ₁₂ = 2 through λ₂ = 2^{-α₂}.
        let b = base(0.5, 0.5f64.powf(0.8));
        assert!((b.rho12() - 2.0).abs() < 1e-12);
        let n = 1 << 14;
        let ds = 1.0 / n as f64;
        let k1 = limit_kernel(0.6).unwrap().grid(ds, n).unwrap();
        let k2 = limit_kernel(0.8).unwrap().grid(ds, n).unwrap();
        let plain = convolve(&k1, &k2).unwrap().scaled(0.5);
        let mut to_rho = Vec::new();
        let mut to_plain = Vec::new();
        for t in [1e2, 1e3, 1e4] {
            let p = scale_parameters(&b, t).unwrap();
            let h = renormalized_cross_kernel(&p, ds, n, SelfDensity::Pareto).unwrap();
            let lim = limit_cross_kernel(&p, ds, n).unwrap();
            to_rho.push(l2_distance(&h, &lim, 1.0).unwrap());
            to_plain.push(l2_distance(&h, &plain, 1.0).unwrap());
        }
        assert!(to_rho[0] > to_rho[1] && to_rho[1] > to_rho[2], "{to_rho:?}");
        // The unscaled product is the wrong target: the distance turns back up.
        assert!(to_plain[2] > to_plain[1], "{to_plain:?}");
        assert!(to_rho[2] < to_plain[2]);
    }

    #[test]
    fn distances() {
        let f = GridFunction::sample(0.01, 200, |t| t * t).unwrap();
        let g = f.combine(1.0, &GridFunction::sample(0.01, 200, |_| 1.0).unwrap(), -0.25).unwrap();
        assert_eq!(l2_distance(&f, &f, 1.0).unwrap(), 0.0);
        assert!((l2_distance(&f, &g, 1.0).unwrap() - 0.25).abs() < 1e-14);
        assert!((l1_distance(&f, &g, 2.0).unwrap() - 0.5).abs() < 1e-14);
        assert!(l2_distance(&f, &g, 3.0).is_err());
        let c = GridFunction::from_nodes(0.01, vec![2.0; 101], AtZero::Point).unwrap();
        assert_eq!(l2_shift_modulus(&c, 0.1).unwrap(), 0.0);
        assert!(l2_shift_modulus(&c, 1.0).is_err());
    }
}
