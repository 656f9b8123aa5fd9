//! Deterministic quantities of the limit system: mean profiles, the
//! cross-kernel constant, covariance and decorrelation formulas, the
//! product-versus-triple-convolution ratio, the criticality determinant and the
//! Riccati-Volterra prediction of Laplace functionals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::solve_volterra;
use crate::grid::{same_grid, GridFunction};
use crate::kernels::{convolve_cells, renormalized_cross_kernel, renormalized_self_kernel, MittagLefflerKernel, SelfDensity};
use crate::params::{tail_scale, BaseParams, PreLimitParams};
use crate::special::{gamma, MittagLeffler};
use crate::stats::NeumaierSum;

/// Parameters of the limit system `(V¹, V²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitParams {
    pub alpha1: f64,
    pub alpha2: f64,
    pub delta_tilde1: f64,
    pub delta_tilde2: f64,
    /// Effective coupling `ℓ∞ = b_∞^{12}‖ψ¹²‖₁`.
    pub ell_inf: f64,
    pub m1: f64,
    pub m2: f64,
    /// Stationary levels `V̄¹, V̄²`.
    pub vbar1: f64,
    pub vbar2: f64,
}

impl LimitParams {
    /// `(α₁, α₂) = (0.6, 0.8)`, unit scales, `m = 1`, `ℓ∞ = 0.5`, `V̄ = 1`.
    pub fn reference() -> Self {
        Self {
            alpha1: 0.6,
            alpha2: 0.8,
            delta_tilde1: 1.0,
            delta_tilde2: 1.0,
            ell_inf: 0.5,
            m1: 1.0,
            m2: 1.0,
            vbar1: 1.0,
            vbar2: 1.0,
        }
    }

    /// Unit scales with the given exponents and coupling.
    pub fn unit(alpha1: f64, alpha2: f64, ell_inf: f64) -> Self {
        Self { alpha1, alpha2, ell_inf, ..Self::reference() }
    }

    /// Limit of the pre-limit family: `δ̃₁ = Γ(1-α₁)`, `δ̃₂ = Γ(1-α₂)ρ₁₂^{α₂}`.
    pub fn from_base(b: &BaseParams, vbar1: f64, vbar2: f64) -> Result<Self> {
        b.validate()?;
        let p = Self {
            alpha1: b.alpha1,
            alpha2: b.alpha2,
            delta_tilde1: tail_scale(b.alpha1),
            delta_tilde2: tail_scale(b.alpha2) * b.rho12().powf(b.alpha2),
            ell_inf: b.ell_inf(),
            m1: b.m1,
            m2: b.m2,
            vbar1,
            vbar2,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let Self { alpha1: a1, alpha2: a2, .. } = *self;
        if !(0.5 < a1 && a1 <= a2 && a2 < 1.0) {
            return Err(Error::InvalidParams(format!(
                "need 1/2 < alpha1 <= alpha2 < 1, got ({a1}, {a2})"
            )));
        }
        for (name, v) in [("delta_tilde1", self.delta_tilde1), ("delta_tilde2", self.delta_tilde2)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParams(format!("{name} = {v} must be positive")));
            }
        }
        for (name, v) in [
            ("ell_inf", self.ell_inf),
            ("m1", self.m1),
            ("m2", self.m2),
            ("vbar1", self.vbar1),
            ("vbar2", self.vbar2),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParams(format!("{name} = {v} must be non-negative")));
            }
        }
        Ok(())
    }

    pub fn k1(&self) -> Result<MittagLefflerKernel> {
        MittagLefflerKernel::new(self.alpha1, self.delta_tilde1)
    }

    pub fn k2(&self) -> Result<MittagLefflerKernel> {
        MittagLefflerKernel::new(self.alpha2, self.delta_tilde2)
    }

    /// Exponent `2α₁ + α₂ - 1` of the short-time covariance.
    pub fn cov_exponent(&self) -> f64 {
        2.0 * self.alpha1 + self.alpha2 - 1.0
    }
}

/// How `C_ϱ` scales with the coupling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RhoConvention {
    /// `C_ϱ = ℓ∞·C₀`.
    LinearInEll,
    /// `C_ϱ = √ℓ∞·C₀`.
    SqrtEll,
}

impl RhoConvention {
    pub fn label(&self) -> &'static str {
        match self {
            RhoConvention::LinearInEll => "linear",
            RhoConvention::SqrtEll => "sqrt",
        }
    }
}

impl std::str::FromStr for RhoConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" | "linear_in_ell" => Ok(RhoConvention::LinearInEll),
            "sqrt" | "sqrt_ell" => Ok(RhoConvention::SqrtEll),
            _ => Err(Error::InvalidParams(format!("unknown convention `{s}` (linear|sqrt)"))),
        }
    }
}

/// `C₁₂ = ℓ∞/(δ̃₁δ̃₂Γ(α₁+α₂))`, so that `L₁₂(t) ~ C₁₂t^{α₁+α₂-1}` as `t ↓ 0`.
pub fn c12_constant(p: &LimitParams) -> f64 {
    p.ell_inf / (p.delta_tilde1 * p.delta_tilde2 * gamma(p.alpha1 + p.alpha2))
}

/// Coupling-free factor
/// `C₀ = (√(V̄¹/V̄²)/δ̃₁)·Γ(α₂)√((2α₁-1)(2α₂-1))/(Γ(α₁+α₂)(2α₁+α₂-1))`.
pub fn c_rho_base(p: &LimitParams) -> f64 {
    let (a1, a2) = (p.alpha1, p.alpha2);
    (p.vbar1 / p.vbar2).sqrt() / p.delta_tilde1 * gamma(a2) * ((2.0 * a1 - 1.0) * (2.0 * a2 - 1.0)).sqrt()
        / (gamma(a1 + a2) * p.cov_exponent())
}

/// Decorrelation constant `C_ϱ` in `ϱ(t) ~ C_ϱt^{α₁}`.
pub fn c_rho(p: &LimitParams, conv: RhoConvention) -> f64 {
    let ell = match conv {
        RhoConvention::LinearInEll => p.ell_inf,
        RhoConvention::SqrtEll => p.ell_inf.sqrt(),
    };
    ell * c_rho_base(p)
}

/// Couplings `ℓ∞` of the reference `C_ϱ` table.
pub const CRHO_TABLE_ELLS: [f64; 3] = [0.25, 0.5, 0.75];

/// Reference `C_ϱ(α₁, α₂, ℓ∞)` at unit scales, under [`RhoConvention::SqrtEll`].
pub const CRHO_TABLE: [(f64, f64, [f64; 3]); 8] = [
    (0.55, 0.65, [0.1742, 0.2463, 0.3016]),
    (0.55, 0.80, [0.1778, 0.2514, 0.3079]),
    (0.60, 0.70, [0.2273, 0.3214, 0.3936]),
    (0.60, 0.85, [0.2238, 0.3165, 0.3876]),
    (0.65, 0.75, [0.2547, 0.3602, 0.4412]),
    (0.70, 0.80, [0.2682, 0.3792, 0.4645]),
    (0.75, 0.90, [0.2682, 0.3792, 0.4645]),
    (0.80, 0.95, [0.2660, 0.3762, 0.4608]),
];

/// `C_ϱ·t^{α₁}`.
pub fn correlation_asymptote(p: &LimitParams, t: f64, conv: RhoConvention) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("correlation asymptote at t = {t}")));
    }
    Ok(c_rho(p, conv) * t.powf(p.alpha1))
}

/// Short-time constant of the stationary covariance:
/// `Cov(t)t^{-(2α₁+α₂-1)} → ℓ∞V̄¹/(δ̃₁²δ̃₂Γ(α₁)Γ(α₁+α₂)(2α₁+α₂-1))`.
pub fn covariance_short_time_constant(p: &LimitParams) -> f64 {
    p.ell_inf * p.vbar1
        / (p.delta_tilde1 * p.delta_tilde1 * p.delta_tilde2 * gamma(p.alpha1) * gamma(p.alpha1 + p.alpha2) * p.cov_exponent())
}

/// Primitives of `F(t) = ∫₀^t K`: `F₂(t) = ∫₀^t F` and `F₃(t) = ∫₀^t F₂`.
struct KernelPrimitives {
    alpha: f64,
    delta: f64,
    e2: MittagLeffler,
    e3: MittagLeffler,
    e_a2: MittagLeffler,
    e_a3: MittagLeffler,
}

impl KernelPrimitives {
    fn new(k: &MittagLefflerKernel) -> Result<Self> {
        let a = k.alpha;
        Ok(Self {
            alpha: a,
            delta: k.delta_tilde,
            e2: MittagLeffler::new(a, 2.0)?,
            e3: MittagLeffler::new(a, 3.0)?,
            e_a2: MittagLeffler::new(a, a + 2.0)?,
            e_a3: MittagLeffler::new(a, a + 3.0)?,
        })
    }

    /// `F₂(t) = t·x·E_{α,α+2}(-x) = t(1 - E_{α,2}(-x))`, `x = t^α/δ̃`.
    fn f2(&self, t: f64) -> Result<f64> {
        if t <= 0.0 {
            return Ok(0.0);
        }
        if self.alpha == 1.0 {
            let d = self.delta;
            return Ok(t + d * (-t / d).exp_m1());
        }
        let x = t.powf(self.alpha) / self.delta;
        if x <= 1.0 {
            Ok(t * x * self.e_a2.eval(-x)?)
        } else {
            Ok(t * (1.0 - self.e2.eval(-x)?))
        }
    }

    /// `F₃(t) = t²·x·E_{α,α+3}(-x) = t²(1/2 - E_{α,3}(-x))`.
    fn f3(&self, t: f64) -> Result<f64> {
        if t <= 0.0 {
            return Ok(0.0);
        }
        if self.alpha == 1.0 {
            let d = self.delta;
            return Ok(0.5 * t * t - d * t - d * d * (-t / d).exp_m1());
        }
        let x = t.powf(self.alpha) / self.delta;
        if x <= 1.0 {
            Ok(t * t * x * self.e_a3.eval(-x)?)
        } else {
            Ok(t * t * (0.5 - self.e3.eval(-x)?))
        }
    }
}

/// Univariate profile `m t + m∫₀^t K(t-s)s ds = m(t + F₂(t))` with exact nodes
/// and exact cell averages.
fn self_profile(k: &MittagLefflerKernel, m: f64, dt: f64, n: usize) -> Result<GridFunction> {
    check_grid(dt, n)?;
    if m == 0.0 {
        return Ok(GridFunction::zeros(dt, n));
    }
    let prim = KernelPrimitives::new(k)?;
    let mut values = Vec::with_capacity(n + 1);
    let mut integral = Vec::with_capacity(n + 1);
    for j in 0..=n {
        let t = j as f64 * dt;
        values.push(m * (t + prim.f2(t)?));
        integral.push(m * (0.5 * t * t + prim.f3(t)?));
    }
    let cells = integral.windows(2).map(|w| (w[1] - w[0]) / dt).collect();
    GridFunction::from_parts(dt, values, cells)
}

fn check_grid(dt: f64, n: usize) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) || n == 0 {
        return Err(Error::Domain(format!("grid dt = {dt}, n = {n}")));
    }
    Ok(())
}

/// `b₁(t) = m₁t + m₁∫₀^t K₁(t-s)s ds`.
pub fn b1_profile(p: &LimitParams, dt: f64, n: usize) -> Result<GridFunction> {
    self_profile(&p.k1()?, p.m1, dt, n)
}

/// Univariate part `m₂t + m₂∫₀^t K₂(t-s)s ds` of `b₂`.
pub fn b2_self_profile(p: &LimitParams, dt: f64, n: usize) -> Result<GridFunction> {
    self_profile(&p.k2()?, p.m2, dt, n)
}

/// Cell averages of `K₁*K₂`.
pub fn kernel_product_cells(p: &LimitParams, dt: f64, n: usize) -> Result<Vec<f64>> {
    check_grid(dt, n)?;
    Ok(p.k1()?.cell_measure(dt, n)?.convolve(&p.k2()?.cell_averages(dt, n)?))
}

/// `b₂(t) = m₂t + m₂∫K₂(t-s)s ds + ℓ∞∫₀^t (K₁*K₂)(t-s)b₁(s)ds`.
///
/// The last term is integrated exactly against the primitive of `b₁` on each
/// cell of `K₁*K₂`.
pub fn b2_profile(p: &LimitParams, dt: f64, n: usize) -> Result<GridFunction> {
    let own = b2_self_profile(p, dt, n)?;
    if p.ell_inf == 0.0 || p.m1 == 0.0 {
        return Ok(own);
    }
    let b1 = b1_profile(p, dt, n)?;
    let l = kernel_product_cells(p, dt, n)?;
    let (nodes, cells) = convolve_cells(&l, b1.cells(), dt);
    let cross = GridFunction::from_parts(dt, nodes, cells)?;
    own.combine(1.0, &cross, p.ell_inf)
}

/// Cell averages of the product `K₁(u)·(K₁*K₂)(u)`.
///
/// Interior cells use the product of cell averages. The first cell is corrected
/// by the exact power-law ratio `ab/(a+b-1)` with `a = α₁`, `b = α₁+α₂`.
pub fn covariance_density_cells(p: &LimitParams, dt: f64, n: usize) -> Result<Vec<f64>> {
    let k1 = p.k1()?.cell_averages(dt, n)?;
    let l = kernel_product_cells(p, dt, n)?;
    let mut out: Vec<f64> = k1.iter().zip(&l).map(|(x, y)| x * y).collect();
    let (a, b) = (p.alpha1, p.alpha1 + p.alpha2);
    out[0] *= a * b / (a + b - 1.0);
    Ok(out)
}

/// Drift entering the exact covariance formula.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CovarianceDrift {
    /// `b₁` from [`b1_profile`].
    Profile,
    /// `b₁ ≡ V̄¹`.
    Stationary,
}

/// `Cov(t) = ℓ∞∫₀^t K₁(t-s)(K₁*K₂)(t-s)b₁(s)ds`.
pub fn covariance_exact(p: &LimitParams, dt: f64, n: usize, drift: CovarianceDrift) -> Result<GridFunction> {
    check_grid(dt, n)?;
    if p.ell_inf == 0.0 {
        return Ok(GridFunction::zeros(dt, n));
    }
    let b = match drift {
        CovarianceDrift::Profile => b1_profile(p, dt, n)?,
        CovarianceDrift::Stationary => GridFunction::from_cells(dt, vec![p.vbar1; n])?,
    };
    covariance_with_drift(p, b.cells(), dt, n)
}

fn covariance_with_drift(p: &LimitParams, drift: &[f64], dt: f64, n: usize) -> Result<GridFunction> {
    if p.ell_inf == 0.0 || drift.iter().all(|&v| v == 0.0) {
        return Ok(GridFunction::zeros(dt, n));
    }
    let dens = covariance_density_cells(p, dt, n)?;
    let (nodes, cells) = convolve_cells(&dens, drift, dt);
    Ok(GridFunction::from_parts(dt, nodes, cells)?.scaled(p.ell_inf))
}

/// `F₁(t) = ∫₀^t K₁`, the limit of `E[V^{T,1}_t]` under the renormalization
/// `(1-a_T)/μ_T·λ(T·)` with `μ_T = m₁T^{α₁-1}`.
///
/// The drift of the limit of the renormalized Hawkes intensity is `F₁`, with
/// noise `m₁^{-1/2}∫K₁(t-s)√V¹ dB¹`. Its second component is
/// `F₂ + ℓ∞(m₁/m₂)K₂*F₁ + ℓ∞(√m₁/m₂)∫(K₁*K₂)(t-s)√V¹ dB¹ + m₂^{-1/2}∫K₂√V² dB²`.
pub fn prelimit_mean1(p: &LimitParams, dt: f64, n: usize) -> Result<GridFunction> {
    check_grid(dt, n)?;
    kernel_primitive(&p.k1()?, dt, n)
}

/// `F₂ + ℓ∞(m₁/m₂)∫₀^t (K₁*K₂)`, the limit of `E[V^{T,2}_t]`.
pub fn prelimit_mean2(p: &LimitParams, dt: f64, n: usize) -> Result<GridFunction> {
    check_grid(dt, n)?;
    let own = kernel_primitive(&p.k2()?, dt, n)?;
    if p.ell_inf == 0.0 || p.m1 == 0.0 {
        return Ok(own);
    }
    if p.m2 == 0.0 {
        return Err(Error::InvalidParams("renormalization needs m2 > 0".into()));
    }
    let l = kernel_product_cells(p, dt, n)?;
    let (nodes, cells) = convolve_cells(&l, &vec![1.0; n], dt);
    own.combine(1.0, &GridFunction::from_parts(dt, nodes, cells)?, p.ell_inf * p.m1 / p.m2)
}

/// `Cov(V¹_t, V²_t) = (ℓ∞/m₂)∫₀^t K₁(t-s)(K₁*K₂)(t-s)F₁(s)ds` for the limit of
/// the renormalized Hawkes intensities.
pub fn prelimit_limit_covariance(p: &LimitParams, dt: f64, n: usize) -> Result<GridFunction> {
    check_grid(dt, n)?;
    if p.m2 == 0.0 {
        return Err(Error::InvalidParams("renormalization needs m2 > 0".into()));
    }
    let f1 = prelimit_mean1(p, dt, n)?;
    Ok(covariance_with_drift(p, f1.cells(), dt, n)?.scaled(1.0 / p.m2))
}

/// Exact `Cov(V^{T,1}_t, V^{T,2}_t) = m₂⁻¹∫₀^t g_T¹(t-u)h̃_T(t-u)E[V^{T,1}_u]du`
/// of the renormalized Hawkes intensities, with
/// `E[V^{T,1}_u] = (1-a_T¹) + ∫₀^u g_T¹`.
pub fn prelimit_covariance(p: &PreLimitParams, ds: f64, n: usize, density: SelfDensity) -> Result<GridFunction> {
    check_grid(ds, n)?;
    let b = &p.base;
    if !(b.m2 > 0.0) {
        return Err(Error::InvalidParams("renormalization needs m2 > 0".into()));
    }
    let g1 = renormalized_self_kernel(b.alpha1, b.lambda1, p.horizon, ds, n, density)?;
    let h = renormalized_cross_kernel(p, ds, n, density)?;
    let dens: Vec<f64> = g1.cells().iter().zip(h.cells()).map(|(x, y)| x * y).collect();
    let mut mean = Vec::with_capacity(n);
    let mut acc = NeumaierSum::new();
    for c in g1.cells() {
        // Average of the primitive over the cell, linear interpolation.
        let lo = acc.value();
        acc.add(c * ds);
        mean.push(p.gap1() + 0.5 * (lo + acc.value()));
    }
    let (nodes, cells) = convolve_cells(&dens, &mean, ds);
    Ok(GridFunction::from_parts(ds, nodes, cells)?.scaled(1.0 / b.m2))
}

/// `F = ∫₀^t K` with exact nodes and cell averages.
fn kernel_primitive(k: &MittagLefflerKernel, dt: f64, n: usize) -> Result<GridFunction> {
    let e = k.evaluator()?;
    let prim = KernelPrimitives::new(k)?;
    let mut values = Vec::with_capacity(n + 1);
    let mut integral = Vec::with_capacity(n + 1);
    for j in 0..=n {
        let t = j as f64 * dt;
        values.push(if j == 0 { 0.0 } else { e.cdf(t)? });
        integral.push(prim.f2(t)?);
    }
    let cells = integral.windows(2).map(|w| (w[1] - w[0]) / dt).collect();
    GridFunction::from_parts(dt, values, cells)
}

/// `Cov(t) = ℓ∞V̄¹∫₀^t K₁(u)(K₁*K₂)(u)du`.
pub fn covariance_stationary(p: &LimitParams, dt: f64, n: usize) -> Result<GridFunction> {
    check_grid(dt, n)?;
    let dens = covariance_density_cells(p, dt, n)?;
    let c = p.ell_inf * p.vbar1;
    let mut values = Vec::with_capacity(n + 1);
    let mut acc = NeumaierSum::new();
    values.push(0.0);
    for d in &dens {
        acc.add(d * dt);
        values.push(c * acc.value());
    }
    let cells = values.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    GridFunction::from_parts(dt, values, cells)
}

/// `Var(V¹_t) = ∫K₁²(t-s)E V¹_s ds` and
/// `Var(V²_t) = ∫K₂²(t-s)E V²_s ds + ℓ∞²∫(K₁*K₂)²(t-s)E V¹_s ds`.
///
/// Under [`CovarianceDrift::Stationary`] the means are `V̄¹, V̄²`, otherwise
/// the profiles `b₁, b₂`.
pub fn variance_exact(p: &LimitParams, dt: f64, n: usize, drift: CovarianceDrift) -> Result<(GridFunction, GridFunction)> {
    check_grid(dt, n)?;
    let (m1, m2) = match drift {
        CovarianceDrift::Profile => (b1_profile(p, dt, n)?.cells().to_vec(), b2_profile(p, dt, n)?.cells().to_vec()),
        CovarianceDrift::Stationary => (vec![p.vbar1; n], vec![p.vbar2; n]),
    };
    let grid = |f: &[f64], g: &[f64]| {
        let (nodes, cells) = convolve_cells(f, g, dt);
        GridFunction::from_parts(dt, nodes, cells)
    };
    let v1 = grid(&p.k1()?.squared_cell_averages(dt, n)?, &m1)?;
    let own = grid(&p.k2()?.squared_cell_averages(dt, n)?, &m2)?;
    if p.ell_inf == 0.0 {
        return Ok((v1, own));
    }
    let mut l2: Vec<f64> = kernel_product_cells(p, dt, n)?.iter().map(|x| x * x).collect();
    // Average of u^{2b} against the squared average of u^b on the first cell.
    let b = p.alpha1 + p.alpha2 - 1.0;
    l2[0] *= (b + 1.0).powi(2) / (2.0 * b + 1.0);
    let v2 = own.combine(1.0, &grid(&l2, &m1)?, p.ell_inf * p.ell_inf)?;
    Ok((v1, v2))
}

/// `ϱ(t) = Cov(V¹_t, V²_t)/√(Var V¹_t·Var V²_t)` from the exact moments; zero at `t = 0`.
pub fn correlation_exact(p: &LimitParams, dt: f64, n: usize, drift: CovarianceDrift) -> Result<GridFunction> {
    let c = covariance_exact(p, dt, n, drift)?;
    let (v1, v2) = variance_exact(p, dt, n, drift)?;
    let r = |c: f64, a: f64, b: f64| if a > 0.0 && b > 0.0 { c / (a * b).sqrt() } else { 0.0 };
    let values = (0..=n).map(|k| r(c.values()[k], v1.values()[k], v2.values()[k])).collect::<Vec<_>>();
    let cells = values.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    GridFunction::from_parts(dt, values, cells)
}

/// Limit constant of `(K₁*K₁*K₂)(t)/∫₀^t K₁(K₁*K₂)` as stated:
/// `Γ(α₁)²Γ(α₂)(2α₁+α₂-1)/(Γ(α₁+α₂)Γ(2α₁+α₂))`.
pub fn product_vs_triple_constant_stated(alpha1: f64, alpha2: f64) -> f64 {
    let g = 2.0 * alpha1 + alpha2 - 1.0;
    gamma(alpha1).powi(2) * gamma(alpha2) * g / (gamma(alpha1 + alpha2) * gamma(2.0 * alpha1 + alpha2))
}

/// Limit constant implied by the short-time asymptotics of the kernels:
/// `Γ(α₁)Γ(α₁+α₂)(2α₁+α₂-1)/Γ(2α₁+α₂)`.
pub fn product_vs_triple_constant_derived(alpha1: f64, alpha2: f64) -> f64 {
    let g = 2.0 * alpha1 + alpha2 - 1.0;
    gamma(alpha1) * gamma(alpha1 + alpha2) * g / gamma(2.0 * alpha1 + alpha2)
}

/// Outcome of [`product_vs_triple_ratio`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TripleRatio {
    pub t: f64,
    pub ratio: f64,
    pub constant_stated: f64,
    pub constant_derived: f64,
    /// `t ≤ 1e-2`, where the power laws dominate.
    pub asymptotic: bool,
}

/// `(K₁*K₁*K₂)(t)/∫₀^t K₁(u)(K₁*K₂)(u)du` on `n` cells of `[0, t]`.
pub fn product_vs_triple_ratio(p: &LimitParams, t: f64, n: usize) -> Result<TripleRatio> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("ratio at t = {t}")));
    }
    let dt = t / n as f64;
    let l = kernel_product_cells(p, dt, n)?;
    let triple = p.k1()?.cell_measure(dt, n)?.convolve(&l);
    // Node value at t from the last two cell averages of a smooth function.
    let at_t = 1.5 * triple[n - 1] - 0.5 * triple[n - 2];
    let dens = covariance_density_cells(p, dt, n)?;
    let denom = crate::stats::compensated_sum(&dens) * dt;
    Ok(TripleRatio {
        t,
        ratio: at_t / denom,
        constant_stated: product_vs_triple_constant_stated(p.alpha1, p.alpha2),
        constant_derived: product_vs_triple_constant_derived(p.alpha1, p.alpha2),
        asymptotic: t <= 1e-2,
    })
}

/// `(1-a₁)(1-a₂) - b₁₂b₂₁`; positive when the coupled mean system is stable.
pub fn criticality_determinant(a1: f64, a2: f64, b12: f64, b21: f64) -> Result<f64> {
    for a in [a1, a2] {
        if !(a > 0.0 && a < 1.0) {
            return Err(Error::Domain(format!("branching ratio {a} not in (0, 1)")));
        }
    }
    if !(b12 >= 0.0 && b21 >= 0.0) {
        return Err(Error::Domain("cross amplitudes must be non-negative".into()));
    }
    Ok((1.0 - a1) * (1.0 - a2) - b12 * b21)
}

/// Horizon `T₀` beyond which `a_T^i = 1 - λᵢT^{-αᵢ}` with fixed `b₁₂b₂₁ > 0`
/// makes the determinant negative: `T₀ = (λ₁λ₂/(b₁₂b₂₁))^{1/(α₁+α₂)}`.
pub fn criticality_crossover(lambda1: f64, lambda2: f64, alpha1: f64, alpha2: f64, b12: f64, b21: f64) -> Option<f64> {
    let b = b12 * b21;
    (b > 0.0).then(|| (lambda1 * lambda2 / b).powf(1.0 / (alpha1 + alpha2)))
}

/// Solve `ψ(t_k) + u(t_k) = Σ_{j<k} K̄_{k-1-j}ψ(t_j)²·dt` by explicit forward
/// stepping, where `K̄` are the cell averages of the kernel grid.
pub fn riccati_volterra_solve(k: &GridFunction, u: &GridFunction, bound: f64) -> Result<GridFunction> {
    same_grid(k, u)?;
    let dt = u.dt();
    let n = u.values().len();
    let mut kern = Vec::with_capacity(n);
    kern.push(0.0);
    kern.extend(k.cells().iter().map(|c| c * dt));
    let uv = u.values();
    let mut bad = None;
    let psi = solve_volterra(n, &kern, |m, s| {
        let y = -uv[m] + s;
        if bad.is_none() && !(y.abs() <= bound) {
            bad = Some((m, y));
        }
        let y = if y.is_finite() { y.clamp(-bound, bound) } else { 0.0 };
        (y, y * y)
    });
    if let Some((index, value)) = bad {
        return Err(Error::Divergence { index, value });
    }
    GridFunction::from_nodes(dt, psi, crate::grid::AtZero::Point)
}

/// Sign applied in `exp(∓∫₀¹ψ(t)b(t)dt)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaplaceSign {
    /// `exp(-∫ψb)`.
    AsWritten,
    /// `exp(+∫ψb)`.
    Flipped,
}

impl LaplaceSign {
    /// Pick the sign reproducing the `K ≡ 0` case, where `X = b` and the
    /// Laplace functional is `exp(-∫ub)` exactly.
    pub fn calibrate() -> Result<Self> {
        let n = 64;
        let dt = 1.0 / n as f64;
        let zero = GridFunction::zeros(dt, n);
        let u = GridFunction::sample(dt, n, |_| 0.7)?;
        let b = GridFunction::sample(dt, n, |t| 1.0 + t)?;
        let psi = reverse_time(&riccati_volterra_solve(&zero, &u, 1e12)?)?;
        let exact = (-0.7 * 1.5f64).exp();
        for sign in [LaplaceSign::AsWritten, LaplaceSign::Flipped] {
            let v = laplace_exponent(&psi, &b, sign)?.exp();
            if (v - exact).abs() < 1e-9 {
                return Ok(sign);
            }
        }
        Err(Error::Domain("no sign reproduces the K = 0 Laplace functional".into()))
    }
}

/// `ψ(t) := ψ_u(1 - t)` on the same grid.
pub fn reverse_time(f: &GridFunction) -> Result<GridFunction> {
    let mut v = f.values().to_vec();
    v.reverse();
    let mut c = f.cells().to_vec();
    c.reverse();
    GridFunction::from_parts(f.dt(), v, c)
}

fn laplace_exponent(psi: &GridFunction, b: &GridFunction, sign: LaplaceSign) -> Result<f64> {
    same_grid(psi, b)?;
    let prod = psi.product(b)?;
    let s = prod.integral();
    Ok(match sign {
        LaplaceSign::AsWritten => -s,
        LaplaceSign::Flipped => s,
    })
}

/// Prediction `exp(∓∫₀¹ψ(t)b(t)dt)` with a trapezoid integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LaplacePrediction {
    pub value: f64,
    pub sign: LaplaceSign,
    /// A value above 1 for `b ≥ 0` means the convention is wrong.
    pub convention_error: bool,
}

pub fn laplace_functional_prediction(psi: &GridFunction, b: &GridFunction, sign: LaplaceSign) -> Result<LaplacePrediction> {
    let value = laplace_exponent(psi, b, sign)?.exp();
    let b_nonneg = b.values().iter().all(|&v| v >= 0.0);
    Ok(LaplacePrediction { value, sign, convention_error: b_nonneg && value > 1.0 + 1e-12 })
}

/// Exact Laplace functional of the Volterra-Euler scheme
/// `X_k = b_k + Σ_{j<k} w_{k-1-j}√(X_j)·ΔW_j` as long as the state stays
/// non-negative:
/// `E[exp(-Σ_{k=1}^n u_k X_k dt)] = exp(Σ_{k=0}^n θ_k b_k)` with
/// `θ_k = -u_k dt·1{k≥1} + (dt/2)(Σ_{i>k} θ_i w_{i-1-k})²`.
///
/// This is the discrete form of the affine Riccati-Volterra equation
/// `ψ = K*(-u + ψ²/2)`. Returns `θ`.
pub fn riccati_affine_discrete(weights: &[f64], u: &[f64], dt: f64) -> Result<Vec<f64>> {
    let n1 = u.len();
    if weights.len() + 1 < n1 {
        return Err(Error::GridMismatch(format!("{} weights for {} nodes", weights.len(), n1)));
    }
    // Reverse time, r = n - k, so the sum over i > k becomes causal.
    let mut kern = Vec::with_capacity(n1);
    kern.push(0.0);
    kern.extend_from_slice(&weights[..n1 - 1]);
    let mut theta = solve_volterra(n1, &kern, |r, c| {
        let k = n1 - 1 - r;
        let drive = if k >= 1 { -u[k] * dt } else { 0.0 };
        let th = drive + 0.5 * dt * c * c;
        (th, th)
    });
    theta.reverse();
    Ok(theta)
}

/// `exp(Σ_k θ_k b_k)` for the discrete affine dual of the Euler scheme.
pub fn affine_laplace_prediction(weights: &[f64], u: &[f64], b: &[f64], dt: f64) -> Result<f64> {
    if b.len() != u.len() {
        return Err(Error::GridMismatch(format!("{} drift nodes for {} nodes", b.len(), u.len())));
    }
    let theta = riccati_affine_discrete(weights, u, dt)?;
    let mut s = NeumaierSum::new();
    for (t, x) in theta.iter().zip(b) {
        s.add(t * x);
    }
    Ok(s.value().exp())
}
