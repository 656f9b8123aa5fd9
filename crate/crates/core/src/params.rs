//! Parameter sets of the pre-limit Hawkes model and of the limit system.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::CellMeasure;
use crate::special::gamma;

/// Shape of the cross-excitation density `ψ¹²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CrossShape {
    Exponential { rate: f64 },
}

/// Cross-excitation kernel `ψ¹²` normalized to `∫ψ¹² = l1_norm`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrossExciteKernel {
    pub shape: CrossShape,
    pub l1_norm: f64,
}

impl CrossExciteKernel {
    pub fn exponential(rate: f64, l1_norm: f64) -> Result<Self> {
        let k = Self { shape: CrossShape::Exponential { rate }, l1_norm };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        let CrossShape::Exponential { rate } = self.shape;
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(Error::InvalidParams(format!("cross rate {rate} must be positive")));
        }
        if !(self.l1_norm > 0.0 && self.l1_norm.is_finite()) {
            return Err(Error::InvalidParams(format!("cross L1 norm {} must be positive", self.l1_norm)));
        }
        Ok(())
    }

    pub fn rate(&self) -> f64 {
        let CrossShape::Exponential { rate } = self.shape;
        rate
    }

    pub fn eval(&self, t: f64) -> f64 {
        let r = self.rate();
        self.l1_norm * r * (-r * t).exp()
    }

    /// Exact cell averages over `[j·h, (j+1)·h]`.
    pub fn cell_averages(&self, h: f64, n: usize) -> Vec<f64> {
        let r = self.rate();
        let c = self.l1_norm * (-(-r * h).exp_m1()) / h;
        (0..n).map(|j| c * (-r * h * j as f64).exp()).collect()
    }

    /// Exact cell masses and first moments `h⁻¹∫_{cell j}(s - t_j)ψ¹²(s)ds`.
    pub fn cell_measure(&self, h: f64, n: usize) -> CellMeasure {
        let r = self.rate();
        let y = r * h;
        let m0 = -(-y).exp_m1();
        // 1 - e^{-y}(1+y) = Σ_{k≥2} (-1)^k (k-1) y^k / k!.
        let first = if y > 1e-2 {
            m0 - y * (-y).exp()
        } else {
            let mut term = y;
            let mut sum = 0.0;
            for k in 2..12 {
                term *= -y / k as f64;
                sum += (k - 1) as f64 * term;
            }
            sum
        };
        let w0 = first / y;
        let mut mass = Vec::with_capacity(n);
        let mut moment = Vec::with_capacity(n);
        for j in 0..n {
            let d = self.l1_norm * (-y * j as f64).exp();
            mass.push(d * m0);
            moment.push(d * w0);
        }
        CellMeasure { h, mass, moment }
    }
}

/// Scale-free parameters of the Hawkes family before applying a horizon `T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseParams {
    pub alpha1: f64,
    pub alpha2: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub m1: f64,
    pub m2: f64,
    pub b_inf_12: f64,
    pub cross: CrossExciteKernel,
}

impl BaseParams {
    pub fn validate(&self) -> Result<()> {
        for (name, a) in [("alpha1", self.alpha1), ("alpha2", self.alpha2)] {
            if !(a > 0.0 && a < 1.0) {
                return Err(Error::InvalidParams(format!("{name} = {a} not in (0, 1)")));
            }
        }
        for (name, v) in [("lambda1", self.lambda1), ("lambda2", self.lambda2)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParams(format!("{name} = {v} must be positive")));
            }
        }
        for (name, v) in [("m1", self.m1), ("m2", self.m2), ("b_inf_12", self.b_inf_12)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParams(format!("{name} = {v} must be non-negative")));
            }
        }
        self.cross.validate()
    }

    /// Scale-matching ratio `ρ₁₂ = λ₁^{1/α₁} / λ₂^{1/α₂}` (equal to 1 under scale matching).
    pub fn rho12(&self) -> f64 {
        self.lambda1.powf(1.0 / self.alpha1) / self.lambda2.powf(1.0 / self.alpha2)
    }

    /// Effective coupling `ℓ∞ = b_∞^{12}‖ψ¹²‖₁`.
    pub fn ell_inf(&self) -> f64 {
        self.b_inf_12 * self.cross.l1_norm
    }
}

/// Pre-limit parameters at horizon `T` with the near-critical scalings applied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PreLimitParams {
    pub base: BaseParams,
    pub horizon: f64,
    /// `a_T^i = 1 - λᵢT^{-αᵢ}`.
    pub a1: f64,
    pub a2: f64,
    /// `μ_T^i = mᵢT^{αᵢ-1}`.
    pub mu1: f64,
    pub mu2: f64,
    /// `b_T^{12} = b_∞^{12}T^{α₂-2α₁}`.
    pub b12: f64,
}

impl PreLimitParams {
    /// `1 - a_T^i` computed without cancellation.
    pub fn gap1(&self) -> f64 {
        self.base.lambda1 * self.horizon.powf(-self.base.alpha1)
    }

    pub fn gap2(&self) -> f64 {
        self.base.lambda2 * self.horizon.powf(-self.base.alpha2)
    }

    /// Time-scale `ε_T^i = (1 - a_T^i)^{1/αᵢ}`.
    pub fn eps1(&self) -> f64 {
        self.gap1().powf(1.0 / self.base.alpha1)
    }

    pub fn eps2(&self) -> f64 {
        self.gap2().powf(1.0 / self.base.alpha2)
    }

    /// Mean-intensity bound for component 1: `μ_T¹/(1 - a_T¹)`.
    pub fn mean_bound1(&self) -> f64 {
        self.mu1 / self.gap1()
    }

    /// Two-term mean-intensity bound for component 2.
    pub fn mean_bound2(&self) -> f64 {
        self.mu2 / self.gap2() + self.b12 * self.base.cross.l1_norm / self.gap2() * self.mean_bound1()
    }
}

/// Apply the horizon scalings to the base parameters.
pub fn scale_parameters(base: &BaseParams, horizon: f64) -> Result<PreLimitParams> {
    base.validate()?;
    if !(horizon >= 1.0 && horizon.is_finite()) {
        return Err(Error::InvalidParams(format!("horizon T = {horizon} must be >= 1")));
    }
    let a1 = 1.0 - base.lambda1 * horizon.powf(-base.alpha1);
    let a2 = 1.0 - base.lambda2 * horizon.powf(-base.alpha2);
    for (i, a) in [(1, a1), (2, a2)] {
        if !(a > 0.0) {
            return Err(Error::InvalidParams(format!(
                "a_T^{i} = {a} <= 0: horizon too small for lambda{i}"
            )));
        }
    }
    Ok(PreLimitParams {
        base: *base,
        horizon,
        a1,
        a2,
        mu1: base.m1 * horizon.powf(base.alpha1 - 1.0),
        mu2: base.m2 * horizon.powf(base.alpha2 - 1.0),
        b12: base.b_inf_12 * horizon.powf(base.alpha2 - 2.0 * base.alpha1),
    })
}

/// Scale `δ = Γ(1-α)` of the heavy-tail densities used here, which satisfy
/// `1 - φ̂(z) ~ δ z^α`.
pub fn tail_scale(alpha: f64) -> f64 {
    gamma(1.0 - alpha)
}
