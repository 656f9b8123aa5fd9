//! Gamma and two-parameter Mittag-Leffler functions on the negative real axis.
//!
//! `E_{α,β}(x) = Σ_{k≥0} x^k / Γ(αk+β)` is summed directly for `|x| ≤ 1`. For
//! larger `|x|` the power series suffers catastrophic cancellation (terms of
//! size `exp(|x|^{1/α})`), so the real integral representation
//!
//! ```text
//! E_{α,β}(z) = ∫_0^∞ (1/(απ)) χ^{(1-β)/α} e^{-χ^{1/α}}
//!              (χ sin(π(1-β)) - z sin(π(1-β+α))) / (χ² - 2χz cos(απ) + z²) dχ
//! ```
//!
//! valid for `0 < α < 1`, `β < 1 + α`, `z < 0` is integrated by tanh-sinh
//! quadrature after the substitution `χ = y^α`. Larger `β` are reduced with
//! `E_{α,β}(x) = (E_{α,β-α}(x) - 1/Γ(β-α)) / x`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::stats::NeumaierSum;

/// Largest `|x|` accepted by the evaluator.
pub const MAX_ABS_ARG: f64 = 1e100;

const SERIES_RADIUS: f64 = 1.0;
const Y_CUTOFF: f64 = 60.0;

/// Gamma function.
pub fn gamma(x: f64) -> f64 {
    statrs::function::gamma::gamma(x)
}

/// Natural log of the gamma function for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

/// Reciprocal gamma function, zero at the poles `0, -1, -2, ...`.
pub fn rgamma(x: f64) -> f64 {
    if x <= 0.0 && x == x.round() {
        return 0.0;
    }
    if x > 170.0 {
        return (-ln_gamma(x)).exp();
    }
    1.0 / gamma(x)
}

/// Evaluator for `E_{α,β}` with cached series coefficients.
#[derive(Debug, Clone)]
pub struct MittagLeffler {
    alpha: f64,
    beta: f64,
    coeffs: Vec<f64>,
}

impl MittagLeffler {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) || !alpha.is_finite() {
            return Err(Error::Domain(format!("alpha = {alpha} not in (0, 1]")));
        }
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::Domain(format!("beta = {beta} must be positive")));
        }
        let mut coeffs = Vec::new();
        let mut k = 0usize;
        loop {
            let c = rgamma(alpha * k as f64 + beta);
            coeffs.push(c);
            if k > 4 && c.abs() < 1e-22 {
                break;
            }
            k += 1;
        }
        Ok(Self { alpha, beta, coeffs })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// `E_{α,β}(x)` for `x ≤ 0`.
    pub fn eval(&self, x: f64) -> Result<f64> {
        if x.is_nan() || x > 0.0 {
            return Err(Error::Domain(format!(
                "Mittag-Leffler argument x = {x} must be <= 0"
            )));
        }
        if x < -MAX_ABS_ARG {
            return Err(Error::Overflow(x));
        }
        if x >= -SERIES_RADIUS {
            return Ok(self.series(x));
        }
        Ok(ml_large(self.alpha, self.beta, x))
    }

    fn series(&self, x: f64) -> f64 {
        let mut sum = NeumaierSum::new();
        let mut p = 1.0;
        for &c in &self.coeffs {
            sum.add(c * p);
            p *= x;
            if p == 0.0 {
                break;
            }
        }
        sum.value()
    }
}

/// `E_{α,β}(x)` for `α ∈ (0,1]`, `β > 0`, `x ≤ 0`.
pub fn mittag_leffler(alpha: f64, beta: f64, x: f64) -> Result<f64> {
    MittagLeffler::new(alpha, beta)?.eval(x)
}

fn ml_large(alpha: f64, beta: f64, x: f64) -> f64 {
    if alpha == 1.0 {
        return ml_alpha_one(beta, x);
    }
    if beta >= 1.0 + alpha {
        let lower = ml_large(alpha, beta - alpha, x);
        return (lower - rgamma(beta - alpha)) / x;
    }
    ml_integral(alpha, beta, x)
}

fn ml_integral(alpha: f64, beta: f64, z: f64) -> f64 {
    let sin_a = (PI * (1.0 - beta)).sin();
    let sin_b = (PI * (1.0 - beta + alpha)).sin();
    let cos_ap = (PI * alpha).cos();
    // After χ = y^α the integrand behaves like y^{α-β} at the origin; the
    // further substitution y = w^{1/γ}, γ = α - β + 1, makes it bounded.
    let gam = alpha - beta + 1.0;
    let integrand = |w: f64| -> f64 {
        if w <= 0.0 {
            return if gam == 1.0 { -z * sin_b / (z * z) / PI } else { 0.0 };
        }
        let y = w.powf(1.0 / gam);
        let ya = y.powf(alpha);
        let num = ya * sin_a - z * sin_b;
        let den = ya * ya - 2.0 * ya * z * cos_ap + z * z;
        (-y).exp() * num / den / (PI * gam)
    };
    let y0 = (-z).powf(1.0 / alpha);
    let mut breaks = vec![0.0];
    if y0 < Y_CUTOFF {
        for b in [0.5 * y0, y0, 2.0 * y0] {
            if b < Y_CUTOFF {
                breaks.push(b.powf(gam));
            }
        }
    }
    breaks.push(Y_CUTOFF.powf(gam));
    let mut sum = NeumaierSum::new();
    for w in breaks.windows(2) {
        let out = quadrature::double_exponential::integrate(integrand, w[0], w[1], 1e-17);
        sum.add(out.integral);
    }
    sum.value()
}

fn ml_alpha_one(beta: f64, x: f64) -> f64 {
    if beta == 1.0 {
        return x.exp();
    }
    if beta < 1.0 {
        return rgamma(beta) + x * ml_alpha_one(beta + 1.0, x);
    }
    // E_{1,β}(x) = Γ(β-1)^{-1} ∫_0^1 e^{xs} (1-s)^{β-2} ds for β > 1; with
    // 1 - s = v^{1/(β-1)} the integrand becomes e^{xs}/(β-1).
    let p = beta - 1.0;
    let f = |v: f64| (x * (1.0 - v.powf(1.0 / p))).exp() / p;
    let mut sum = NeumaierSum::new();
    let split = (1.0 - 1.0 / -x).max(0.5).powf(p);
    for (a, b) in [(0.0, split), (split, 1.0)] {
        sum.add(quadrature::double_exponential::integrate(f, a, b, 1e-18).integral);
    }
    sum.value() * rgamma(beta - 1.0)
}
