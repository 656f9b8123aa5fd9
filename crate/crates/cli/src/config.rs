//! JSON experiment configuration with auditable defaults.
//!
//! Every field has a default, so `{}` is the reference configuration. Unknown
//! fields are rejected at every level.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use rhl_core::analytics::{LimitParams, RhoConvention};
use rhl_core::hawkes::{IntensityMode, DEFAULT_EVENT_CAP};
use rhl_core::params::{BaseParams, CrossExciteKernel};
use rhl_core::sve::{Clipping, WeightRule, DEFAULT_LAG_LEVELS};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Worker threads; `None` uses `RHL_THREADS` or all cores.
    pub threads: Option<usize>,
    pub out: PathBuf,
    pub convention: RhoConvention,
    /// Limit system for the SVE and deterministic checks.
    pub limit: LimitParams,
    /// Pre-limit Hawkes family.
    pub base: BaseParams,
    pub crho: CrhoConfig,
    pub kernels: KernelConfig,
    pub sve: SveConfig,
    pub riccati: RiccatiConfig,
    pub hawkes: HawkesConfig,
    pub tolerances: Tolerances,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 20_240_601,
            threads: None,
            out: PathBuf::from("out"),
            convention: RhoConvention::SqrtEll,
            limit: LimitParams::reference(),
            base: reference_base(),
            crho: CrhoConfig::default(),
            kernels: KernelConfig::default(),
            sve: SveConfig::default(),
            riccati: RiccatiConfig::default(),
            hawkes: HawkesConfig::default(),
            tolerances: Tolerances::default(),
        }
    }
}

/// `(α₁, α₂) = (0.6, 0.8)`, `λ = m = 1`, `b_∞¹² = 0.5`, unit exponential `ψ¹²`.
pub fn reference_base() -> BaseParams {
    BaseParams {
        alpha1: 0.6,
        alpha2: 0.8,
        lambda1: 1.0,
        lambda2: 1.0,
        m1: 1.0,
        m2: 1.0,
        b_inf_12: 0.5,
        cross: CrossExciteKernel::exponential(1.0, 1.0).expect("valid reference kernel"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CrhoConfig {
    /// Couplings of the table columns.
    pub ells: Vec<f64>,
    /// Couplings bracketing the quoted linear-convention range.
    pub range_ells: [f64; 2],
    pub range_expected: [f64; 2],
}

impl Default for CrhoConfig {
    fn default() -> Self {
        Self { ells: vec![0.25, 0.5, 0.75], range_ells: [0.3, 0.6], range_expected: [0.14, 0.28] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelConfig {
    pub horizons: Vec<f64>,
    /// Cells on `[0, 1]`.
    pub n_cells: usize,
    pub shift_horizon: f64,
    pub shift_window: [f64; 2],
    pub shift_points: usize,
    /// `t` of the cross-kernel and product-vs-triple asymptotes.
    pub asymptote_t: f64,
    pub asymptote_cells: usize,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            horizons: vec![1e2, 1e3, 1e4],
            n_cells: 1 << 18,
            shift_horizon: 1e4,
            shift_window: [1e-3, 1e-1],
            shift_points: 9,
            asymptote_t: 1e-3,
            asymptote_cells: 1 << 14,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SveConfig {
    /// Steps on `[0, 1]`.
    pub n_steps: usize,
    pub n_paths: usize,
    pub weight_rule: WeightRule,
    pub clipping: Clipping,
    pub lag_levels: u32,
    pub cov_times: Vec<f64>,
    pub rho_window: [f64; 2],
    /// Raw paths written by `simulate-sve`.
    pub write_paths: usize,
}

impl Default for SveConfig {
    fn default() -> Self {
        Self {
            n_steps: 1024,
            n_paths: 10_000,
            weight_rule: WeightRule::default(),
            clipping: Clipping::default(),
            lag_levels: DEFAULT_LAG_LEVELS,
            cov_times: vec![0.1, 0.25, 0.5, 1.0],
            rho_window: [1e-2, 1e-1],
            write_paths: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RiccatiConfig {
    pub alpha: f64,
    pub delta_tilde: f64,
    pub u: f64,
    pub b: f64,
    pub n_steps: usize,
    pub n_paths: usize,
}

impl Default for RiccatiConfig {
    fn default() -> Self {
        Self { alpha: 0.6, delta_tilde: 1.0, u: 0.5, b: 1.0, n_steps: 1024, n_paths: 10_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HawkesConfig {
    pub horizon: f64,
    pub replications: usize,
    pub mode: IntensityMode,
    pub event_cap: usize,
    /// Cells of the renormalized intensity grid on `[0, 1]`.
    pub grid_cells: usize,
    pub trend_horizons: Vec<f64>,
    pub trend_replications: usize,
    pub trend_mode: IntensityMode,
    pub trend_time: f64,
    /// Cells of the exact pre-limit covariance quadrature on `[0, trend_time]`.
    pub trend_quadrature_cells: usize,
}

impl Default for HawkesConfig {
    fn default() -> Self {
        Self {
            horizon: 500.0,
            replications: 200,
            mode: IntensityMode::Exact,
            event_cap: DEFAULT_EVENT_CAP,
            grid_cells: 64,
            trend_horizons: vec![100.0, 300.0, 1000.0],
            trend_replications: 8000,
            trend_mode: IntensityMode::SumOfExponentials,
            trend_time: 0.5,
            trend_quadrature_cells: 1 << 14,
        }
    }
}

/// Acceptance tolerances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub crho_table: f64,
    pub crho_range: f64,
    pub cross_asymptote_rel: f64,
    pub triple_rel: f64,
    pub sweep_factor: f64,
    pub shift_self: f64,
    pub shift_cross: f64,
    pub sve_z: f64,
    pub rho_slope: f64,
    pub cross_increment: f64,
    pub self_increment: f64,
    pub laplace_z: f64,
    pub hawkes_z: f64,
    pub trend_gap: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            crho_table: 5e-4,
            crho_range: 0.01,
            cross_asymptote_rel: 0.02,
            triple_rel: 0.02,
            sweep_factor: 5.0,
            shift_self: 0.05,
            shift_cross: 0.1,
            sve_z: 3.0,
            rho_slope: 0.15,
            cross_increment: 0.15,
            self_increment: 0.1,
            laplace_z: 3.0,
            hawkes_z: 3.0,
            trend_gap: 0.5,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: Self = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks that do not need a run.
    pub fn validate(&self) -> anyhow::Result<()> {
        self.limit.validate()?;
        self.base.validate()?;
        if self.sve.n_steps < 2 || self.riccati.n_steps < 2 {
            bail!("SVE and Riccati grids need at least two steps");
        }
        if self.sve.lag_levels < 3 {
            bail!("lag_levels must be at least 3");
        }
        if 1usize << (self.sve.lag_levels - 1) >= self.sve.n_steps {
            bail!("longest lag exceeds the SVE grid");
        }
        for &t in &self.sve.cov_times {
            if !(t > 0.0 && t <= 1.0) {
                bail!("cov_times must lie in (0, 1], got {t}");
            }
        }
        let [lo, hi] = self.sve.rho_window;
        if !(0.0 < lo && lo < hi && hi <= 1.0) {
            bail!("rho_window must satisfy 0 < lo < hi <= 1");
        }
        let [lo, hi] = self.kernels.shift_window;
        if !(0.0 < lo && lo < hi && hi < 1.0) || self.kernels.shift_points < 3 {
            bail!("shift_window must satisfy 0 < lo < hi < 1 with at least 3 points");
        }
        if !(self.kernels.n_cells.is_power_of_two()) {
            bail!("kernels.n_cells must be a power of two");
        }
        if self.hawkes.horizon < 1.0 || self.hawkes.trend_horizons.iter().any(|&t| t < 1.0) {
            bail!("Hawkes horizons must be >= 1");
        }
        if !(self.hawkes.trend_time > 0.0 && self.hawkes.trend_time < 1.0) {
            bail!("trend_time must lie in (0, 1)");
        }
        if !(self.riccati.u >= 0.0) {
            bail!("riccati.u must be non-negative");
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, leaving out the output directory
    /// and thread count, which do not affect results.
    pub fn hash(&self) -> String {
        let canonical = Self { threads: None, out: PathBuf::new(), ..self.clone() };
        let json = serde_json::to_string(&canonical).expect("config serializes");
        format!("{:x}", Sha256::digest(json.as_bytes()))
    }
}
