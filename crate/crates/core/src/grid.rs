//! Uniformly sampled functions on `[0, t_max]`.
//!
//! A [`GridFunction`] carries nodal samples `values[k] ≈ f(k·dt)` and the cell
//! averages `cells[j] = dt⁻¹∫_{j·dt}^{(j+1)·dt} f`. For kernels with an
//! integrable singularity at the origin, `values[0]` stores the first cell
//! average instead of the (infinite) pointwise value. Constructors that know
//! the exact cell integrals store them; otherwise cells are derived from the
//! nodes by the trapezoid rule.

use std::io::Write;

use crate::error::{Error, Result};

/// Meaning of `values[0]` when building from nodal samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AtZero {
    /// `values[0] = f(0)`.
    Point,
    /// `values[0]` is the average of `f` over the first cell.
    CellAverage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    dt: f64,
    values: Vec<f64>,
    cells: Vec<f64>,
}

impl GridFunction {
    /// Build from nodal samples, deriving cell averages by the trapezoid rule.
    pub fn from_nodes(dt: f64, values: Vec<f64>, at_zero: AtZero) -> Result<Self> {
        check_basic(dt, &values)?;
        let mut cells: Vec<f64> = values.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        if at_zero == AtZero::CellAverage {
            cells[0] = values[0];
        }
        Ok(Self { dt, values, cells })
    }

    /// Build from cell averages; nodes are midpoints of adjacent cells and
    /// `values[0]` holds the first cell average.
    pub fn from_cells(dt: f64, cells: Vec<f64>) -> Result<Self> {
        if cells.is_empty() {
            return Err(Error::GridMismatch("need at least one cell".into()));
        }
        let n = cells.len();
        let mut values = Vec::with_capacity(n + 1);
        values.push(cells[0]);
        for k in 1..n {
            values.push(0.5 * (cells[k - 1] + cells[k]));
        }
        values.push(cells[n - 1]);
        check_basic(dt, &values)?;
        Ok(Self { dt, values, cells })
    }

    /// Build from both representations when both are known exactly.
    pub fn from_parts(dt: f64, values: Vec<f64>, cells: Vec<f64>) -> Result<Self> {
        check_basic(dt, &values)?;
        if cells.len() + 1 != values.len() {
            return Err(Error::GridMismatch(format!(
                "{} cells for {} nodes",
                cells.len(),
                values.len()
            )));
        }
        if cells.iter().any(|c| !c.is_finite()) {
            return Err(Error::Domain("non-finite cell average".into()));
        }
        Ok(Self { dt, values, cells })
    }

    /// Sample `f` at the nodes (`f(0)` must be finite).
    pub fn sample(dt: f64, n_cells: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = (0..=n_cells).map(|k| f(k as f64 * dt)).collect();
        Self::from_nodes(dt, values, AtZero::Point)
    }

    pub fn zeros(dt: f64, n_cells: usize) -> Self {
        Self { dt, values: vec![0.0; n_cells + 1], cells: vec![0.0; n_cells] }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn cells(&self) -> &[f64] {
        &self.cells
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn t_max(&self) -> f64 {
        self.dt * self.n_cells() as f64
    }

    pub fn t(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.values.len()).map(|k| self.t(k)).collect()
    }

    /// Multiply values and cells by a constant.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            dt: self.dt,
            values: self.values.iter().map(|v| v * c).collect(),
            cells: self.cells.iter().map(|v| v * c).collect(),
        }
    }

    /// Restrict to the first `n_cells` cells.
    pub fn truncated(&self, n_cells: usize) -> Result<Self> {
        if n_cells == 0 || n_cells > self.n_cells() {
            return Err(Error::GridMismatch(format!(
                "cannot truncate {} cells to {n_cells}",
                self.n_cells()
            )));
        }
        Ok(Self {
            dt: self.dt,
            values: self.values[..=n_cells].to_vec(),
            cells: self.cells[..n_cells].to_vec(),
        })
    }

    /// Pointwise linear combination `a·self + b·other` on a common grid.
    pub fn combine(&self, a: f64, other: &GridFunction, b: f64) -> Result<Self> {
        same_grid(self, other)?;
        Ok(Self {
            dt: self.dt,
            values: self.values.iter().zip(&other.values).map(|(x, y)| a * x + b * y).collect(),
            cells: self.cells.iter().zip(&other.cells).map(|(x, y)| a * x + b * y).collect(),
        })
    }

    /// Pointwise product; cells are the products of cell averages.
    pub fn product(&self, other: &GridFunction) -> Result<Self> {
        same_grid(self, other)?;
        Ok(Self {
            dt: self.dt,
            values: self.values.iter().zip(&other.values).map(|(x, y)| x * y).collect(),
            cells: self.cells.iter().zip(&other.cells).map(|(x, y)| x * y).collect(),
        })
    }

    /// `∫₀^{t_max} f` from the cell averages.
    pub fn integral(&self) -> f64 {
        crate::stats::compensated_sum(&self.cells) * self.dt
    }

    /// Running integral `F(t_k) = ∫₀^{t_k} f` at every node.
    pub fn cumulative_integral(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.values.len());
        let mut acc = crate::stats::NeumaierSum::new();
        out.push(0.0);
        for c in &self.cells {
            acc.add(c * self.dt);
            out.push(acc.value());
        }
        out
    }

    /// Coarsen by an integer factor, averaging cells and subsampling nodes.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || !self.n_cells().is_multiple_of(factor) {
            return Err(Error::GridMismatch(format!(
                "factor {factor} does not divide {} cells",
                self.n_cells()
            )));
        }
        let cells: Vec<f64> = self
            .cells
            .chunks(factor)
            .map(|c| crate::stats::compensated_sum(c) / factor as f64)
            .collect();
        let mut values: Vec<f64> = self.values.iter().step_by(factor).copied().collect();
        values[0] = cells[0];
        Self::from_parts(self.dt * factor as f64, values, cells)
    }

    /// Write `t,value` CSV with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,value")?;
        for (k, v) in self.values.iter().enumerate() {
            writeln!(w, "{:.16e},{:.16e}", self.t(k), v)?;
        }
        Ok(())
    }
}

fn check_basic(dt: f64, values: &[f64]) -> Result<()> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Domain(format!("grid step dt = {dt} must be positive")));
    }
    if values.len() < 2 {
        return Err(Error::GridMismatch("a grid function needs at least two nodes".into()));
    }
    if let Some(k) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("non-finite value at node {k}")));
    }
    Ok(())
}

/// Check that two grid functions share step and length.
pub fn same_grid(f: &GridFunction, g: &GridFunction) -> Result<()> {
    if !same_dt(f.dt, g.dt) || f.n_cells() != g.n_cells() {
        return Err(Error::GridMismatch(format!(
            "(dt = {}, n = {}) vs (dt = {}, n = {})",
            f.dt,
            f.n_cells(),
            g.dt,
            g.n_cells()
        )));
    }
    Ok(())
}

/// Relative comparison of grid steps.
pub fn same_dt(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_grids() {
        assert!(GridFunction::from_nodes(0.0, vec![1.0, 2.0], AtZero::Point).is_err());
        assert!(GridFunction::from_nodes(0.1, vec![1.0], AtZero::Point).is_err());
        assert!(GridFunction::from_nodes(0.1, vec![1.0, f64::NAN], AtZero::Point).is_err());
    }

    #[test]
    fn cell_average_convention_at_zero() {
        let g = GridFunction::from_nodes(0.5, vec![4.0, 2.0, 1.0], AtZero::CellAverage).unwrap();
        assert_eq!(g.cells(), &[4.0, 1.5]);
        let p = GridFunction::from_nodes(0.5, vec![4.0, 2.0, 1.0], AtZero::Point).unwrap();
        assert_eq!(p.cells(), &[3.0, 1.5]);
    }

    #[test]
    fn csv_has_header_and_precision() {
        let g = GridFunction::sample(0.25, 2, |t| 1.0 / 3.0 + t).unwrap();
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let mut lines = s.lines();
        assert_eq!(lines.next(), Some("t,value"));
        let first: Vec<&str> = lines.next().unwrap().split(',').collect();
        let v: f64 = first[1].parse().unwrap();
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn coarsen_preserves_integral() {
        let g = GridFunction::sample(0.01, 100, |t| (3.0 * t).sin() + 2.0).unwrap();
        let c = g.coarsen(4).unwrap();
        assert!((c.integral() - g.integral()).abs() < 1e-13);
        assert_eq!(c.n_cells(), 25);
    }
}
