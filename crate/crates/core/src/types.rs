//! Grids, states and tabulated fields shared by every solver.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Discrete component of the state. For water heaters `0` is OFF and `1` is ON.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Mode(pub usize);

impl Mode {
    pub const OFF: Mode = Mode(0);
    pub const ON: Mode = Mode(1);

    pub fn index(self) -> usize {
        self.0
    }
}

/// State of one agent: heating mode and water temperature in °C.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatePoint {
    pub mode: Mode,
    pub theta: f64,
}

impl StatePoint {
    pub fn new(mode: Mode, theta: f64) -> Self {
        StatePoint { mode, theta }
    }
}

/// Uniform time × temperature grid. Times are in hours, temperatures in °C.
///
/// Time nodes are `t_n = n * dt` for `n = 0..=n_t`; temperature nodes are
/// `theta_lo + k * dtheta` for `k = 0..=n_theta`, so `n_theta` counts cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub horizon: f64,
    pub n_t: usize,
    pub dt: f64,
    pub theta_lo: f64,
    pub theta_hi: f64,
    pub n_theta: usize,
    pub dtheta: f64,
    pub modes: usize,
}

const INTEGRALITY_TOL: f64 = 1e-9;

fn whole_count(span: f64, step: f64, what: &str) -> Result<usize> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::Config(format!("{what} step must be positive, got {step}")));
    }
    if !(span > 0.0) || !span.is_finite() {
        return Err(Error::Config(format!("{what} span must be positive, got {span}")));
    }
    let ratio = span / step;
    let count = ratio.round();
    if count < 1.0 || (ratio - count).abs() > INTEGRALITY_TOL * ratio.max(1.0) {
        return Err(Error::Config(format!(
            "{what} step {step} does not divide the span {span}"
        )));
    }
    Ok(count as usize)
}

impl Grid {
    pub fn new(
        horizon: f64,
        n_t: usize,
        theta_lo: f64,
        theta_hi: f64,
        n_theta: usize,
        modes: usize,
    ) -> Result<Self> {
        if n_t == 0 || n_theta == 0 {
            return Err(Error::Config("grid needs at least one time step and one cell".into()));
        }
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::Config(format!("horizon must be positive, got {horizon}")));
        }
        if !(theta_lo < theta_hi) || !theta_lo.is_finite() || !theta_hi.is_finite() {
            return Err(Error::Config(format!(
                "temperature bounds must satisfy lo < hi, got [{theta_lo}, {theta_hi}]"
            )));
        }
        if modes == 0 {
            return Err(Error::Config("grid needs at least one mode".into()));
        }
        Ok(Grid {
            horizon,
            n_t,
            dt: horizon / n_t as f64,
            theta_lo,
            theta_hi,
            n_theta,
            dtheta: (theta_hi - theta_lo) / n_theta as f64,
            modes,
        })
    }

    /// Builds a grid from step sizes; both steps must divide their spans.
    pub fn from_steps(
        horizon: f64,
        dt: f64,
        theta_lo: f64,
        theta_hi: f64,
        dtheta: f64,
        modes: usize,
    ) -> Result<Self> {
        let n_t = whole_count(horizon, dt, "time")?;
        let n_theta = whole_count(theta_hi - theta_lo, dtheta, "temperature")?;
        Grid::new(horizon, n_t, theta_lo, theta_hi, n_theta, modes)
    }

    pub fn n_times(&self) -> usize {
        self.n_t + 1
    }

    pub fn n_nodes(&self) -> usize {
        self.n_theta + 1
    }

    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.dt
    }

    pub fn theta(&self, k: usize) -> f64 {
        self.theta_lo + k as f64 * self.dtheta
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n_times()).map(|n| self.time(n)).collect()
    }

    pub fn thetas(&self) -> Vec<f64> {
        (0..self.n_nodes()).map(|k| self.theta(k)).collect()
    }

    /// Linear interpolation stencil in θ with clamped extension: the value at
    /// `theta` is `(1 - w) * f[k] + w * f[k + 1]`.
    #[inline]
    pub fn locate(&self, theta: f64) -> (usize, f64) {
        let x = (theta - self.theta_lo) / self.dtheta;
        if !(x > 0.0) {
            return (0, 0.0);
        }
        let last = self.n_theta;
        if x >= last as f64 {
            return (last - 1, 1.0);
        }
        let k = x.floor() as usize;
        (k, x - k as f64)
    }

    /// Time stencil, clamped to `[0, horizon]`.
    pub fn locate_time(&self, t: f64) -> (usize, f64) {
        let x = t / self.dt;
        if !(x > 0.0) {
            return (0, 0.0);
        }
        if x >= self.n_t as f64 {
            return (self.n_t - 1, 1.0);
        }
        let n = x.floor() as usize;
        (n, x - n as f64)
    }

    /// Step index containing `t`, i.e. `t ∈ [t_n, t_{n+1})`, clamped.
    pub fn step_of(&self, t: f64) -> usize {
        ((t / self.dt + 1e-9).floor().max(0.0) as usize).min(self.n_t - 1)
    }
}

/// What a [`ValueField`] holds. Control fields have one plane per ordered
/// mode pair `(from, to)`; the other kinds have one plane per mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FieldKind {
    Value,
    ControlRate,
    Density,
}

/// A real field on (time index × plane × temperature node).
#[derive(Debug, Clone, PartialEq)]
pub struct ValueField {
    kind: FieldKind,
    n_times: usize,
    modes: usize,
    n_nodes: usize,
    data: Vec<f64>,
}

impl ValueField {
    pub fn zeros(kind: FieldKind, grid: &Grid) -> Self {
        let planes = match kind {
            FieldKind::ControlRate => grid.modes * grid.modes,
            _ => grid.modes,
        };
        ValueField {
            kind,
            n_times: grid.n_times(),
            modes: grid.modes,
            n_nodes: grid.n_nodes(),
            data: vec![0.0; grid.n_times() * planes * grid.n_nodes()],
        }
    }

    /// Builds a field by evaluating `f(n, plane, k)` at every grid point.
    pub fn from_fn(
        kind: FieldKind,
        grid: &Grid,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut field = ValueField::zeros(kind, grid);
        for n in 0..field.n_times {
            for p in 0..field.planes() {
                for k in 0..field.n_nodes {
                    let idx = field.index(n, p, k);
                    field.data[idx] = f(n, p, k);
                }
            }
        }
        field
    }

    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn n_times(&self) -> usize {
        self.n_times
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn planes(&self) -> usize {
        match self.kind {
            FieldKind::ControlRate => self.modes * self.modes,
            _ => self.modes,
        }
    }

    /// Plane index of the rate for jumping from mode `from` to mode `to`.
    #[inline]
    pub fn pair(&self, from: usize, to: usize) -> usize {
        from * self.modes + to
    }

    #[inline]
    fn index(&self, n: usize, plane: usize, k: usize) -> usize {
        (n * self.planes() + plane) * self.n_nodes + k
    }

    #[inline]
    pub fn get(&self, n: usize, plane: usize, k: usize) -> f64 {
        self.data[self.index(n, plane, k)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, plane: usize, k: usize, value: f64) {
        let idx = self.index(n, plane, k);
        self.data[idx] = value;
    }

    pub fn plane(&self, n: usize, plane: usize) -> &[f64] {
        let start = self.index(n, plane, 0);
        &self.data[start..start + self.n_nodes]
    }

    pub fn plane_mut(&mut self, n: usize, plane: usize) -> &mut [f64] {
        let start = self.index(n, plane, 0);
        let len = self.n_nodes;
        &mut self.data[start..start + len]
    }

    /// All values of time slice `n`, plane-major.
    pub fn slice(&self, n: usize) -> &[f64] {
        let len = self.planes() * self.n_nodes;
        &self.data[n * len..(n + 1) * len]
    }

    pub fn slice_mut(&mut self, n: usize) -> &mut [f64] {
        let len = self.planes() * self.n_nodes;
        &mut self.data[n * len..(n + 1) * len]
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    /// Bilinear interpolation in (t, θ), clamped at the grid edges.
    pub fn sample(&self, grid: &Grid, plane: usize, t: f64, theta: f64) -> f64 {
        let (n, wt) = grid.locate_time(t);
        let (k, w) = grid.locate(theta);
        let at = |n: usize| {
            let row = self.plane(n, plane);
            (1.0 - w) * row[k] + w * row[k + 1]
        };
        if wt == 0.0 {
            at(n)
        } else {
            (1.0 - wt) * at(n) + wt * at(n + 1)
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &ValueField) -> f64 {
        assert_eq!(self.data.len(), other.data.len(), "field shapes differ");
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Checks the invariants of the field's kind: rates must be finite,
    /// non-negative and vanish on the diagonal; densities must be
    /// non-negative and carry unit mass at every time index.
    pub fn check_invariants(&self, mass_tol: f64) -> Result<()> {
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("field values"));
        }
        match self.kind {
            FieldKind::Value => Ok(()),
            FieldKind::ControlRate => {
                for n in 0..self.n_times {
                    for i in 0..self.modes {
                        for j in 0..self.modes {
                            let row = self.plane(n, self.pair(i, j));
                            if let Some(v) = row.iter().find(|v| **v < 0.0) {
                                return Err(Error::InvalidControl(format!(
                                    "negative rate {v} for {i}->{j} at time index {n}"
                                )));
                            }
                            if i == j && row.iter().any(|v| *v != 0.0) {
                                return Err(Error::InvalidControl(format!(
                                    "non-zero diagonal rate for mode {i} at time index {n}"
                                )));
                            }
                        }
                    }
                }
                Ok(())
            }
            FieldKind::Density => {
                for n in 0..self.n_times {
                    let s = self.slice(n);
                    if let Some(v) = s.iter().find(|v| **v < 0.0) {
                        return Err(Error::Config(format!(
                            "density has negative mass {v} at time index {n}"
                        )));
                    }
                    let total: f64 = s.iter().sum();
                    if (total - 1.0).abs() > mass_tol {
                        return Err(Error::Config(format!(
                            "density at time index {n} has mass {total}"
                        )));
                    }
                }
                Ok(())
            }
        }
    }
}

/// Dual variable λ(t), one value per time node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualPath {
    pub values: Vec<f64>,
}

impl DualPath {
    pub fn zeros(grid: &Grid) -> Self {
        DualPath {
            values: vec![0.0; grid.n_times()],
        }
    }

    pub fn new(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_times() {
            return Err(Error::Config(format!(
                "dual path has {} entries, grid has {} time nodes",
                values.len(),
                grid.n_times()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dual path"));
        }
        Ok(DualPath { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Sup norm over time nodes.
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// Left-rectangle quadrature weights: `dt` on steps `0..n_t`, zero at `T`.
///
/// All sampled paths are piecewise constant on `[t_n, t_{n+1})`, for which
/// this rule is exact.
pub fn integrate(grid: &Grid, series: &[f64]) -> f64 {
    debug_assert_eq!(series.len(), grid.n_times());
    grid.dt * series[..grid.n_t].iter().sum::<f64>()
}

/// `∫ a(t) b(t) dt` with the same rule as [`integrate`].
pub fn inner(grid: &Grid, a: &[f64], b: &[f64]) -> f64 {
    grid.dt
        * a[..grid.n_t]
            .iter()
            .zip(&b[..grid.n_t])
            .map(|(x, y)| x * y)
            .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_steps_requires_divisibility() {
        let g = Grid::from_steps(24.0, 1.0 / 30.0, 45.0, 70.0, 1.0, 2).unwrap();
        assert_eq!(g.n_t, 720);
        assert_eq!(g.n_nodes(), 26);
        assert!(Grid::from_steps(24.0, 0.7, 45.0, 70.0, 1.0, 2).is_err());
        assert!(Grid::from_steps(24.0, 0.5, 45.0, 70.0, 0.3, 2).is_err());
    }

    #[test]
    fn locate_clamps_and_interpolates() {
        let g = Grid::new(1.0, 1, 0.0, 4.0, 4, 2).unwrap();
        assert_eq!(g.locate(-3.0), (0, 0.0));
        assert_eq!(g.locate(0.0), (0, 0.0));
        assert_eq!(g.locate(2.5), (2, 0.5));
        assert_eq!(g.locate(4.0), (3, 1.0));
        assert_eq!(g.locate(9.0), (3, 1.0));
    }

    #[test]
    fn sample_reproduces_bilinear_functions() {
        let g = Grid::new(2.0, 4, 0.0, 4.0, 8, 2).unwrap();
        let f = ValueField::from_fn(FieldKind::Value, &g, |n, p, k| {
            1.0 + 2.0 * g.time(n) - 0.5 * g.theta(k) + p as f64
        });
        let v = f.sample(&g, 1, 0.8, 1.3);
        assert!((v - (2.0 + 1.6 - 0.65)).abs() < 1e-12);
    }

    #[test]
    fn control_invariants_reject_negative_and_diagonal() {
        let g = Grid::new(1.0, 2, 0.0, 1.0, 2, 2).unwrap();
        let mut a = ValueField::zeros(FieldKind::ControlRate, &g);
        assert!(a.check_invariants(0.0).is_ok());
        a.set(1, a.pair(0, 1), 1, -0.1);
        assert!(a.check_invariants(0.0).is_err());
        let mut b = ValueField::zeros(FieldKind::ControlRate, &g);
        b.set(0, b.pair(1, 1), 0, 0.5);
        assert!(b.check_invariants(0.0).is_err());
    }
}
