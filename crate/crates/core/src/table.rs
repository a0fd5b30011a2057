//! Piecewise-constant time tables given as `(hour, value)` knots.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::Grid;

/// Step function of time: knot `(h_k, v_k)` holds on `[h_k, h_{k+1})`.
/// Times before the first knot take the first value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeTable {
    knots: Vec<(f64, f64)>,
}

impl TimeTable {
    pub fn new(mut knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::Config("time table needs at least one knot".into()));
        }
        if knots.iter().any(|(t, v)| !t.is_finite() || !v.is_finite()) {
            return Err(Error::NonFinite("time table"));
        }
        knots.sort_by(|a, b| a.0.total_cmp(&b.0));
        if knots.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::Config("time table has duplicate knot times".into()));
        }
        Ok(TimeTable { knots })
    }

    pub fn constant(value: f64) -> Self {
        TimeTable {
            knots: vec![(0.0, value)],
        }
    }

    /// Two-level profile: `high` on `[start, end)`, `low` elsewhere.
    pub fn window(low: f64, high: f64, start: f64, end: f64) -> Result<Self> {
        TimeTable::new(vec![(0.0, low), (start, high), (end, low)])
    }

    /// Reads a CSV file with a header row and `(hour, value)` records.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut knots = Vec::new();
        for (line, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            let parse = |i: usize| -> Result<f64> {
                record
                    .get(i)
                    .and_then(|s| s.trim().parse::<f64>().ok())
                    .ok_or_else(|| {
                        Error::Config(format!(
                            "{}: record {} needs two numeric columns",
                            path.display(),
                            line + 1
                        ))
                    })
            };
            knots.push((parse(0)?, parse(1)?));
        }
        TimeTable::new(knots)
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    pub fn value(&self, t: f64) -> f64 {
        let idx = self.knots.partition_point(|(h, _)| *h <= t);
        self.knots[idx.saturating_sub(1)].1
    }

    pub fn min(&self) -> f64 {
        self.knots.iter().map(|k| k.1).fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.knots.iter().map(|k| k.1).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        TimeTable {
            knots: self.knots.iter().map(|(t, v)| (*t, v * factor)).collect(),
        }
    }

    /// Same profile delayed by `hours`; the value at `t < hours` is the value
    /// the original table had at time 0.
    pub fn shifted(&self, hours: f64) -> Self {
        let first = self.knots[0].1;
        let mut knots: Vec<(f64, f64)> = vec![(0.0, first)];
        knots.extend(
            self.knots
                .iter()
                .map(|(t, v)| (t + hours, *v))
                .filter(|(t, _)| *t > 0.0),
        );
        knots.dedup_by(|b, a| a.0 == b.0);
        TimeTable { knots }
    }

    /// Per-step values on `grid`: entry `n` is the table at the midpoint of
    /// `[t_n, t_{n+1})`, and the final node repeats the last step.
    pub fn on_steps(&self, grid: &Grid) -> Vec<f64> {
        let mut out: Vec<f64> = (0..grid.n_t)
            .map(|n| self.value(grid.time(n) + 0.5 * grid.dt))
            .collect();
        out.push(out[grid.n_t - 1]);
        out
    }
}
