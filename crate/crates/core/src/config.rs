//! Scenario configuration: TOML ingestion with explicit units, and validation.
//!
//! Every dimensional input is a string carrying its unit (`"2 min"`,
//! `"0.005 /h"`, `"12 degC/h"`); values are converted to hours and °C on
//! ingestion. Time tables are `(hour, value)` pairs, inline or from a CSV file.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{DriftModel, RunningCost, SafetyIntensity, TerminalCost};
use crate::error::{Error, Result};
use crate::table::TimeTable;
use crate::types::Grid;

/// Physical dimension expected for a configured quantity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    Time,
    Rate,
    Temperature,
    HeatingRate,
    Dimensionless,
}

/// Parses `"<number> <unit>"` and converts to hours / °C.
pub fn parse_quantity(text: &str, dim: Dimension) -> Result<f64> {
    let text = text.trim();
    let split = text
        .find(|c: char| c.is_whitespace() || c == '/')
        .unwrap_or(text.len());
    let (num, unit) = text.split_at(split);
    let value: f64 = num
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("cannot parse a number in {text:?}")))?;
    let unit: String = unit.chars().filter(|c| !c.is_whitespace()).collect();
    let factor = unit_factor(&unit, dim).ok_or_else(|| {
        Error::Config(format!("unit {unit:?} in {text:?} is not a valid {dim:?} unit"))
    })?;
    Ok(value * factor)
}

fn unit_factor(unit: &str, dim: Dimension) -> Option<f64> {
    let u = unit.to_ascii_lowercase();
    match dim {
        Dimension::Time => match u.as_str() {
            "h" | "hr" | "hour" | "hours" => Some(1.0),
            "min" | "minute" | "minutes" => Some(1.0 / 60.0),
            "s" | "sec" | "second" | "seconds" => Some(1.0 / 3600.0),
            _ => None,
        },
        Dimension::Rate => match u.as_str() {
            "/h" | "1/h" | "/hour" => Some(1.0),
            "/min" | "1/min" => Some(60.0),
            "/s" | "1/s" => Some(3600.0),
            _ => None,
        },
        Dimension::Temperature => match unit {
            "degC" | "°C" | "C" | "degc" => Some(1.0),
            _ => None,
        },
        Dimension::HeatingRate => match unit {
            "degC/h" | "°C/h" | "C/h" => Some(1.0),
            "degC/min" | "°C/min" | "C/min" => Some(60.0),
            _ => None,
        },
        Dimension::Dimensionless => match u.as_str() {
            "" | "1" => Some(1.0),
            _ => None,
        },
    }
}

/// Coupling between agents through the aggregate consumption.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CouplingConfig {
    None,
    Tracking { kappa: f64, reference: Reference },
}

/// Reference signal for tracking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Reference {
    /// Constant equal to the daily mean of the nominal aggregate.
    NominalMean,
    Table(TimeTable),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsConfig {
    pub theta_min: f64,
    pub theta_max: f64,
    pub peak: f64,
    pub ramp_width: f64,
}

impl BoundsConfig {
    pub fn safety(&self) -> SafetyIntensity {
        SafetyIntensity {
            theta_min: self.theta_min,
            theta_max: self.theta_max,
            peak: self.peak,
            ramp_width: self.ramp_width,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostsConfig {
    pub coupling: CouplingConfig,
    pub running: RunningCost,
    /// Tariff used by the pricing scenarios.
    pub price: Option<TimeTable>,
    /// Tariff delays of the customer classes, hours.
    pub class_shifts: Vec<f64>,
    pub terminal: TerminalCost,
    /// Weight `w` of the jump cost `l(y) = w y² / 2`.
    pub jump_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgoConfig {
    pub trajectories: usize,
    pub iterations: usize,
    /// Step constant `a` of `ρ_k = a / (k + 1)`.
    pub step: f64,
    pub seed: u64,
    pub on_probability: f64,
    /// Divergence guard on `sup |λ|`.
    pub lambda_bound: f64,
    /// A-priori bound on the optimal control, 1/h. Derived when absent.
    pub alpha_bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub grid: Grid,
    pub physics: DriftModel,
    pub bounds: BoundsConfig,
    pub costs: CostsConfig,
    pub algo: AlgoConfig,
}

/// One failed check: which field, and what condition it breaks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub condition: String,
}

impl Violation {
    fn new(field: &str, condition: impl Into<String>) -> Self {
        Violation {
            field: field.to_string(),
            condition: condition.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.condition)
    }
}

// ---- raw TOML layer -------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    grid: RawGrid,
    physics: RawPhysics,
    bounds: RawBounds,
    #[serde(default)]
    costs: RawCosts,
    #[serde(default)]
    algo: RawAlgo,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    horizon: String,
    dt: String,
    dtheta: String,
    margin: Option<String>,
    theta_lo: Option<String>,
    theta_hi: Option<String>,
    modes: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPhysics {
    sigma_p: String,
    rho: String,
    theta_amb: String,
    theta_in: String,
    eps: RawTable,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTable {
    unit: String,
    points: Option<Vec<[f64; 2]>>,
    file: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBounds {
    theta_min: String,
    theta_max: String,
    peak: String,
    ramp_width: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawReference {
    Named(String),
    Table(RawTable),
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawCosts {
    coupling: Option<String>,
    kappa: Option<f64>,
    reference: Option<RawReference>,
    running: Option<String>,
    price: Option<RawTable>,
    class_shifts: Option<Vec<String>>,
    terminal_offsets: Option<Vec<f64>>,
    terminal_slope: Option<f64>,
    jump_weight: Option<f64>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawAlgo {
    trajectories: Option<usize>,
    iterations: Option<usize>,
    step: Option<f64>,
    seed: Option<u64>,
    on_probability: Option<f64>,
    lambda_bound: Option<f64>,
    alpha_bound: Option<String>,
}

fn resolve_table(raw: &RawTable, dim: Dimension, base: &Path, name: &str) -> Result<TimeTable> {
    let factor = unit_factor(raw.unit.trim(), dim).ok_or_else(|| {
        Error::Config(format!("{name}: unit {:?} is not a valid {dim:?} unit", raw.unit))
    })?;
    let table = match (&raw.points, &raw.file) {
        (Some(points), None) => TimeTable::new(points.iter().map(|p| (p[0], p[1])).collect())?,
        (None, Some(file)) => {
            let path = base.join(file);
            TimeTable::from_csv(&path)?
        }
        _ => {
            return Err(Error::Config(format!(
                "{name}: give exactly one of `points` or `file`"
            )))
        }
    };
    Ok(table.scaled(factor))
}

impl ScenarioConfig {
    /// Reads a TOML config; relative table files resolve against its directory.
    /// A `.json` file is read as an already resolved configuration, such as
    /// the one recorded in a run manifest.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if path.extension().is_some_and(|e| e == "json") {
            return ScenarioConfig::from_json_str(&text);
        }
        let base = path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
        ScenarioConfig::from_toml_str(&text, &base)
    }

    /// Parses a resolved configuration, either bare or under a `config` key.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("JSON: {e}")))?;
        let inner = value.get("config").cloned().unwrap_or(value);
        serde_json::from_value(inner).map_err(|e| Error::Config(format!("JSON: {e}")))
    }

    pub fn from_toml_str(text: &str, base: &Path) -> Result<Self> {
        let raw: RawConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("TOML: {e}")))?;
        use Dimension::*;

        let theta_min = parse_quantity(&raw.bounds.theta_min, Temperature)?;
        let theta_max = parse_quantity(&raw.bounds.theta_max, Temperature)?;
        let dtheta = parse_quantity(&raw.grid.dtheta, Temperature)?;
        let horizon = parse_quantity(&raw.grid.horizon, Time)?;
        let dt = parse_quantity(&raw.grid.dt, Time)?;
        let margin = raw
            .grid
            .margin
            .as_deref()
            .map(|m| parse_quantity(m, Temperature))
            .transpose()?
            .unwrap_or(5.0 * dtheta);
        let theta_lo = match &raw.grid.theta_lo {
            Some(s) => parse_quantity(s, Temperature)?,
            None => theta_min - margin,
        };
        let theta_hi = match &raw.grid.theta_hi {
            Some(s) => parse_quantity(s, Temperature)?,
            None => theta_max + margin,
        };
        let grid = Grid::from_steps(horizon, dt, theta_lo, theta_hi, dtheta, raw.grid.modes.unwrap_or(2))?;

        let physics = DriftModel {
            sigma_p: parse_quantity(&raw.physics.sigma_p, HeatingRate)?,
            rho: parse_quantity(&raw.physics.rho, Rate)?,
            theta_amb: parse_quantity(&raw.physics.theta_amb, Temperature)?,
            theta_in: parse_quantity(&raw.physics.theta_in, Temperature)?,
            eps: resolve_table(&raw.physics.eps, Rate, base, "physics.eps")?,
        };

        let bounds = BoundsConfig {
            theta_min,
            theta_max,
            peak: parse_quantity(&raw.bounds.peak, Rate)?,
            ramp_width: raw
                .bounds
                .ramp_width
                .as_deref()
                .map(|r| parse_quantity(r, Temperature))
                .transpose()?
                .unwrap_or(grid.dtheta),
        };

        let c = &raw.costs;
        let price = c
            .price
            .as_ref()
            .map(|t| resolve_table(t, Rate, base, "costs.price"))
            .transpose()?;
        let coupling = match c.coupling.as_deref().unwrap_or("none") {
            "none" => CouplingConfig::None,
            "tracking" => CouplingConfig::Tracking {
                kappa: c.kappa.ok_or_else(|| Error::Config("costs.kappa is required for tracking".into()))?,
                reference: match &c.reference {
                    None => Reference::NominalMean,
                    Some(RawReference::Named(n)) if n == "nominal-mean" => Reference::NominalMean,
                    Some(RawReference::Named(n)) => {
                        return Err(Error::Config(format!("costs.reference: unknown signal {n:?}")))
                    }
                    Some(RawReference::Table(t)) => {
                        Reference::Table(resolve_table(t, Dimensionless, base, "costs.reference")?)
                    }
                },
            },
            other => return Err(Error::Config(format!("costs.coupling: unknown kind {other:?}"))),
        };
        let running = match c.running.as_deref().unwrap_or("none") {
            "none" => RunningCost::Zero,
            "price" => RunningCost::Price(
                price
                    .clone()
                    .ok_or_else(|| Error::Config("costs.running = \"price\" needs costs.price".into()))?,
            ),
            other => return Err(Error::Config(format!("costs.running: unknown kind {other:?}"))),
        };
        let terminal = match (&c.terminal_offsets, c.terminal_slope) {
            (None, None) => TerminalCost::Zero,
            (offsets, slope) => TerminalCost::Affine {
                offsets: offsets.clone().unwrap_or_default(),
                slope: slope.unwrap_or(0.0),
            },
        };
        let class_shifts = match &c.class_shifts {
            Some(v) => v.iter().map(|s| parse_quantity(s, Time)).collect::<Result<Vec<_>>>()?,
            None => vec![0.0, 1.0, 2.0],
        };
        let costs = CostsConfig {
            coupling,
            running,
            price,
            class_shifts,
            terminal,
            jump_weight: c.jump_weight.unwrap_or(1.0),
        };

        let a = &raw.algo;
        let algo = AlgoConfig {
            trajectories: a.trajectories.unwrap_or(10_000),
            iterations: a.iterations.unwrap_or(100),
            step: a.step.unwrap_or(1.0),
            seed: a.seed.unwrap_or(0),
            on_probability: a.on_probability.unwrap_or(0.38),
            lambda_bound: a.lambda_bound.unwrap_or(1e6),
            alpha_bound: a.alpha_bound.as_deref().map(|s| parse_quantity(s, Rate)).transpose()?,
        };

        Ok(ScenarioConfig {
            grid,
            physics,
            bounds,
            costs,
            algo,
        })
    }

    /// Canonical JSON form of the resolved configuration; `from_json_str`
    /// reads it back.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serialises")
    }

    /// SHA-256 of the canonical JSON form of the resolved configuration.
    pub fn digest(&self) -> String {
        let json = self.to_json().into_bytes();
        let hash = Sha256::digest(&json);
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Same scenario on a grid with different step sizes (bounds and ramp kept).
    pub fn with_steps(&self, dt: f64, dtheta: f64) -> Result<Self> {
        let mut cfg = self.clone();
        cfg.grid = Grid::from_steps(
            self.grid.horizon,
            dt,
            self.grid.theta_lo,
            self.grid.theta_hi,
            dtheta,
            self.grid.modes,
        )?;
        Ok(cfg)
    }
}

/// Lists every broken invariant and stability condition; empty means valid.
pub fn validate_config(cfg: &ScenarioConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    let g = &cfg.grid;
    let b = &cfg.bounds;
    let p = &cfg.physics;

    if !(g.dt > 0.0) {
        out.push(Violation::new("grid.dt", "must be positive"));
    }
    if !(g.dtheta > 0.0) {
        out.push(Violation::new("grid.dtheta", "must be positive"));
    }
    if !(g.theta_lo < g.theta_hi) {
        out.push(Violation::new("grid.theta_lo", "must be below grid.theta_hi"));
    }
    if g.modes < 2 {
        out.push(Violation::new("grid.modes", "need at least two modes"));
    }

    let bounds_ordered = b.theta_min < b.theta_max;
    if !bounds_ordered {
        out.push(Violation::new(
            "bounds.theta_min",
            format!("theta_min ({}) must be below theta_max ({})", b.theta_min, b.theta_max),
        ));
    }
    if !(b.peak > 0.0) {
        out.push(Violation::new("bounds.peak", "safety peak rate must be positive"));
    }
    if !(b.ramp_width > 0.0) {
        out.push(Violation::new("bounds.ramp_width", "must be positive"));
    }

    if !(p.sigma_p > 0.0) {
        out.push(Violation::new("physics.sigma_p", "heating rate must be positive"));
    }
    if !(p.rho >= 0.0) {
        out.push(Violation::new("physics.rho", "loss rate must be non-negative"));
    }
    if !(p.eps.min() >= 0.0) {
        out.push(Violation::new("physics.eps", "drain rate must be non-negative"));
    }

    if bounds_ordered {
        let lo = p.lower_bound(b.theta_min);
        let hi = p.upper_bound(b.theta_max, g.modes.saturating_sub(1));
        if g.theta_lo > b.theta_min || g.theta_hi < b.theta_max {
            out.push(Violation::new(
                "grid",
                format!(
                    "grid [{}, {}] must cover the comfort band [{}, {}]",
                    g.theta_lo, g.theta_hi, b.theta_min, b.theta_max
                ),
            ));
        }
        if g.theta_lo < lo || g.theta_hi > hi {
            out.push(Violation::new(
                "grid",
                format!("grid [{}, {}] must lie within the a.s. bounds [{lo}, {hi}]", g.theta_lo, g.theta_hi),
            ));
        }
    }

    if let CouplingConfig::Tracking { kappa, reference } = &cfg.costs.coupling {
        if !(*kappa > 0.0) {
            out.push(Violation::new("costs.kappa", "tracking weight must be positive"));
        }
        if let Reference::Table(t) = reference {
            if !(t.min() >= 0.0 && t.max() <= 1.0) {
                out.push(Violation::new("costs.reference", "normalised signal must lie in [0, 1]"));
            }
        }
    }
    if !(cfg.costs.jump_weight > 0.0) {
        out.push(Violation::new("costs.jump_weight", "must be positive"));
    }

    let a = &cfg.algo;
    if a.trajectories < 1 {
        out.push(Violation::new("algo.trajectories", "need at least one trajectory"));
    }
    if a.iterations < 1 {
        out.push(Violation::new("algo.iterations", "need at least one iteration"));
    }
    if !(a.step >= 0.0) || !a.step.is_finite() {
        out.push(Violation::new("algo.step", "step constant must be finite and non-negative"));
    }
    if !(0.0..=1.0).contains(&a.on_probability) {
        out.push(Violation::new("algo.on_probability", "must lie in [0, 1]"));
    }
    if !(a.lambda_bound > 0.0) {
        out.push(Violation::new("algo.lambda_bound", "must be positive"));
    }

    // Stability conditions only make sense on an otherwise sane problem.
    if out.is_empty() {
        match crate::model::Problem::from_config(cfg) {
            Ok(problem) => {
                let bound = match a.alpha_bound {
                    Some(v) => Ok(v),
                    None => crate::hjb::a_priori_alpha_bound(&problem),
                };
                match bound {
                    Ok(bound) => {
                        let report = crate::hjb::cfl_check(&problem, bound);
                        if !report.courant_ok() {
                            out.push(Violation::new(
                                "grid.dt",
                                format!(
                                    "CFL condition B*dt/dtheta <= 1 violated: B = {:.4} degC/h gives {:.4}",
                                    report.drift_bound, report.courant
                                ),
                            ));
                        }
                        if !report.jump_ok() {
                            out.push(Violation::new(
                                "grid.dt",
                                format!(
                                    "jump-rate condition dt*(alpha_bound + max safety rate) <= 1 violated: {:.4} (alpha_bound {:.4} /h)",
                                    report.jump_budget, bound
                                ),
                            ));
                        }
                    }
                    Err(e) => out.push(Violation::new("algo.alpha_bound", format!("cannot derive a bound: {e}"))),
                }
            }
            Err(e) => out.push(Violation::new("config", e.to_string())),
        }
    }
    out
}
