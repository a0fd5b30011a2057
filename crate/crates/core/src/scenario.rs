//! The four experiments and their CSV/JSON artifacts.
//!
//! Random streams per scenario: the nominal population uses `seed` itself,
//! Uzawa iteration `k` uses `derive_seed(seed, k + 1)`, the final
//! evaluation of an optimised control uses `derive_seed(seed, 0)` and
//! tariff class `c` uses `derive_seed(derive_seed(seed, 0), c + 1)`.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde_json::json;
use sha2::{Digest, Sha256};

use crate::config::{validate_config, CouplingConfig, Reference, ScenarioConfig};
use crate::dual::{rms_distance, uzawa_run, CouplingCost, GradientOracle, UzawaOutcome, UzawaSettings};
use crate::dynamics::RunningCost;
use crate::error::{Error, Result};
use crate::hjb::{check_jump_budget, extract_control, forward_density, solve_phi, SolverSettings};
use crate::model::Problem;
use crate::simulator::{derive_seed, simulate_population, simulate_summary, PopulationSummary};
use crate::types::{integrate, DualPath, FieldKind, Grid, ValueField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScenarioName {
    Nominal,
    Tracking,
    Pricing,
    Pricing3Class,
}

impl ScenarioName {
    pub const ALL: [ScenarioName; 4] = [
        ScenarioName::Nominal,
        ScenarioName::Tracking,
        ScenarioName::Pricing,
        ScenarioName::Pricing3Class,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioName::Nominal => "nominal",
            ScenarioName::Tracking => "tracking",
            ScenarioName::Pricing => "pricing",
            ScenarioName::Pricing3Class => "pricing3class",
        }
    }
}

impl fmt::Display for ScenarioName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScenarioName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| {
                Error::Usage(format!(
                    "unknown scenario {s:?}; expected one of nominal, tracking, pricing, pricing3class"
                ))
            })
    }
}

// ---- computations ---------------------------------------------------------

/// Monte Carlo aggregate with its standard errors.
#[derive(Debug, Clone)]
pub struct PopulationRun {
    pub aggregate: Vec<f64>,
    pub std_error: Vec<f64>,
    pub summary: PopulationSummary,
}

pub fn run_population(
    problem: &Problem,
    control: Option<&ValueField>,
    m: usize,
    seed: u64,
) -> Result<PopulationRun> {
    let summary = simulate_summary(problem, control, m, seed)?;
    Ok(PopulationRun {
        aggregate: summary.aggregate(problem.grid.modes),
        std_error: summary.aggregate_std_error(problem.grid.modes),
        summary,
    })
}

/// Time average of a series over `[0, T)`.
pub fn time_mean(grid: &Grid, series: &[f64]) -> f64 {
    integrate(grid, series) / grid.horizon
}

/// Tracking cost of the configuration; the nominal-mean reference is the
/// time average of `nominal`.
pub fn resolve_coupling(cfg: &ScenarioConfig, nominal: &[f64]) -> Result<CouplingCost> {
    let grid = &cfg.grid;
    match &cfg.costs.coupling {
        CouplingConfig::None => Ok(CouplingCost::None),
        CouplingConfig::Tracking { kappa, reference } => {
            let r = match reference {
                Reference::NominalMean => vec![time_mean(grid, nominal); grid.n_times()],
                Reference::Table(t) => t.on_steps(grid),
            };
            CouplingCost::tracking(grid, *kappa, r)
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrackingRun {
    pub uzawa: UzawaOutcome,
    pub optimised: PopulationRun,
    pub nominal: PopulationRun,
    pub reference: Vec<f64>,
    pub rmse: f64,
    pub nominal_rmse: f64,
}

/// Nominal run, reference, Uzawa ascent and a final evaluation of the
/// resulting control.
pub fn run_tracking(cfg: &ScenarioConfig) -> Result<TrackingRun> {
    let problem = Problem::from_config(cfg)?;
    let a = &cfg.algo;
    let nominal = run_population(&problem, None, a.trajectories, a.seed)?;
    let coupling = resolve_coupling(cfg, &nominal.aggregate)?;
    let reference = coupling
        .reference()
        .ok_or_else(|| Error::Usage("the tracking scenario needs costs.coupling = \"tracking\"".into()))?
        .to_vec();
    let settings = UzawaSettings {
        iterations: a.iterations,
        step: a.step,
        oracle: GradientOracle::MonteCarlo {
            trajectories: a.trajectories,
            seed: a.seed,
        },
        lambda_bound: a.lambda_bound,
        solver: SolverSettings::default(),
    };
    let uzawa = uzawa_run(&problem, &coupling, &settings)?;
    let optimised = run_population(&problem, Some(&uzawa.control), a.trajectories, derive_seed(a.seed, 0))?;
    let g = &problem.grid;
    Ok(TrackingRun {
        rmse: rms_distance(g, &optimised.aggregate, &reference),
        nominal_rmse: rms_distance(g, &nominal.aggregate, &reference),
        uzawa,
        optimised,
        nominal,
        reference,
    })
}

/// Same configuration with the tariff, delayed by `shift` hours, as running cost.
pub fn priced_config(cfg: &ScenarioConfig, shift: f64) -> Result<ScenarioConfig> {
    let price = cfg
        .costs
        .price
        .as_ref()
        .ok_or_else(|| Error::Config("pricing scenarios need costs.price".into()))?;
    let mut out = cfg.clone();
    out.costs.running = RunningCost::Price(price.shifted(shift));
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct PricingRun {
    pub phi: ValueField,
    pub control: ValueField,
    pub optimised: PopulationRun,
    pub price: Vec<f64>,
}

/// One decoupled solve at `λ ≡ 0` with `c = π p`, then a Monte Carlo
/// evaluation of its control with the given seed.
pub fn run_pricing_with(cfg: &ScenarioConfig, shift: f64, seed: u64) -> Result<PricingRun> {
    let priced = priced_config(cfg, shift)?;
    let problem = Problem::from_config(&priced)?;
    let phi = solve_phi(&problem, &DualPath::zeros(&problem.grid), &SolverSettings::default())?;
    let control = extract_control(&problem, &phi);
    check_jump_budget(&problem, &control)?;
    let optimised = run_population(&problem, Some(&control), priced.algo.trajectories, seed)?;
    let price = match &problem.running {
        RunningCost::Price(t) => t.on_steps(&problem.grid),
        RunningCost::Zero => unreachable!("priced_config sets a price"),
    };
    Ok(PricingRun {
        phi,
        control,
        optimised,
        price,
    })
}

pub fn run_pricing(cfg: &ScenarioConfig) -> Result<PricingRun> {
    run_pricing_with(cfg, 0.0, derive_seed(cfg.algo.seed, 0))
}

#[derive(Debug, Clone)]
pub struct ClassesRun {
    pub classes: Vec<PricingRun>,
    /// Equal-weight mean of the class aggregates.
    pub combined: Vec<f64>,
}

/// Independent pricing runs, one per tariff delay in `costs.class_shifts`.
pub fn run_pricing_classes(cfg: &ScenarioConfig) -> Result<ClassesRun> {
    if cfg.costs.class_shifts.is_empty() {
        return Err(Error::Config("pricing3class needs costs.class_shifts".into()));
    }
    let base = derive_seed(cfg.algo.seed, 0);
    let classes = cfg
        .costs
        .class_shifts
        .iter()
        .enumerate()
        .map(|(c, shift)| run_pricing_with(cfg, *shift, derive_seed(base, c as u64 + 1)))
        .collect::<Result<Vec<_>>>()?;
    let weight = 1.0 / classes.len() as f64;
    let combined = (0..cfg.grid.n_times())
        .map(|n| classes.iter().map(|c| c.optimised.aggregate[n]).sum::<f64>() * weight)
        .collect();
    Ok(ClassesRun { classes, combined })
}

// ---- artifacts ------------------------------------------------------------

/// Fixed-point rendering with six significant digits.
pub fn format_sig(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v.is_nan() { "nan".into() } else if v == 0.0 { "0".into() } else { format!("{v}") };
    }
    let exponent = v.abs().log10().floor() as i32;
    let decimals = (5 - exponent).clamp(0, 17) as usize;
    let s = format!("{v:.decimals$}");
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_string()
    } else {
        s
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

/// Writes `time_h` plus the named columns, one row per time node.
pub fn emit_series(path: &Path, times: &[f64], columns: &[(&str, &[f64])]) -> Result<()> {
    if columns.is_empty() {
        return Err(Error::Usage("emit_series needs at least one series".into()));
    }
    if let Some((name, _)) = columns.iter().find(|(_, s)| s.len() != times.len()) {
        return Err(Error::Usage(format!(
            "series {name:?} does not have one value per time node ({})",
            times.len()
        )));
    }
    let mut out = String::from("time_h");
    for (name, _) in columns {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for (n, t) in times.iter().enumerate() {
        out.push_str(&format_sig(*t));
        for (_, s) in columns {
            out.push(',');
            out.push_str(&format_sig(s[n]));
        }
        out.push('\n');
    }
    write_file(path, out.as_bytes())
}

/// Reads a file written by [`emit_series`]: header and columns.
pub fn read_series(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut cols = vec![Vec::new(); header.len()];
    for record in reader.records() {
        let record = record.map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        for (c, field) in record.iter().enumerate() {
            let v = field
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("{}: bad number {field:?}", path.display())))?;
            cols[c].push(v);
        }
    }
    Ok((header, cols))
}

/// Field dump with columns `(time_h, mode, [target,] theta_C, value)`.
pub fn emit_field(path: &Path, grid: &Grid, field: &ValueField) -> Result<()> {
    let control = field.kind() == FieldKind::ControlRate;
    let mut out = String::from(if control {
        "time_h,mode,target,theta_C,value\n"
    } else {
        "time_h,mode,theta_C,value\n"
    });
    let d = field.modes();
    for n in 0..field.n_times() {
        let t = format_sig(grid.time(n));
        for i in 0..d {
            let targets: Vec<usize> = if control { (0..d).filter(|&j| j != i).collect() } else { vec![i] };
            for j in targets {
                let plane = if control { field.pair(i, j) } else { i };
                for (k, v) in field.plane(n, plane).iter().enumerate() {
                    let theta = format_sig(grid.theta(k));
                    if control {
                        out.push_str(&format!("{t},{i},{j},{theta},{}\n", format_sig(*v)));
                    } else {
                        out.push_str(&format!("{t},{i},{theta},{}\n", format_sig(*v)));
                    }
                }
            }
        }
    }
    write_file(path, out.as_bytes())
}

/// Dumps the first `count` trajectories of the population with `seed`.
pub fn emit_trajectories(
    path: &Path,
    problem: &Problem,
    control: Option<&ValueField>,
    count: usize,
    seed: u64,
) -> Result<()> {
    let mut out = String::from("traj_id,time_h,mode,theta_C\n");
    if count > 0 {
        let trajs = simulate_population(problem, control, count, seed)?;
        for (id, tr) in trajs.iter().enumerate() {
            for (n, mode) in tr.mode_path().into_iter().enumerate() {
                out.push_str(&format!(
                    "{id},{},{mode},{}\n",
                    format_sig(problem.grid.time(n)),
                    format_sig(tr.theta_samples[n])
                ));
            }
        }
    }
    write_file(path, out.as_bytes())
}

/// Options that only affect which artifacts are written.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub emit_fields: bool,
    /// Trajectories dumped by the nominal scenario.
    pub sample_trajectories: usize,
    /// Record elapsed seconds in the diagnostics; off by default so that
    /// artifacts are reproducible byte for byte.
    pub wallclock: bool,
}

impl RunOptions {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        RunOptions {
            out_dir: out_dir.into(),
            emit_fields: false,
            sample_trajectories: 20,
            wallclock: false,
        }
    }
}

/// Files written by a scenario and its headline numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioReport {
    pub scenario: ScenarioName,
    pub files: Vec<PathBuf>,
    pub metrics: BTreeMap<String, f64>,
}

struct Emitter<'a> {
    dir: &'a Path,
    files: Vec<PathBuf>,
}

impl Emitter<'_> {
    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.files.push(p.clone());
        p
    }
}

fn check_config(cfg: &ScenarioConfig) -> Result<()> {
    let v = validate_config(cfg);
    if v.is_empty() {
        Ok(())
    } else {
        Err(Error::Violations(v))
    }
}

fn window_mean(grid: &Grid, series: &[f64], start: f64, end: f64) -> f64 {
    let picked: Vec<f64> = (0..grid.n_t)
        .filter(|&n| grid.time(n) >= start - 1e-9 && grid.time(n) < end - 1e-9)
        .map(|n| series[n])
        .collect();
    picked.iter().sum::<f64>() / picked.len().max(1) as f64
}

/// Runs one scenario and writes its artifacts under `opts.out_dir`.
pub fn run_scenario(name: ScenarioName, cfg: &ScenarioConfig, opts: &RunOptions) -> Result<ScenarioReport> {
    check_config(cfg)?;
    match name {
        ScenarioName::Pricing => check_config(&priced_config(cfg, 0.0)?)?,
        ScenarioName::Pricing3Class => {
            if cfg.costs.class_shifts.is_empty() {
                return Err(Error::Config("pricing3class needs costs.class_shifts".into()));
            }
            for shift in &cfg.costs.class_shifts {
                check_config(&priced_config(cfg, *shift)?)?;
            }
        }
        ScenarioName::Tracking => {
            if matches!(cfg.costs.coupling, CouplingConfig::None) {
                return Err(Error::Config("the tracking scenario needs costs.coupling = \"tracking\"".into()));
            }
        }
        ScenarioName::Nominal => {}
    }
    fs::create_dir_all(&opts.out_dir).map_err(|e| Error::io(&opts.out_dir, e))?;
    let mut em = Emitter {
        dir: &opts.out_dir,
        files: Vec::new(),
    };
    let mut metrics = BTreeMap::new();
    let problem = Problem::from_config(cfg)?;
    let g = problem.grid.clone();
    let times = g.times();
    let a = &cfg.algo;

    match name {
        ScenarioName::Nominal => {
            let nominal = run_population(&problem, None, a.trajectories, a.seed)?;
            emit_series(
                &em.path("aggregate.csv"),
                &times,
                &[("nominal", &nominal.aggregate), ("nominal_se", &nominal.std_error)],
            )?;
            emit_trajectories(&em.path("trajectories.csv"), &problem, None, opts.sample_trajectories, a.seed)?;
            if opts.emit_fields {
                emit_field(&em.path("density.csv"), &g, &forward_density(&problem, None)?)?;
            }
            metrics.insert("mean_consumption".into(), time_mean(&g, &nominal.aggregate));
            metrics.insert("out_of_band_fraction".into(), nominal.summary.band_fraction());
            metrics.insert("jumps_per_trajectory".into(), nominal.summary.jumps as f64 / a.trajectories as f64);
        }
        ScenarioName::Tracking => {
            let run = run_tracking(cfg)?;
            emit_series(
                &em.path("aggregate.csv"),
                &times,
                &[
                    ("tracking", &run.optimised.aggregate),
                    ("tracking_se", &run.optimised.std_error),
                    ("reference", &run.reference),
                    ("nominal", &run.nominal.aggregate),
                    ("lambda", &run.uzawa.lambda.values),
                ],
            )?;
            let mut diag = String::from("iteration,grad_norm,W_estimate,tracking_rmse,wallclock_s\n");
            for h in &run.uzawa.history {
                let wall = if opts.wallclock { h.wallclock_s } else { 0.0 };
                diag.push_str(&format!(
                    "{},{},{},{},{}\n",
                    h.iteration,
                    format_sig(h.grad_norm),
                    format_sig(h.dual_value),
                    format_sig(h.tracking_rmse),
                    format_sig(wall)
                ));
            }
            write_file(&em.path("diagnostics.csv"), diag.as_bytes())?;
            emit_field(&em.path("control.csv"), &g, &run.uzawa.control)?;
            if opts.emit_fields {
                emit_field(&em.path("phi.csv"), &g, &run.uzawa.phi)?;
                emit_field(&em.path("density.csv"), &g, &forward_density(&problem, Some(&run.uzawa.control))?)?;
            }
            metrics.insert("rmse".into(), run.rmse);
            metrics.insert("nominal_rmse".into(), run.nominal_rmse);
            metrics.insert("lambda_sup".into(), run.uzawa.lambda.sup_norm());
        }
        ScenarioName::Pricing => {
            let nominal = run_population(&problem, None, a.trajectories, a.seed)?;
            let run = run_pricing(cfg)?;
            emit_series(
                &em.path("aggregate.csv"),
                &times,
                &[
                    ("pricing", &run.optimised.aggregate),
                    ("pricing_se", &run.optimised.std_error),
                    ("nominal", &nominal.aggregate),
                    ("price", &run.price),
                ],
            )?;
            if opts.emit_fields {
                let priced = Problem::from_config(&priced_config(cfg, 0.0)?)?;
                emit_field(&em.path("control.csv"), &g, &run.control)?;
                emit_field(&em.path("phi.csv"), &g, &run.phi)?;
                emit_field(&em.path("density.csv"), &g, &forward_density(&priced, Some(&run.control))?)?;
            }
            metrics.insert("window_mean".into(), window_mean(&g, &run.optimised.aggregate, 8.0, 20.0));
            metrics.insert("nominal_window_mean".into(), window_mean(&g, &nominal.aggregate, 8.0, 20.0));
        }
        ScenarioName::Pricing3Class => {
            let nominal = run_population(&problem, None, a.trajectories, a.seed)?;
            let run = run_pricing_classes(cfg)?;
            let names: Vec<String> = (0..run.classes.len()).map(|c| format!("class_{c}")).collect();
            let price_names: Vec<String> = (0..run.classes.len()).map(|c| format!("price_{c}")).collect();
            let mut cols: Vec<(&str, &[f64])> = names
                .iter()
                .zip(&run.classes)
                .map(|(n, c)| (n.as_str(), c.optimised.aggregate.as_slice()))
                .collect();
            cols.push(("combined", &run.combined));
            cols.push(("nominal", &nominal.aggregate));
            emit_series(&em.path("aggregate.csv"), &times, &cols)?;
            let prices: Vec<(&str, &[f64])> = price_names
                .iter()
                .zip(&run.classes)
                .map(|(n, c)| (n.as_str(), c.price.as_slice()))
                .collect();
            emit_series(&em.path("tariffs.csv"), &times, &prices)?;
            let up = |s: &[f64]| s.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
            metrics.insert("combined_max_step_rise".into(), up(&run.combined));
            metrics.insert("class_0_max_step_rise".into(), up(&run.classes[0].optimised.aggregate));
        }
    }

    let manifest = manifest_json(name, cfg, &em.files, &metrics)?;
    write_file(&em.path("manifest.json"), manifest.as_bytes())?;
    Ok(ScenarioReport {
        scenario: name,
        files: em.files,
        metrics,
    })
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn manifest_json(
    name: ScenarioName,
    cfg: &ScenarioConfig,
    files: &[PathBuf],
    metrics: &BTreeMap<String, f64>,
) -> Result<String> {
    let mut hashes = BTreeMap::new();
    for f in files {
        let bytes = fs::read(f).map_err(|e| Error::io(f, e))?;
        let key = f.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        hashes.insert(key, sha256_hex(&bytes));
    }
    let value = json!({
        "scenario": name.as_str(),
        "version": env!("CARGO_PKG_VERSION"),
        "config_sha256": cfg.digest(),
        "seed": cfg.algo.seed,
        "trajectories": cfg.algo.trajectories,
        "iterations": cfg.algo.iterations,
        "metrics": metrics,
        "files": hashes,
        "config": cfg,
    });
    let mut text = serde_json::to_string_pretty(&value).map_err(|e| Error::Config(e.to_string()))?;
    text.push('\n');
    Ok(text)
}
