//! Monte Carlo generation of PDMP trajectories under `α + α̂`.
//!
//! Each trajectory draws from its own ChaCha stream keyed by
//! `(seed, trajectory index)`, and population reductions run over fixed
//! chunks in index order, so results do not depend on the worker count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dual::CouplingCost;
use crate::error::{Error, Result};
use crate::model::Problem;
use crate::types::{integrate, FieldKind, Mode, StatePoint, ValueField};

/// Occupancy band used by the summary: `[θ_min - 2, θ_max + 2]`.
pub const BAND_MARGIN: f64 = 2.0;

const CHUNK: usize = 256;

/// Initial law: uniform temperature, independent Bernoulli ON mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialLaw {
    pub theta_lo: f64,
    pub theta_hi: f64,
    pub on_probability: f64,
}

impl InitialLaw {
    /// ON is the top mode; with a single mode every agent starts in it.
    pub fn sample(&self, stream: &mut RandomStream, modes: usize) -> StatePoint {
        let theta = self.theta_lo + (self.theta_hi - self.theta_lo) * stream.uniform();
        let on = stream.uniform() < self.on_probability;
        let mode = if on && modes > 1 { modes - 1 } else { 0 };
        StatePoint::new(Mode(mode), theta)
    }
}

/// SplitMix64 finaliser, used to derive independent seeds.
pub fn derive_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based random stream for one trajectory.
pub struct RandomStream(ChaCha8Rng);

impl RandomStream {
    pub fn new(seed: u64, index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        RandomStream(rng)
    }

    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.0.random::<f64>()
    }
}

/// One sampled path. Mode changes take effect at the recorded jump times,
/// which are grid times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub initial: StatePoint,
    pub jump_times: Vec<f64>,
    /// Time index at which each jump takes effect.
    pub jump_steps: Vec<usize>,
    /// Mode on each segment; one more entry than there are jumps.
    pub modes: Vec<Mode>,
    /// Temperature at every time node.
    pub theta_samples: Vec<f64>,
}

impl Trajectory {
    /// Mode held at time node `n`.
    pub fn mode_at(&self, n: usize) -> Mode {
        let seg = self.jump_steps.partition_point(|&s| s <= n);
        self.modes[seg]
    }

    /// Mode at every time node.
    pub fn mode_path(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.theta_samples.len());
        let mut seg = 0;
        for n in 0..self.theta_samples.len() {
            while seg < self.jump_steps.len() && self.jump_steps[seg] <= n {
                seg += 1;
            }
            out.push(self.modes[seg].index());
        }
        out
    }
}

/// Rejects control fields with negative, non-finite or diagonal rates, or
/// with a shape that does not match the grid.
pub fn check_control(problem: &Problem, control: &ValueField) -> Result<()> {
    let g = &problem.grid;
    if control.kind() != FieldKind::ControlRate
        || control.modes() != g.modes
        || control.n_times() != g.n_times()
        || control.n_nodes() != g.n_nodes()
    {
        return Err(Error::InvalidControl("control field does not match the grid".into()));
    }
    control.check_invariants(0.0)
}

struct StepOutcome {
    mode: usize,
    theta: f64,
    jumped: bool,
    control_cost: f64,
}

/// Advances one agent over step `n`.
#[inline]
fn step_agent(
    problem: &Problem,
    control: Option<&ValueField>,
    n: usize,
    mode: usize,
    theta: f64,
    stream: &mut RandomStream,
) -> Result<StepOutcome> {
    let g = &problem.grid;
    let d = g.modes;
    let mut rates = [0.0_f64; 8];
    let mut dyn_rates;
    let rates: &mut [f64] = if d <= rates.len() {
        &mut rates[..d]
    } else {
        dyn_rates = vec![0.0; d];
        &mut dyn_rates
    };

    let mut total = 0.0;
    let mut control_cost = 0.0;
    let stencil = control.map(|_| g.locate(theta));
    for j in 0..d {
        if j == mode {
            continue;
        }
        let mut r = problem.safety_rate(mode, j, theta);
        if let (Some(field), Some((k, w))) = (control, stencil) {
            let row = field.plane(n, field.pair(mode, j));
            let a = (1.0 - w) * row[k] + w * row[k + 1];
            control_cost += problem.jump_cost.big_l(a);
            r += a;
        }
        rates[j] = r;
        total += r;
    }

    let budget = total * g.dt;
    if budget > 1.0 + 1e-12 {
        return Err(Error::JumpBudget {
            product: budget,
            time_h: g.time(n),
        });
    }

    let mut next = mode;
    if total > 0.0 {
        let u = stream.uniform();
        if u < budget {
            // pick the target in proportion to its rate
            let mut acc = 0.0;
            let target = u / g.dt;
            next = mode;
            for (j, r) in rates.iter().enumerate() {
                if j == mode || *r == 0.0 {
                    continue;
                }
                acc += r;
                next = j;
                if target < acc {
                    break;
                }
            }
        }
    }

    Ok(StepOutcome {
        mode: next,
        theta: problem.flow(n, mode).apply(theta),
        jumped: next != mode,
        control_cost: control_cost * g.dt,
    })
}

fn run_trajectory(
    problem: &Problem,
    control: Option<&ValueField>,
    stream: &mut RandomStream,
) -> Result<Trajectory> {
    let g = &problem.grid;
    let initial = problem.initial.sample(stream, g.modes);
    let mut theta_samples = Vec::with_capacity(g.n_times());
    theta_samples.push(initial.theta);
    let mut modes = vec![initial.mode];
    let mut jump_times = Vec::new();
    let mut jump_steps = Vec::new();
    let (mut mode, mut theta) = (initial.mode.index(), initial.theta);
    for n in 0..g.n_t {
        let out = step_agent(problem, control, n, mode, theta, stream)?;
        if out.jumped {
            jump_times.push(g.time(n + 1));
            jump_steps.push(n + 1);
            modes.push(Mode(out.mode));
        }
        mode = out.mode;
        theta = out.theta;
        theta_samples.push(theta);
    }
    Ok(Trajectory {
        initial,
        jump_times,
        jump_steps,
        modes,
        theta_samples,
    })
}

/// Samples one trajectory. `control = None` means `α ≡ 0` (nominal).
pub fn simulate_trajectory(
    problem: &Problem,
    control: Option<&ValueField>,
    stream: &mut RandomStream,
) -> Result<Trajectory> {
    if let Some(c) = control {
        check_control(problem, c)?;
    }
    run_trajectory(problem, control, stream)
}

/// `m` i.i.d. trajectories; trajectory `k` uses stream `(seed, k)`.
pub fn simulate_population(
    problem: &Problem,
    control: Option<&ValueField>,
    m: usize,
    seed: u64,
) -> Result<Vec<Trajectory>> {
    if m == 0 {
        return Err(Error::Usage("population size must be at least 1".into()));
    }
    if let Some(c) = control {
        check_control(problem, c)?;
    }
    (0..m)
        .into_par_iter()
        .map(|k| run_trajectory(problem, control, &mut RandomStream::new(seed, k as u64)))
        .collect()
}

/// Mean normalised consumption at every time node.
pub fn aggregate_consumption(problem: &Problem, trajs: &[Trajectory]) -> Result<Vec<f64>> {
    if trajs.is_empty() {
        return Err(Error::Usage("cannot aggregate an empty population".into()));
    }
    let n_times = problem.grid.n_times();
    let mut sums = vec![0.0; n_times];
    for tr in trajs {
        if tr.theta_samples.len() != n_times {
            return Err(Error::Usage("trajectory does not match the grid".into()));
        }
        for (n, mode) in tr.mode_path().into_iter().enumerate() {
            sums[n] += problem.power(mode);
        }
    }
    let m = trajs.len() as f64;
    Ok(sums.into_iter().map(|s| s / m).collect())
}

/// Individual cost `G` of a stored path, with `L` charged on the control only.
pub fn individual_cost(problem: &Problem, tr: &Trajectory, control: Option<&ValueField>) -> f64 {
    let g = &problem.grid;
    let d = g.modes;
    let path = tr.mode_path();
    let mut running = vec![0.0; g.n_times()];
    for n in 0..g.n_t {
        let (i, theta) = (path[n], tr.theta_samples[n]);
        let mut c = problem.running_cost(n, i, theta);
        if let Some(field) = control {
            for j in (0..d).filter(|&j| j != i) {
                c += problem
                    .jump_cost
                    .big_l(field.sample(g, field.pair(i, j), g.time(n), theta));
            }
        }
        running[n] = c;
    }
    integrate(g, &running) + problem.terminal_cost(path[g.n_t], tr.theta_samples[g.n_t])
}

/// Finite-population cost `J_N`: coupling cost of the empirical aggregate
/// plus the mean individual cost.
pub fn estimate_cost_jn(
    problem: &Problem,
    trajs: &[Trajectory],
    control: Option<&ValueField>,
    coupling: &CouplingCost,
) -> Result<f64> {
    let agg = aggregate_consumption(problem, trajs)?;
    let individual: f64 = trajs
        .iter()
        .map(|tr| individual_cost(problem, tr, control))
        .sum::<f64>()
        / trajs.len() as f64;
    let total = coupling.total(&problem.grid, &agg) + individual;
    if !total.is_finite() {
        return Err(Error::NonFinite("cost estimate"));
    }
    Ok(total)
}

/// Population statistics accumulated without storing trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationSummary {
    pub trajectories: usize,
    /// Sum of mode indices at every time node.
    pub mode_sums: Vec<u64>,
    pub mode_sq_sums: Vec<u64>,
    pub jumps: u64,
    /// Σ over trajectories of the individual cost `G`.
    pub cost_sum: f64,
    pub cost_sq_sum: f64,
    /// Σ over trajectories of `∫ Σ_j L(α_j) dt`.
    pub control_cost_sum: f64,
    /// Σ over trajectories of `G + ∫ λ p dt`; equals `cost_sum` when no
    /// dual path is given.
    pub priced_cost_sum: f64,
    pub priced_cost_sq_sum: f64,
    pub theta_min_seen: f64,
    pub theta_max_seen: f64,
    /// Samples outside `[θ_min - 2, θ_max + 2]`, out of `band_total`.
    pub band_outside: u64,
    pub band_total: u64,
    pub first_jump_sum: f64,
    pub first_jump_count: u64,
}

impl PopulationSummary {
    fn empty(n_times: usize) -> Self {
        PopulationSummary {
            trajectories: 0,
            mode_sums: vec![0; n_times],
            mode_sq_sums: vec![0; n_times],
            jumps: 0,
            cost_sum: 0.0,
            cost_sq_sum: 0.0,
            control_cost_sum: 0.0,
            priced_cost_sum: 0.0,
            priced_cost_sq_sum: 0.0,
            theta_min_seen: f64::INFINITY,
            theta_max_seen: f64::NEG_INFINITY,
            band_outside: 0,
            band_total: 0,
            first_jump_sum: 0.0,
            first_jump_count: 0,
        }
    }

    fn merge(&mut self, other: &PopulationSummary) {
        self.trajectories += other.trajectories;
        for (a, b) in self.mode_sums.iter_mut().zip(&other.mode_sums) {
            *a += b;
        }
        for (a, b) in self.mode_sq_sums.iter_mut().zip(&other.mode_sq_sums) {
            *a += b;
        }
        self.jumps += other.jumps;
        self.cost_sum += other.cost_sum;
        self.cost_sq_sum += other.cost_sq_sum;
        self.control_cost_sum += other.control_cost_sum;
        self.priced_cost_sum += other.priced_cost_sum;
        self.priced_cost_sq_sum += other.priced_cost_sq_sum;
        self.theta_min_seen = self.theta_min_seen.min(other.theta_min_seen);
        self.theta_max_seen = self.theta_max_seen.max(other.theta_max_seen);
        self.band_outside += other.band_outside;
        self.band_total += other.band_total;
        self.first_jump_sum += other.first_jump_sum;
        self.first_jump_count += other.first_jump_count;
    }

    fn scale(&self, modes: usize) -> f64 {
        if modes < 2 {
            0.0
        } else {
            1.0 / (modes - 1) as f64
        }
    }

    /// Mean normalised consumption per time node.
    pub fn aggregate(&self, modes: usize) -> Vec<f64> {
        let s = self.scale(modes) / self.trajectories as f64;
        self.mode_sums.iter().map(|&v| v as f64 * s).collect()
    }

    /// Standard error of the aggregate per time node.
    pub fn aggregate_std_error(&self, modes: usize) -> Vec<f64> {
        let m = self.trajectories as f64;
        let s = self.scale(modes);
        self.mode_sums
            .iter()
            .zip(&self.mode_sq_sums)
            .map(|(&a, &b)| {
                let mean = a as f64 * s / m;
                let sq = b as f64 * s * s / m;
                ((sq - mean * mean).max(0.0) / m).sqrt()
            })
            .collect()
    }

    pub fn mean_cost(&self) -> f64 {
        self.cost_sum / self.trajectories as f64
    }

    pub fn cost_std_error(&self) -> f64 {
        let m = self.trajectories as f64;
        let mean = self.mean_cost();
        ((self.cost_sq_sum / m - mean * mean).max(0.0) / m).sqrt()
    }

    pub fn mean_priced_cost(&self) -> f64 {
        self.priced_cost_sum / self.trajectories as f64
    }

    pub fn priced_cost_std_error(&self) -> f64 {
        let m = self.trajectories as f64;
        let mean = self.mean_priced_cost();
        ((self.priced_cost_sq_sum / m - mean * mean).max(0.0) / m).sqrt()
    }

    pub fn band_fraction(&self) -> f64 {
        self.band_outside as f64 / self.band_total as f64
    }

    pub fn mean_first_jump(&self) -> f64 {
        self.first_jump_sum / self.first_jump_count as f64
    }
}

fn summarize_chunk(
    problem: &Problem,
    control: Option<&ValueField>,
    lambda: Option<&[f64]>,
    seed: u64,
    range: std::ops::Range<usize>,
) -> Result<PopulationSummary> {
    let g = &problem.grid;
    let (band_lo, band_hi) = (
        problem.safety.theta_min - BAND_MARGIN,
        problem.safety.theta_max + BAND_MARGIN,
    );
    let mut s = PopulationSummary::empty(g.n_times());
    for k in range {
        let mut stream = RandomStream::new(seed, k as u64);
        let init = problem.initial.sample(&mut stream, g.modes);
        let (mut mode, mut theta) = (init.mode.index(), init.theta);
        let mut cost = 0.0;
        let mut control_cost = 0.0;
        let mut priced = 0.0;
        let mut first_jump = None;
        for n in 0..=g.n_t {
            s.mode_sums[n] += mode as u64;
            s.mode_sq_sums[n] += (mode * mode) as u64;
            s.theta_min_seen = s.theta_min_seen.min(theta);
            s.theta_max_seen = s.theta_max_seen.max(theta);
            s.band_total += 1;
            if theta < band_lo || theta > band_hi {
                s.band_outside += 1;
            }
            if n == g.n_t {
                break;
            }
            cost += g.dt * problem.running_cost(n, mode, theta);
            if let Some(lam) = lambda {
                priced += g.dt * lam[n] * problem.power(mode);
            }
            let out = step_agent(problem, control, n, mode, theta, &mut stream)?;
            control_cost += out.control_cost;
            if out.jumped {
                s.jumps += 1;
                first_jump.get_or_insert(g.time(n + 1));
            }
            mode = out.mode;
            theta = out.theta;
        }
        cost += control_cost + problem.terminal_cost(mode, theta);
        s.trajectories += 1;
        s.cost_sum += cost;
        s.cost_sq_sum += cost * cost;
        s.control_cost_sum += control_cost;
        s.priced_cost_sum += cost + priced;
        s.priced_cost_sq_sum += (cost + priced) * (cost + priced);
        if let Some(t) = first_jump {
            s.first_jump_sum += t;
            s.first_jump_count += 1;
        }
    }
    Ok(s)
}

/// Simulates `m` trajectories (same streams as [`simulate_population`]) and
/// keeps only population statistics.
pub fn simulate_summary(
    problem: &Problem,
    control: Option<&ValueField>,
    m: usize,
    seed: u64,
) -> Result<PopulationSummary> {
    summary_impl(problem, control, None, m, seed)
}

/// As [`simulate_summary`], also accumulating `G + ∫ λ p dt` per trajectory.
pub fn simulate_summary_priced(
    problem: &Problem,
    control: Option<&ValueField>,
    lambda: &[f64],
    m: usize,
    seed: u64,
) -> Result<PopulationSummary> {
    if lambda.len() != problem.grid.n_times() {
        return Err(Error::Usage("dual path does not match the grid".into()));
    }
    summary_impl(problem, control, Some(lambda), m, seed)
}

fn summary_impl(
    problem: &Problem,
    control: Option<&ValueField>,
    lambda: Option<&[f64]>,
    m: usize,
    seed: u64,
) -> Result<PopulationSummary> {
    if m == 0 {
        return Err(Error::Usage("population size must be at least 1".into()));
    }
    if let Some(c) = control {
        check_control(problem, c)?;
    }
    let chunks = m.div_ceil(CHUNK);
    let parts: Vec<PopulationSummary> = (0..chunks)
        .into_par_iter()
        .map(|c| summarize_chunk(problem, control, lambda, seed, c * CHUNK..((c + 1) * CHUNK).min(m)))
        .collect::<Result<_>>()?;
    let mut total = PopulationSummary::empty(problem.grid.n_times());
    for p in &parts {
        total.merge(p);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{DriftModel, RunningCost, SafetyIntensity, TerminalCost};
    use crate::hamiltonian::JumpCost;
    use crate::table::TimeTable;
    use crate::types::Grid;

    fn still_problem(horizon: f64, n_t: usize, peak: f64) -> Problem {
        let grid = Grid::new(horizon, n_t, 40.0, 70.0, 30, 2).unwrap();
        Problem::new(
            grid,
            DriftModel {
                sigma_p: 12.0,
                rho: 0.005,
                theta_amb: 20.0,
                theta_in: 15.0,
                eps: TimeTable::constant(0.01),
            },
            SafetyIntensity {
                theta_min: 50.0,
                theta_max: 65.0,
                peak,
                ramp_width: 1.0,
            },
            JumpCost::default(),
            RunningCost::Zero,
            TerminalCost::Zero,
            InitialLaw {
                theta_lo: 50.0,
                theta_hi: 65.0,
                on_probability: 0.38,
            },
        )
    }

    fn constant_control(problem: &Problem, rate: f64) -> ValueField {
        let g = &problem.grid;
        ValueField::from_fn(FieldKind::ControlRate, g, |_, p, _| {
            if p / g.modes != p % g.modes {
                rate
            } else {
                0.0
            }
        })
    }

    #[test]
    fn zero_intensity_gives_pure_flow() {
        let mut p = still_problem(24.0, 720, 12.0);
        p.safety.peak = 0.0;
        let p = p.with_grid(p.grid.clone());
        let tr = simulate_trajectory(&p, None, &mut RandomStream::new(3, 0)).unwrap();
        assert!(tr.jump_times.is_empty());
        let mut theta = tr.initial.theta;
        for n in 0..p.grid.n_t {
            theta = p.flow(n, tr.initial.mode.index()).apply(theta);
            assert_eq!(tr.theta_samples[n + 1], theta);
        }
    }

    #[test]
    fn trajectory_is_replayable() {
        let p = still_problem(24.0, 720, 12.0);
        let c = constant_control(&p, 0.5);
        let tr = simulate_trajectory(&p, Some(&c), &mut RandomStream::new(11, 4)).unwrap();
        assert!(!tr.jump_times.is_empty());
        assert!(tr.jump_times.windows(2).all(|w| w[0] < w[1]));
        assert!(tr.modes.windows(2).all(|w| w[0] != w[1]));
        let path = tr.mode_path();
        for n in 0..p.grid.n_t {
            let next = p.flow(n, path[n]).apply(tr.theta_samples[n]);
            assert_eq!(tr.theta_samples[n + 1], next);
            assert_eq!(tr.mode_at(n), Mode(path[n]));
        }
    }

    #[test]
    fn constant_intensity_inter_jump_time() {
        // Safety off, symmetric control rate μ: inter-jump times are
        // geometric on the grid with mean exactly 1/μ.
        let mut p = still_problem(200.0, 6000, 12.0);
        p.safety.peak = 0.0;
        let p = p.with_grid(p.grid.clone());
        let mu = 2.0;
        let c = constant_control(&p, mu);
        let mut gaps = Vec::new();
        let mut k = 0;
        while gaps.len() < 10_000 {
            let tr = simulate_trajectory(&p, Some(&c), &mut RandomStream::new(5, k)).unwrap();
            gaps.extend(tr.jump_times.windows(2).map(|w| w[1] - w[0]));
            k += 1;
        }
        gaps.truncate(10_000);
        let n = gaps.len() as f64;
        let mean = gaps.iter().sum::<f64>() / n;
        let var = gaps.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let se = (var / n).sqrt();
        assert!((mean - 1.0 / mu).abs() < 3.0 * se, "mean {mean}, se {se}");
    }

    #[test]
    fn population_matches_single_streams_and_is_deterministic() {
        let p = still_problem(2.0, 60, 12.0);
        let one = simulate_population(&p, None, 1, 9).unwrap();
        let direct = simulate_trajectory(&p, None, &mut RandomStream::new(9, 0)).unwrap();
        assert_eq!(one, vec![direct]);
        let a = simulate_population(&p, None, 50, 9).unwrap();
        let b = simulate_population(&p, None, 50, 9).unwrap();
        assert_eq!(a, b);
        assert!(simulate_population(&p, None, 0, 9).is_err());
    }

    #[test]
    fn summary_agrees_with_stored_trajectories() {
        let p = still_problem(4.0, 120, 12.0);
        let c = constant_control(&p, 0.8);
        let trajs = simulate_population(&p, Some(&c), 700, 21).unwrap();
        let s = simulate_summary(&p, Some(&c), 700, 21).unwrap();
        assert_eq!(aggregate_consumption(&p, &trajs).unwrap(), s.aggregate(2));
        let jumps: usize = trajs.iter().map(|t| t.jump_times.len()).sum();
        assert_eq!(s.jumps as usize, jumps);
        let g_mean: f64 =
            trajs.iter().map(|t| individual_cost(&p, t, Some(&c))).sum::<f64>() / 700.0;
        assert!((g_mean - s.mean_cost()).abs() < 1e-9 * g_mean.abs().max(1.0));
    }

    #[test]
    fn aggregate_frozen_populations() {
        let p = still_problem(1.0, 10, 0.0);
        let frozen = |mode: usize| Trajectory {
            initial: StatePoint::new(Mode(mode), 55.0),
            jump_times: vec![],
            jump_steps: vec![],
            modes: vec![Mode(mode)],
            theta_samples: vec![55.0; 11],
        };
        let off = vec![frozen(0); 4];
        let on = vec![frozen(1); 4];
        let half = vec![frozen(0), frozen(1), frozen(0), frozen(1)];
        assert_eq!(aggregate_consumption(&p, &off).unwrap(), vec![0.0; 11]);
        assert_eq!(aggregate_consumption(&p, &on).unwrap(), vec![1.0; 11]);
        assert_eq!(aggregate_consumption(&p, &half).unwrap(), vec![0.5; 11]);
        assert!(aggregate_consumption(&p, &[]).is_err());
    }

    #[test]
    fn bad_controls_are_rejected() {
        let p = still_problem(1.0, 10, 12.0);
        let mut c = constant_control(&p, 0.5);
        c.set(3, c.pair(0, 1), 4, -1.0);
        assert!(simulate_trajectory(&p, Some(&c), &mut RandomStream::new(0, 0)).is_err());
        let mut c = constant_control(&p, 0.5);
        c.set(3, c.pair(0, 1), 4, f64::NAN);
        assert!(simulate_population(&p, Some(&c), 3, 0).is_err());
    }

    #[test]
    fn initial_on_fraction() {
        let p = still_problem(0.1, 10, 12.0);
        let s = simulate_summary(&p, None, 100_000, 1).unwrap();
        let frac = s.aggregate(2)[0];
        let se = (0.38_f64 * 0.62 / 1e5).sqrt();
        assert!((frac - 0.38).abs() < 3.0 * se, "{frac}");
    }
}
