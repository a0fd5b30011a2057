//! Backward value-function solver, control extraction, stability checks and
//! the forward density solver.
//!
//! The backward sweep and the density evolution are the two halves of one
//! Markov chain on the grid nodes: on step `n` an agent at `(i, θ_k)` moves
//! to `θ' = flow(n, i, θ_k)`, is split onto the two neighbouring nodes of
//! `θ'` by linear weights, and switches to `j` with probability
//! `dt (α_j + α̂_j)(n, i, θ_k)`. Linear interpolation of `φ(n+1)` at `θ'` is
//! the expectation over that split, so the density is the exact law of the
//! chain that `φ` optimises.

use crate::error::{Error, Result};
use crate::model::Problem;
use crate::types::{integrate, DualPath, FieldKind, ValueField};

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSettings {
    /// `solve_phi` fails once any `|φ|` exceeds this.
    pub max_phi_magnitude: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            max_phi_magnitude: 1e9,
        }
    }
}

impl SolverSettings {
    pub fn is_valid(&self) -> bool {
        self.max_phi_magnitude.is_finite() && self.max_phi_magnitude > 0.0
    }
}

const STABILITY_SLACK: f64 = 1e-12;

/// Both stability conditions of the explicit scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct CflReport {
    /// `B = max |b|` over the grid, °C/h.
    pub drift_bound: f64,
    /// `B dt / dθ`; must not exceed 1.
    pub courant: f64,
    pub alpha_bound: f64,
    pub safety_sup: f64,
    /// `dt (alpha_bound + ‖α̂‖∞)`; must not exceed 1.
    pub jump_budget: f64,
}

impl CflReport {
    pub fn courant_ok(&self) -> bool {
        self.courant <= 1.0 + STABILITY_SLACK
    }

    pub fn jump_ok(&self) -> bool {
        self.jump_budget <= 1.0 + STABILITY_SLACK
    }

    pub fn passed(&self) -> bool {
        self.courant_ok() && self.jump_ok()
    }

    pub fn courant_margin(&self) -> f64 {
        1.0 - self.courant
    }

    pub fn jump_margin(&self) -> f64 {
        1.0 - self.jump_budget
    }
}

pub fn cfl_check(problem: &Problem, alpha_bound: f64) -> CflReport {
    let g = &problem.grid;
    let drift_bound = problem.drift_bound();
    let safety_sup = problem.safety_sup();
    CflReport {
        drift_bound,
        courant: drift_bound * g.dt / g.dtheta,
        alpha_bound,
        safety_sup,
        jump_budget: g.dt * (alpha_bound + safety_sup),
    }
}

/// Bound on the optimal control from the solve with `λ ≡ 0`:
/// `H′(2 max (φ⁰_i − φ⁰_j))` over all nodes and mode pairs.
pub fn a_priori_alpha_bound(problem: &Problem) -> Result<f64> {
    let phi = solve_phi(problem, &DualPath::zeros(&problem.grid), &SolverSettings::default())?;
    let g = &problem.grid;
    let mut spread = 0.0_f64;
    for n in 0..g.n_times() {
        for i in 0..g.modes {
            for j in 0..g.modes {
                let (a, b) = (phi.plane(n, i), phi.plane(n, j));
                for k in 0..g.n_nodes() {
                    spread = spread.max(a[k] - b[k]);
                }
            }
        }
    }
    Ok(problem.jump_cost.h_prime(2.0 * spread))
}

/// Values of `φ(n+1, j, ·)` at `flow(n, i, θ_k)` for every mode `j`.
#[inline]
fn lookahead(problem: &Problem, next: &[f64], n: usize, i: usize, k: usize, out: &mut [f64]) {
    let g = &problem.grid;
    let nodes = g.n_nodes();
    let theta = problem.flow(n, i).apply(g.theta(k));
    let (kk, w) = g.locate(theta);
    for (j, o) in out.iter_mut().enumerate() {
        let row = &next[j * nodes..(j + 1) * nodes];
        *o = (1.0 - w) * row[kk] + w * row[kk + 1];
    }
}

fn check_lambda(problem: &Problem, lambda: &DualPath) -> Result<()> {
    if lambda.len() != problem.grid.n_times() {
        return Err(Error::Config(format!(
            "dual path has {} entries, grid has {} time nodes",
            lambda.len(),
            problem.grid.n_times()
        )));
    }
    if lambda.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("dual path"));
    }
    Ok(())
}

/// Backward sweep for `φ[λ]`.
pub fn solve_phi(problem: &Problem, lambda: &DualPath, settings: &SolverSettings) -> Result<ValueField> {
    check_lambda(problem, lambda)?;
    if !settings.is_valid() {
        return Err(Error::Config("max_phi_magnitude must be finite and positive".into()));
    }
    let g = &problem.grid;
    let d = g.modes;
    let nodes = g.n_nodes();
    let mut phi = ValueField::zeros(FieldKind::Value, g);
    for i in 0..d {
        for k in 0..nodes {
            phi.set(g.n_t, i, k, problem.terminal_cost(i, g.theta(k)));
        }
    }
    let mut tilde = vec![0.0; d];
    let mut next = vec![0.0; d * nodes];
    for n in (0..g.n_t).rev() {
        next.copy_from_slice(phi.slice(n + 1));
        let lam = lambda.values[n];
        let slice = phi.slice_mut(n);
        for i in 0..d {
            let p = problem.power(i);
            for k in 0..nodes {
                lookahead(problem, &next, n, i, k, &mut tilde);
                let mut rate = problem.running_cost(n, i, g.theta(k)) + p * lam;
                for j in (0..d).filter(|&j| j != i) {
                    let diff = tilde[i] - tilde[j];
                    rate += -problem.safety_at_node(i, j, k) * diff - problem.jump_cost.h(diff);
                }
                let v = tilde[i] + g.dt * rate;
                if !(v.abs() <= settings.max_phi_magnitude) {
                    return Err(Error::Diverged {
                        magnitude: v.abs(),
                        time_h: g.time(n),
                        guard: settings.max_phi_magnitude,
                    });
                }
                slice[i * nodes + k] = v;
            }
        }
    }
    Ok(phi)
}

/// Optimal control of the sweep that produced `phi`:
/// `α_j(n, i, θ_k) = H′(φ̃_i − φ̃_j)` with `φ̃` the look-ahead values. The
/// last time slice carries no step and is zero.
pub fn extract_control(problem: &Problem, phi: &ValueField) -> ValueField {
    let g = &problem.grid;
    let d = g.modes;
    let nodes = g.n_nodes();
    let mut control = ValueField::zeros(FieldKind::ControlRate, g);
    let mut tilde = vec![0.0; d];
    for n in 0..g.n_t {
        let next = phi.slice(n + 1);
        for i in 0..d {
            for k in 0..nodes {
                lookahead(problem, next, n, i, k, &mut tilde);
                for j in (0..d).filter(|&j| j != i) {
                    let a = problem.jump_cost.h_prime(tilde[i] - tilde[j]);
                    control.set(n, control.pair(i, j), k, a);
                }
            }
        }
    }
    control
}

/// `max α` over the field.
pub fn max_control_rate(control: &ValueField) -> f64 {
    control.max_abs()
}

/// A-posteriori form of the jump-rate condition for a computed control.
pub fn check_jump_budget(problem: &Problem, control: &ValueField) -> Result<()> {
    let g = &problem.grid;
    let report = cfl_check(problem, max_control_rate(control));
    if report.jump_ok() {
        return Ok(());
    }
    // locate the first offending step for the diagnostic
    let mut worst = (0.0_f64, 0usize);
    for n in 0..g.n_t {
        for i in 0..g.modes {
            for k in 0..g.n_nodes() {
                let total: f64 = (0..g.modes)
                    .filter(|&j| j != i)
                    .map(|j| control.get(n, control.pair(i, j), k) + problem.safety_at_node(i, j, k))
                    .sum();
                if total * g.dt > worst.0 {
                    worst = (total * g.dt, n);
                }
            }
        }
    }
    Err(Error::JumpBudget {
        product: report.jump_budget.max(worst.0),
        time_h: g.time(worst.1),
    })
}

/// Policy evaluation: expected cost-to-go of a fixed control, with `L`
/// charged on the control and `p λ` added to the running cost.
pub fn evaluate_policy(
    problem: &Problem,
    control: &ValueField,
    lambda: &DualPath,
) -> Result<ValueField> {
    check_lambda(problem, lambda)?;
    crate::simulator::check_control(problem, control)?;
    let g = &problem.grid;
    let d = g.modes;
    let nodes = g.n_nodes();
    let mut psi = ValueField::zeros(FieldKind::Value, g);
    for i in 0..d {
        for k in 0..nodes {
            psi.set(g.n_t, i, k, problem.terminal_cost(i, g.theta(k)));
        }
    }
    let mut tilde = vec![0.0; d];
    let mut next = vec![0.0; d * nodes];
    for n in (0..g.n_t).rev() {
        next.copy_from_slice(psi.slice(n + 1));
        for i in 0..d {
            for k in 0..nodes {
                lookahead(problem, &next, n, i, k, &mut tilde);
                let mut rate =
                    problem.running_cost(n, i, g.theta(k)) + problem.power(i) * lambda.values[n];
                for j in (0..d).filter(|&j| j != i) {
                    let a = control.get(n, control.pair(i, j), k);
                    rate += problem.jump_cost.big_l(a)
                        + (a + problem.safety_at_node(i, j, k)) * (tilde[j] - tilde[i]);
                }
                psi.set(n, i, k, tilde[i] + g.dt * rate);
            }
        }
    }
    Ok(psi)
}

/// Node masses of the initial law: uniform temperature projected onto the
/// nodes with hat weights, times the Bernoulli mode law. Plane-major.
pub fn initial_density(problem: &Problem) -> Vec<f64> {
    let g = &problem.grid;
    let d = g.modes;
    let nodes = g.n_nodes();
    let law = &problem.initial;
    let mut theta_mass = vec![0.0; nodes];
    let (a, b) = (law.theta_lo, law.theta_hi);
    if b > a {
        let span = b - a;
        if a < g.theta_lo {
            theta_mass[0] += (b.min(g.theta_lo) - a) / span;
        }
        if b > g.theta_hi {
            theta_mass[nodes - 1] += (b - a.max(g.theta_hi)) / span;
        }
        for k in 0..g.n_theta {
            let (c0, c1) = (g.theta(k), g.theta(k + 1));
            let (x0, x1) = (a.max(c0), b.min(c1));
            if x1 <= x0 {
                continue;
            }
            let share = (x1 - x0) / span;
            let w_up = (0.5 * (x0 + x1) - c0) / g.dtheta;
            theta_mass[k] += share * (1.0 - w_up);
            theta_mass[k + 1] += share * w_up;
        }
    } else {
        let (k, w) = g.locate(a);
        theta_mass[k] += 1.0 - w;
        theta_mass[k + 1] += w;
    }
    let on = if d > 1 { law.on_probability } else { 0.0 };
    let mut out = vec![0.0; d * nodes];
    for k in 0..nodes {
        out[k] += (1.0 - on) * theta_mass[k];
        out[(d - 1) * nodes + k] += on * theta_mass[k];
    }
    out
}

/// Law of the grid chain under `α + α̂`, starting from [`initial_density`].
/// `control = None` means `α ≡ 0`.
pub fn forward_density(problem: &Problem, control: Option<&ValueField>) -> Result<ValueField> {
    if let Some(c) = control {
        crate::simulator::check_control(problem, c)?;
    }
    let g = &problem.grid;
    let d = g.modes;
    let nodes = g.n_nodes();
    let mut m = ValueField::zeros(FieldKind::Density, g);
    m.slice_mut(0).copy_from_slice(&initial_density(problem));
    let mut out = vec![0.0; d * nodes];
    for n in 0..g.n_t {
        out.iter_mut().for_each(|v| *v = 0.0);
        let cur = m.slice(n);
        for i in 0..d {
            for k in 0..nodes {
                let mass = cur[i * nodes + k];
                if mass == 0.0 {
                    continue;
                }
                let (kk, w) = g.locate(problem.flow(n, i).apply(g.theta(k)));
                let mut stay = 1.0;
                for j in (0..d).filter(|&j| j != i) {
                    let mut rate = problem.safety_at_node(i, j, k);
                    if let Some(c) = control {
                        rate += c.get(n, c.pair(i, j), k);
                    }
                    let pj = rate * g.dt;
                    stay -= pj;
                    out[j * nodes + kk] += mass * pj * (1.0 - w);
                    out[j * nodes + kk + 1] += mass * pj * w;
                }
                if stay < -STABILITY_SLACK {
                    return Err(Error::NegativeMass {
                        mass: mass * stay,
                        time_h: g.time(n),
                    });
                }
                out[i * nodes + kk] += mass * stay * (1.0 - w);
                out[i * nodes + kk + 1] += mass * stay * w;
            }
        }
        if let Some(v) = out.iter().find(|v| **v < 0.0) {
            return Err(Error::NegativeMass {
                mass: *v,
                time_h: g.time(n + 1),
            });
        }
        m.slice_mut(n + 1).copy_from_slice(&out);
    }
    Ok(m)
}

/// `E[p]` at every time node.
pub fn expected_consumption(problem: &Problem, density: &ValueField) -> Vec<f64> {
    let g = &problem.grid;
    (0..g.n_times())
        .map(|n| {
            (0..g.modes)
                .map(|i| problem.power(i) * density.plane(n, i).iter().sum::<f64>())
                .sum()
        })
        .collect()
}

/// `E[φ(0, X_0)]` under the initial law of the chain.
pub fn expected_initial_value(problem: &Problem, phi: &ValueField) -> f64 {
    initial_density(problem)
        .iter()
        .zip(phi.slice(0))
        .map(|(m, v)| m * v)
        .sum()
}

/// `E[G]` of a control under its density: running cost, `L` on the control
/// and terminal cost.
pub fn expected_individual_cost(problem: &Problem, density: &ValueField, control: &ValueField) -> f64 {
    let g = &problem.grid;
    let d = g.modes;
    let mut rates = vec![0.0; g.n_times()];
    for (n, r) in rates.iter_mut().enumerate().take(g.n_t) {
        for i in 0..d {
            let masses = density.plane(n, i);
            for (k, &mass) in masses.iter().enumerate() {
                let mut c = problem.running_cost(n, i, g.theta(k));
                for j in (0..d).filter(|&j| j != i) {
                    c += problem.jump_cost.big_l(control.get(n, control.pair(i, j), k));
                }
                *r += mass * c;
            }
        }
    }
    let terminal: f64 = (0..d)
        .map(|i| {
            density
                .plane(g.n_t, i)
                .iter()
                .enumerate()
                .map(|(k, m)| m * problem.terminal_cost(i, g.theta(k)))
                .sum::<f64>()
        })
        .sum();
    integrate(g, &rates) + terminal
}

/// Where the integral-equation residual is sampled.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualWindow {
    /// Start times of the characteristics, hours.
    pub start: f64,
    pub end: f64,
    /// Length of each characteristic, hours.
    pub span: f64,
    /// Temperature band of the start points, °C.
    pub theta_lo: f64,
    pub theta_hi: f64,
    /// Quadrature steps per hour along each characteristic.
    pub resolution: usize,
}

/// Mean and max absolute residual of `φ` in the integral equation
///
/// `φ(t, i, θ) = ∫_t^{t+S} [c + p λ − Σ H(φ_i − φ_j) + Σ α̂_j (φ_j − φ_i)](s, i, θ_s) ds
///              + φ(t+S, i, θ_{t+S})`
///
/// along the exact characteristic `θ_s` from every grid node in the window.
/// Fields are evaluated by bilinear interpolation; `λ` is read as a step
/// function of time, so it may come from another grid.
pub fn phi_residual(
    problem: &Problem,
    phi: &ValueField,
    lambda: &crate::types::Grid,
    lambda_values: &[f64],
    window: &ResidualWindow,
) -> (f64, f64) {
    let g = &problem.grid;
    let d = g.modes;
    let h = 1.0 / window.resolution as f64;
    let steps = (window.span / h).round() as usize;
    let lam_at = |t: f64| lambda_values[lambda.step_of(t)];
    let mut total = 0.0;
    let mut worst = 0.0_f64;
    let mut count = 0usize;
    let mut vals = vec![0.0; d];
    for n in 0..g.n_t {
        let t0 = g.time(n);
        if t0 < window.start - 1e-9 || t0 > window.end + 1e-9 || t0 + window.span > g.horizon + 1e-9 {
            continue;
        }
        for i in 0..d {
            for k in 0..g.n_nodes() {
                let theta0 = g.theta(k);
                if theta0 < window.theta_lo || theta0 > window.theta_hi {
                    continue;
                }
                let mut theta = theta0;
                let mut integral = 0.0;
                for s in 0..steps {
                    let t = t0 + s as f64 * h;
                    let mid_t = t + 0.5 * h;
                    let eps = problem.drift.eps.value(mid_t);
                    let half = problem.drift.affine_step(i, eps, 0.5 * h);
                    let theta_mid = half.apply(theta);
                    for (j, v) in vals.iter_mut().enumerate() {
                        *v = phi.sample(g, j, mid_t, theta_mid);
                    }
                    let n_mid = g.step_of(mid_t);
                    let mut rate = problem.running_cost(n_mid, i, theta_mid) + problem.power(i) * lam_at(mid_t);
                    for j in (0..d).filter(|&j| j != i) {
                        let diff = vals[i] - vals[j];
                        rate += -problem.safety_rate(i, j, theta_mid) * diff - problem.jump_cost.h(diff);
                    }
                    integral += h * rate;
                    theta = problem.drift.affine_step(i, eps, h).apply(theta);
                }
                let rhs = integral + phi.sample(g, i, t0 + window.span, theta);
                let r = (phi.get(n, i, k) - rhs).abs();
                total += r;
                worst = worst.max(r);
                count += 1;
            }
        }
    }
    (total / count.max(1) as f64, worst)
}
