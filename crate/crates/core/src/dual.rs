//! Dual decomposition: best response, dual gradient and value, and the
//! stochastic Uzawa ascent on λ.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hjb::{
    check_jump_budget, expected_consumption, expected_individual_cost, expected_initial_value,
    extract_control, forward_density, solve_phi, SolverSettings,
};
use crate::model::Problem;
use crate::simulator::{derive_seed, simulate_summary_priced};
use crate::types::{inner, integrate, DualPath, Grid, ValueField};

/// Cost on the aggregate consumption.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CouplingCost {
    None,
    /// `f(t, e) = κ (e − r_t)²`, with `r` sampled on the time nodes.
    Tracking { kappa: f64, reference: Vec<f64> },
}

impl CouplingCost {
    pub fn tracking(grid: &Grid, kappa: f64, reference: Vec<f64>) -> Result<Self> {
        if !(kappa > 0.0) || !kappa.is_finite() {
            return Err(Error::Config(format!("tracking weight must be positive, got {kappa}")));
        }
        if reference.len() != grid.n_times() {
            return Err(Error::Config(format!(
                "reference has {} entries, grid has {} time nodes",
                reference.len(),
                grid.n_times()
            )));
        }
        if reference.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("reference signal"));
        }
        Ok(CouplingCost::Tracking { kappa, reference })
    }

    pub fn kappa(&self) -> Option<f64> {
        match self {
            CouplingCost::Tracking { kappa, .. } => Some(*kappa),
            CouplingCost::None => None,
        }
    }

    pub fn reference(&self) -> Option<&[f64]> {
        match self {
            CouplingCost::Tracking { reference, .. } => Some(reference),
            CouplingCost::None => None,
        }
    }

    /// `f(t_n, e)`.
    pub fn value(&self, n: usize, e: f64) -> f64 {
        match self {
            CouplingCost::None => 0.0,
            CouplingCost::Tracking { kappa, reference } => kappa * (e - reference[n]).powi(2),
        }
    }

    /// `∫ f(t, e_t) dt`.
    pub fn total(&self, grid: &Grid, series: &[f64]) -> f64 {
        let values: Vec<f64> = series.iter().enumerate().map(|(n, e)| self.value(n, *e)).collect();
        integrate(grid, &values)
    }

    /// `F(v[λ]) − ∫ v[λ] λ dt = −∫ (λ² / 4κ + r λ) dt`.
    pub fn conjugate_term(&self, grid: &Grid, lambda: &DualPath) -> Result<f64> {
        let v = best_response_v(lambda, self)?;
        Ok(self.total(grid, &v) - inner(grid, &v, &lambda.values))
    }
}

/// Pointwise minimiser of `f(t, v) − v λ(t)`: `v = r + λ / 2κ`.
pub fn best_response_v(lambda: &DualPath, fc: &CouplingCost) -> Result<Vec<f64>> {
    match fc {
        CouplingCost::None => Err(Error::Usage(
            "no coupling cost: the problem decouples and has no dual best response".into(),
        )),
        CouplingCost::Tracking { kappa, reference } => {
            if reference.len() != lambda.len() {
                return Err(Error::Config("reference and dual path lengths differ".into()));
            }
            Ok(reference
                .iter()
                .zip(&lambda.values)
                .map(|(r, l)| r + l / (2.0 * kappa))
                .collect())
        }
    }
}

/// Source of the expectations in the dual gradient and value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GradientOracle {
    MonteCarlo { trajectories: usize, seed: u64 },
    Density,
}

/// Everything computed at one dual point.
#[derive(Debug, Clone)]
pub struct DualEvaluation {
    pub phi: ValueField,
    pub control: ValueField,
    /// `E[p]` per time node.
    pub consumption: Vec<f64>,
    /// Standard errors of `consumption`; zero for the density oracle.
    pub consumption_se: Vec<f64>,
    /// `v[λ]`.
    pub response: Vec<f64>,
    /// `U = E[p] − v[λ]`, the representative of `DW(λ)`.
    pub gradient: Vec<f64>,
    /// `E[G]` under the optimal control.
    pub individual_cost: f64,
    pub dual_value: f64,
    pub dual_value_se: f64,
}

/// Value function, control, expectations and dual quantities at `λ`.
pub fn evaluate_dual(
    problem: &Problem,
    coupling: &CouplingCost,
    lambda: &DualPath,
    oracle: GradientOracle,
    settings: &SolverSettings,
) -> Result<DualEvaluation> {
    let response = best_response_v(lambda, coupling)?;
    let conj = coupling.conjugate_term(&problem.grid, lambda)?;
    let phi = solve_phi(problem, lambda, settings)?;
    let control = extract_control(problem, &phi);
    check_jump_budget(problem, &control)?;
    let g = &problem.grid;
    let (consumption, consumption_se, individual_cost, dual_value, dual_value_se) = match oracle {
        GradientOracle::Density => {
            let density = forward_density(problem, Some(&control))?;
            let e = expected_consumption(problem, &density);
            let cost = expected_individual_cost(problem, &density, &control);
            let w = expected_initial_value(problem, &phi) + conj;
            (e, vec![0.0; g.n_times()], cost, w, 0.0)
        }
        GradientOracle::MonteCarlo { trajectories, seed } => {
            let s = simulate_summary_priced(problem, Some(&control), &lambda.values, trajectories, seed)?;
            let w = s.mean_priced_cost() + conj;
            (
                s.aggregate(g.modes),
                s.aggregate_std_error(g.modes),
                s.mean_cost(),
                w,
                s.priced_cost_std_error(),
            )
        }
    };
    let gradient: Vec<f64> = consumption.iter().zip(&response).map(|(e, v)| e - v).collect();
    if !dual_value.is_finite() || gradient.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("dual evaluation"));
    }
    Ok(DualEvaluation {
        phi,
        control,
        consumption,
        consumption_se,
        response,
        gradient,
        individual_cost,
        dual_value,
        dual_value_se,
    })
}

/// `U(t) = E[p(t, X_t)] − v[λ](t)`.
pub fn dual_gradient(
    problem: &Problem,
    coupling: &CouplingCost,
    lambda: &DualPath,
    oracle: GradientOracle,
    settings: &SolverSettings,
) -> Result<Vec<f64>> {
    Ok(evaluate_dual(problem, coupling, lambda, oracle, settings)?.gradient)
}

/// `W(λ) = E[G] + ∫ E[p] λ + F(v[λ]) − ∫ v[λ] λ`.
pub fn dual_value_estimate(
    problem: &Problem,
    coupling: &CouplingCost,
    lambda: &DualPath,
    oracle: GradientOracle,
    settings: &SolverSettings,
) -> Result<f64> {
    Ok(evaluate_dual(problem, coupling, lambda, oracle, settings)?.dual_value)
}

/// `ρ_k = a / (k + 1)`.
pub fn step_size(a: f64, k: usize) -> f64 {
    a / (k + 1) as f64
}

/// `sqrt(∫ (a − b)² dt / T)`.
pub fn rms_distance(grid: &Grid, a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).collect();
    (integrate(grid, &diff) / grid.horizon).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct UzawaSettings {
    pub iterations: usize,
    /// Step constant `a`.
    pub step: f64,
    /// With Monte Carlo, iteration `k` uses seed `derive_seed(seed, k + 1)`.
    pub oracle: GradientOracle,
    /// Divergence guard on `sup |λ|`.
    pub lambda_bound: f64,
    pub solver: SolverSettings,
}

/// Diagnostics of one iteration, taken at `λ_k` before the update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub step: f64,
    /// `sqrt(∫ U² dt)`.
    pub grad_norm: f64,
    pub dual_value: f64,
    pub dual_value_se: f64,
    pub tracking_rmse: f64,
    pub lambda_sup: f64,
    pub wallclock_s: f64,
}

/// Uzawa iterate with its history; `history.len() == k`.
#[derive(Debug, Clone)]
pub struct UzawaState {
    pub k: usize,
    pub lambda: DualPath,
    pub history: Vec<IterationRecord>,
    started: Instant,
}

impl UzawaState {
    /// `λ_0 ≡ 0`.
    pub fn new(grid: &Grid) -> Self {
        UzawaState {
            k: 0,
            lambda: DualPath::zeros(grid),
            history: Vec::new(),
            started: Instant::now(),
        }
    }

    /// One ascent step `λ_{k+1} = λ_k + ρ_k U_{k+1}`; returns the evaluation
    /// at `λ_k`.
    pub fn advance(
        &mut self,
        problem: &Problem,
        coupling: &CouplingCost,
        settings: &UzawaSettings,
    ) -> Result<DualEvaluation> {
        let oracle = match settings.oracle {
            GradientOracle::MonteCarlo { trajectories, seed } => GradientOracle::MonteCarlo {
                trajectories,
                seed: derive_seed(seed, self.k as u64 + 1),
            },
            GradientOracle::Density => GradientOracle::Density,
        };
        let eval = evaluate_dual(problem, coupling, &self.lambda, oracle, &settings.solver)?;
        let g = &problem.grid;
        let rho = step_size(settings.step, self.k);
        let reference = coupling.reference().expect("tracking coupling");
        self.history.push(IterationRecord {
            iteration: self.k,
            step: rho,
            grad_norm: inner(g, &eval.gradient, &eval.gradient).sqrt(),
            dual_value: eval.dual_value,
            dual_value_se: eval.dual_value_se,
            tracking_rmse: rms_distance(g, &eval.consumption, reference),
            lambda_sup: self.lambda.sup_norm(),
            wallclock_s: self.started.elapsed().as_secs_f64(),
        });
        for (l, u) in self.lambda.values.iter_mut().zip(&eval.gradient) {
            *l += rho * u;
        }
        self.k += 1;
        let norm = self.lambda.sup_norm();
        if !(norm <= settings.lambda_bound) {
            return Err(Error::DualDiverged {
                norm,
                bound: settings.lambda_bound,
                iteration: self.k,
            });
        }
        Ok(eval)
    }
}

/// Result of a full Uzawa run.
#[derive(Debug, Clone)]
pub struct UzawaOutcome {
    pub lambda: DualPath,
    pub phi: ValueField,
    pub control: ValueField,
    pub history: Vec<IterationRecord>,
}

/// Runs `K` ascent steps from `λ_0 ≡ 0` and returns `λ_K` with its control.
pub fn uzawa_run(problem: &Problem, coupling: &CouplingCost, settings: &UzawaSettings) -> Result<UzawaOutcome> {
    if settings.iterations == 0 {
        return Err(Error::Usage("need at least one Uzawa iteration".into()));
    }
    if coupling.kappa().is_none() {
        return Err(Error::Usage(
            "no coupling cost: solve the decoupled problem directly instead of the dual loop".into(),
        ));
    }
    let mut state = UzawaState::new(&problem.grid);
    for _ in 0..settings.iterations {
        state.advance(problem, coupling, settings)?;
    }
    let phi = solve_phi(problem, &state.lambda, &settings.solver)?;
    let control = extract_control(problem, &phi);
    check_jump_budget(problem, &control)?;
    Ok(UzawaOutcome {
        lambda: state.lambda,
        phi,
        control,
        history: state.history,
    })
}
