//! The PDMP model laid out on a grid, with per-step quantities precomputed.
//!
//! Simulator, value-function solver and density solver all read the flow,
//! intensities and costs from here so that the three stay on the same
//! discrete dynamics: on step `[t_n, t_{n+1})` an agent in mode `i` follows
//! the exact flow of mode `i`, and jumps to `j` at `t_{n+1}` with
//! probability `dt (α_j + α̂_j)` evaluated at the step start.

use crate::config::{CouplingConfig, ScenarioConfig};
use crate::dynamics::{mode_power, AffineStep, DriftModel, RunningCost, SafetyIntensity, TerminalCost};
use crate::error::Result;
use crate::hamiltonian::JumpCost;
use crate::simulator::InitialLaw;
use crate::types::Grid;

#[derive(Debug, Clone)]
pub struct Problem {
    pub grid: Grid,
    pub drift: DriftModel,
    pub safety: SafetyIntensity,
    pub jump_cost: JumpCost,
    pub running: RunningCost,
    pub terminal: TerminalCost,
    pub initial: InitialLaw,
    eps_steps: Vec<f64>,
    flows: Vec<AffineStep>,
    price_steps: Vec<f64>,
    safety_nodes: Vec<f64>,
}

impl Problem {
    pub fn new(
        grid: Grid,
        drift: DriftModel,
        safety: SafetyIntensity,
        jump_cost: JumpCost,
        running: RunningCost,
        terminal: TerminalCost,
        initial: InitialLaw,
    ) -> Self {
        let d = grid.modes;
        let eps_steps = drift.eps.on_steps(&grid);
        let flows = (0..grid.n_t)
            .flat_map(|n| {
                let eps = eps_steps[n];
                let dm = &drift;
                let dt = grid.dt;
                (0..d).map(move |i| dm.affine_step(i, eps, dt))
            })
            .collect();
        let price_steps = match &running {
            RunningCost::Zero => vec![0.0; grid.n_times()],
            RunningCost::Price(t) => t.on_steps(&grid),
        };
        let nodes = grid.n_nodes();
        let mut safety_nodes = vec![0.0; d * d * nodes];
        for i in 0..d {
            for j in 0..d {
                for k in 0..nodes {
                    safety_nodes[(i * d + j) * nodes + k] = safety.rate(i, j, grid.theta(k), d);
                }
            }
        }
        Problem {
            grid,
            drift,
            safety,
            jump_cost,
            running,
            terminal,
            initial,
            eps_steps,
            flows,
            price_steps,
            safety_nodes,
        }
    }

    /// Builds the problem described by a scenario configuration, with the
    /// configured running cost.
    pub fn from_config(cfg: &ScenarioConfig) -> Result<Self> {
        Ok(Problem::new(
            cfg.grid.clone(),
            cfg.physics.clone(),
            cfg.bounds.safety(),
            JumpCost::Quadratic {
                weight: cfg.costs.jump_weight,
            },
            cfg.costs.running.clone(),
            cfg.costs.terminal.clone(),
            InitialLaw {
                theta_lo: cfg.bounds.theta_min,
                theta_hi: cfg.bounds.theta_max,
                on_probability: cfg.algo.on_probability,
            },
        ))
    }

    /// Same model with a different running cost.
    pub fn with_running(&self, running: RunningCost) -> Self {
        Problem::new(
            self.grid.clone(),
            self.drift.clone(),
            self.safety.clone(),
            self.jump_cost.clone(),
            running,
            self.terminal.clone(),
            self.initial.clone(),
        )
    }

    /// Same model on another grid.
    pub fn with_grid(&self, grid: Grid) -> Self {
        Problem::new(
            grid,
            self.drift.clone(),
            self.safety.clone(),
            self.jump_cost.clone(),
            self.running.clone(),
            self.terminal.clone(),
            self.initial.clone(),
        )
    }

    pub fn modes(&self) -> usize {
        self.grid.modes
    }

    #[inline]
    pub fn flow(&self, n: usize, mode: usize) -> AffineStep {
        self.flows[n * self.grid.modes + mode]
    }

    pub fn eps_on_step(&self, n: usize) -> f64 {
        self.eps_steps[n]
    }

    #[inline]
    pub fn power(&self, mode: usize) -> f64 {
        mode_power(mode, self.grid.modes)
    }

    /// Running cost rate `c` on step `n`.
    #[inline]
    pub fn running_cost(&self, n: usize, mode: usize, _theta: f64) -> f64 {
        self.price_steps[n] * self.power(mode)
    }

    #[inline]
    pub fn terminal_cost(&self, mode: usize, theta: f64) -> f64 {
        self.terminal.value(mode, theta)
    }

    /// `α̂_j(i, θ_k)` at a grid node.
    #[inline]
    pub fn safety_at_node(&self, from: usize, to: usize, k: usize) -> f64 {
        let d = self.grid.modes;
        self.safety_nodes[(from * d + to) * self.grid.n_nodes() + k]
    }

    #[inline]
    pub fn safety_rate(&self, from: usize, to: usize, theta: f64) -> f64 {
        self.safety.rate(from, to, theta, self.grid.modes)
    }

    /// `‖α̂‖∞`.
    pub fn safety_sup(&self) -> f64 {
        if self.grid.modes < 2 {
            0.0
        } else {
            self.safety.peak
        }
    }

    /// `B = max |b|` over the grid, all modes and all steps. The drift is
    /// affine in θ, so the grid ends attain it.
    pub fn drift_bound(&self) -> f64 {
        let mut b = 0.0_f64;
        for n in 0..self.grid.n_t {
            let eps = self.eps_steps[n];
            for i in 0..self.grid.modes {
                for theta in [self.grid.theta_lo, self.grid.theta_hi] {
                    b = b.max(self.drift.drift_with(i, theta, eps).abs());
                }
            }
        }
        b
    }

    /// Almost-sure temperature bounds `[θ_0, θ_∞]` for the initial law.
    pub fn state_bounds(&self) -> (f64, f64) {
        (
            self.drift.lower_bound(self.initial.theta_lo),
            self.drift
                .upper_bound(self.initial.theta_hi, self.grid.modes.saturating_sub(1)),
        )
    }
}

/// Per-scenario tracking data extracted from a config, if any.
pub fn tracking_weight(cfg: &ScenarioConfig) -> Option<f64> {
    match cfg.costs.coupling {
        CouplingConfig::Tracking { kappa, .. } => Some(kappa),
        CouplingConfig::None => None,
    }
}
