//! Mean-field control of piecewise deterministic Markov processes, applied to
//! demand response with populations of electric water heaters.
//!
//! A population of i.i.d. agents switches between heating modes; the
//! aggregate consumption is steered by pricing the constraint
//! `E[p(t, X_t)] = v(t)` with a dual variable λ and running stochastic
//! gradient ascent on it. Each gradient evaluation solves a backward
//! value-function equation for the individual agent and estimates the
//! resulting mean consumption by Monte Carlo or by a forward density solve.

// `!(x > 0.0)` style checks are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod dual;
pub mod dynamics;
pub mod error;
pub mod hamiltonian;
pub mod hjb;
pub mod model;
pub mod scenario;
pub mod simulator;
pub mod table;
pub mod types;

pub use config::{validate_config, ScenarioConfig, Violation};
pub use dual::{best_response_v, dual_gradient, dual_value_estimate, uzawa_run, CouplingCost};
pub use error::{Error, Result};
pub use hamiltonian::{h_prime, h_value, JumpCost};
pub use model::Problem;
pub use types::{DualPath, FieldKind, Grid, Mode, StatePoint, ValueField};
