use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("configuration violates {} condition(s): {}", .0.len(), join_violations(.0))]
    Violations(Vec<crate::config::Violation>),

    #[error("invalid control field: {0}")]
    InvalidControl(String),

    #[error("value function diverged: |phi| = {magnitude:.3e} at t = {time_h:.4} h (guard {guard:.3e})")]
    Diverged {
        magnitude: f64,
        time_h: f64,
        guard: f64,
    },

    #[error("jump budget exceeded: dt * (max alpha + max safety rate) = {product:.4} > 1 at t = {time_h:.4} h")]
    JumpBudget { product: f64, time_h: f64 },

    #[error("negative mass {mass:.3e} in forward density at t = {time_h:.4} h")]
    NegativeMass { mass: f64, time_h: f64 },

    #[error("dual iterate diverged: |lambda| = {norm:.3e} exceeds bound {bound:.3e} at iteration {iteration}")]
    DualDiverged {
        norm: f64,
        bound: f64,
        iteration: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("{0}")]
    Usage(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerical pipeline (as opposed to bad input or I/O).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Diverged { .. }
                | Error::JumpBudget { .. }
                | Error::NegativeMass { .. }
                | Error::DualDiverged { .. }
                | Error::NonFinite(_)
        )
    }
}

fn join_violations(v: &[crate::config::Violation]) -> String {
    v.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}
