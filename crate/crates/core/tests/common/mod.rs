#![allow(dead_code)]

use std::path::{Path, PathBuf};

use pdmp_mfc::types::Grid;
use pdmp_mfc::{Problem, ScenarioConfig};

pub fn config_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.toml")
}

pub fn default_config() -> ScenarioConfig {
    ScenarioConfig::load(&config_path()).expect("default config loads")
}

/// Four-hour day on a coarse grid. Heating and safety peak are lowered so
/// that `dt = 0.1 h` stays stable.
pub fn coarse_config() -> ScenarioConfig {
    let mut cfg = default_config();
    cfg.physics.sigma_p = 8.0;
    cfg.bounds.peak = 5.0;
    cfg.grid = Grid::from_steps(4.0, 0.1, cfg.grid.theta_lo, cfg.grid.theta_hi, 1.0, 2).unwrap();
    assert!(pdmp_mfc::validate_config(&cfg).is_empty());
    cfg
}

pub fn coarse_problem() -> Problem {
    Problem::from_config(&coarse_config()).unwrap()
}
