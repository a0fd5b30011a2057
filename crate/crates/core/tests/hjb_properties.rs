mod common;

use proptest::prelude::*;

use pdmp_mfc::dynamics::TerminalCost;
use pdmp_mfc::hjb::{
    evaluate_policy, expected_consumption, expected_individual_cost, expected_initial_value, extract_control,
    forward_density, solve_phi, SolverSettings,
};
use pdmp_mfc::types::{inner, DualPath, Grid};
use pdmp_mfc::{FieldKind, Problem, ValueField};

fn lambda_from(problem: &Problem, coeffs: &[f64]) -> DualPath {
    let g = &problem.grid;
    let values = (0..g.n_times())
        .map(|n| {
            let t = g.time(n) / g.horizon;
            coeffs.iter().enumerate().map(|(k, c)| c * (std::f64::consts::PI * k as f64 * t).cos()).sum()
        })
        .collect();
    DualPath::new(g, values).unwrap()
}

fn solve(problem: &Problem, lambda: &DualPath) -> ValueField {
    solve_phi(problem, lambda, &SolverSettings::default()).unwrap()
}

fn with_terminal(problem: &Problem, offsets: Vec<f64>) -> Problem {
    let mut p = problem.clone();
    p.terminal = TerminalCost::Affine { offsets, slope: 0.0 };
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn larger_data_gives_larger_value(
        base in prop::collection::vec(-2.0f64..2.0, 3),
        bump in prop::collection::vec(0.0f64..1.0, 3),
        g0 in -1.0f64..1.0,
        g_bump in prop::collection::vec(0.0f64..1.0, 2),
    ) {
        let problem = with_terminal(&common::coarse_problem(), vec![g0, -g0]);
        let raised = with_terminal(&problem, vec![g0 + g_bump[0], -g0 + g_bump[1]]);
        let lo = lambda_from(&problem, &base);
        // cosine modes can be negative, so add the bump as a nonnegative shift
        let hi = DualPath::new(
            &problem.grid,
            lo.values.iter().map(|v| v + bump.iter().sum::<f64>()).collect(),
        ).unwrap();
        let a = solve(&problem, &lo);
        let b = solve(&raised, &hi);
        let worst = a.values().iter().zip(b.values()).map(|(x, y)| x - y).fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(worst <= 1e-12, "value decreased by {worst}");
    }

    #[test]
    fn optimal_control_beats_perturbed_controls(
        coeffs in prop::collection::vec(-2.0f64..2.0, 3),
        scale in 0.0f64..1.8,
        extra in 0.0f64..1.0,
    ) {
        let problem = common::coarse_problem();
        let lambda = lambda_from(&problem, &coeffs);
        let phi = solve(&problem, &lambda);
        let control = extract_control(&problem, &phi);
        let mut other = control.clone();
        for n in 0..problem.grid.n_t {
            for p in [other.pair(0, 1), other.pair(1, 0)] {
                for v in other.plane_mut(n, p) {
                    *v = *v * scale + extra;
                }
            }
        }
        let psi = evaluate_policy(&problem, &other, &lambda).unwrap();
        let worst = phi.values().iter().zip(psi.values()).map(|(x, y)| x - y).fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(worst <= 1e-12, "perturbed control cheaper by {worst}");
    }

    #[test]
    // rates stay within the jump budget: dt * (3.7 + peak 5) < 1
    fn density_conserves_mass(rate in 0.0f64..3.0, tilt in -1.0f64..1.0) {
        let problem = common::coarse_problem();
        let g = &problem.grid;
        let control = ValueField::from_fn(FieldKind::ControlRate, g, |n, p, k| {
            if p == 0 || p == 3 || n == g.n_t {
                0.0
            } else {
                (rate + tilt * (g.theta(k) - 57.5) / 20.0).max(0.0)
            }
        });
        let m = forward_density(&problem, Some(&control)).unwrap();
        for n in 0..g.n_times() {
            let mass: f64 = m.slice(n).iter().sum();
            prop_assert!((mass - 1.0).abs() <= 1e-12, "mass {mass} at step {n}");
        }
        prop_assert!(m.values().iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn initial_value_equals_expected_cost(coeffs in prop::collection::vec(-2.0f64..2.0, 3)) {
        let problem = common::coarse_problem();
        let lambda = lambda_from(&problem, &coeffs);
        let phi = solve(&problem, &lambda);
        let control = extract_control(&problem, &phi);
        let m = forward_density(&problem, Some(&control)).unwrap();
        let priced = expected_individual_cost(&problem, &m, &control)
            + inner(&problem.grid, &expected_consumption(&problem, &m), &lambda.values);
        let direct = expected_initial_value(&problem, &phi);
        prop_assert!((priced - direct).abs() <= 1e-10 * direct.abs().max(1.0), "{priced} vs {direct}");
    }
}

fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn nominal_consumption_converges_under_temperature_refinement() {
    let problem = common::coarse_problem();
    let g = problem.grid.clone();
    let consumption = |dtheta: f64| {
        let p = problem.with_grid(Grid::from_steps(g.horizon, g.dt, g.theta_lo, g.theta_hi, dtheta, 2).unwrap());
        expected_consumption(&p, &forward_density(&p, None).unwrap())
    };
    let levels: Vec<Vec<f64>> = [1.0, 0.5, 0.25, 0.125].iter().map(|&h| consumption(h)).collect();
    let gaps: Vec<f64> = levels.windows(2).map(|w| sup_distance(&w[0], &w[1])).collect();
    for pair in gaps.windows(2) {
        assert!(pair[1] < 0.75 * pair[0], "no contraction: {gaps:?}");
    }
}

#[test]
fn zero_lambda_and_zero_costs_give_zero_value() {
    let problem = common::coarse_problem();
    let phi = solve(&problem, &DualPath::zeros(&problem.grid));
    assert_eq!(phi.max_abs(), 0.0);
    let control = extract_control(&problem, &phi);
    assert_eq!(control.max_abs(), 0.0);
}

#[test]
fn constant_lambda_prices_expected_consumption() {
    // a constant price shifts every value by the priced consumption only
    // when nobody reacts; the optimal value must not exceed that
    let problem = common::coarse_problem();
    let lambda = DualPath::new(&problem.grid, vec![1.0; problem.grid.n_times()]).unwrap();
    let phi = solve(&problem, &lambda);
    let nominal = expected_consumption(&problem, &forward_density(&problem, None).unwrap());
    let passive = inner(&problem.grid, &nominal, &lambda.values);
    let optimal = expected_initial_value(&problem, &phi);
    assert!(optimal <= passive + 1e-12);
    assert!(optimal > 0.0);
}

fn sine_lambda(grid: &Grid) -> DualPath {
    DualPath::new(grid, (0..grid.n_times()).map(|n| (grid.time(n) * 3.0).sin()).collect()).unwrap()
}

/// Largest difference on the comfort band between `a` and `b` on a grid
/// refined by `factor` in both directions.
fn band_gap(coarse: &Grid, a: &ValueField, b: &ValueField, factor: usize) -> f64 {
    let mut worst = 0.0_f64;
    for n in 0..coarse.n_times() {
        for i in 0..coarse.modes {
            for k in (0..coarse.n_nodes()).filter(|&k| (50.0..=65.0).contains(&coarse.theta(k))) {
                worst = worst.max((a.get(n, i, k) - b.get(factor * n, i, factor * k)).abs());
            }
        }
    }
    worst
}

#[test]
fn value_converges_under_refinement() {
    let problem = common::coarse_problem();
    let g = problem.grid.clone();
    let lambda = sine_lambda(&g);
    let level = |f: usize| {
        let grid = Grid::from_steps(g.horizon, g.dt / f as f64, g.theta_lo, g.theta_hi, g.dtheta / f as f64, 2).unwrap();
        let p = problem.with_grid(grid.clone());
        let lam: Vec<f64> = (0..grid.n_times()).map(|n| lambda.values[g.step_of(grid.time(n))]).collect();
        (grid.clone(), solve(&p, &DualPath::new(&grid, lam).unwrap()))
    };
    let (g1, p1) = level(1);
    let (g2, p2) = level(2);
    let (_, p4) = level(4);
    let first = band_gap(&g1, &p1, &p2, 2);
    let second = band_gap(&g2, &p2, &p4, 2);
    assert!(second < 0.8 * first, "gaps {first} then {second}");
    assert!(first <= (g.dt + g.dtheta) * p1.max_abs(), "gap {first}");
}

#[test]
fn comfort_band_values_ignore_far_temperatures() {
    let problem = common::coarse_problem();
    let g = problem.grid.clone();
    let (lo, hi) = problem.state_bounds();
    let lo = g.theta_lo - ((g.theta_lo - lo) / g.dtheta).ceil() * g.dtheta;
    let hi = g.theta_hi + ((hi - g.theta_hi) / g.dtheta).ceil() * g.dtheta;
    let wide = problem.with_grid(Grid::from_steps(g.horizon, g.dt, lo, hi, g.dtheta, 2).unwrap());
    let lambda = sine_lambda(&g);
    let narrow = solve(&problem, &lambda);
    let full = solve(&wide, &DualPath::new(&wide.grid, lambda.values.clone()).unwrap());
    let offset = ((g.theta_lo - lo) / g.dtheta).round() as usize;
    let mut worst = 0.0_f64;
    for n in 0..g.n_times() {
        for i in 0..2 {
            for k in (0..g.n_nodes()).filter(|&k| (50.0..=65.0).contains(&g.theta(k))) {
                worst = worst.max((narrow.get(n, i, k) - full.get(n, i, k + offset)).abs());
            }
        }
    }
    assert!(worst <= 1e-4 * narrow.max_abs(), "band values moved by {worst}");
}

#[test]
fn higher_price_never_lowers_value() {
    use pdmp_mfc::dynamics::RunningCost;
    use pdmp_mfc::table::TimeTable;
    let problem = common::coarse_problem();
    let base = TimeTable::new(vec![(0.0, 1.0), (1.0, 3.0), (2.5, 0.5)]).unwrap();
    let raised = TimeTable::new(vec![(0.0, 1.2), (1.0, 3.0), (2.0, 3.5), (2.5, 0.6)]).unwrap();
    let zero = DualPath::zeros(&problem.grid);
    let a = solve(&problem.with_running(RunningCost::Price(base)), &zero);
    let b = solve(&problem.with_running(RunningCost::Price(raised)), &zero);
    assert!(a.values().iter().zip(b.values()).all(|(x, y)| x <= y));
    assert!(b.max_abs() > a.max_abs());
}
