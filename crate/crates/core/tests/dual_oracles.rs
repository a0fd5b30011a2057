mod common;

use proptest::prelude::*;

use pdmp_mfc::dual::{evaluate_dual, uzawa_run, CouplingCost, GradientOracle, UzawaSettings, UzawaState};
use pdmp_mfc::hjb::{expected_consumption, expected_individual_cost, forward_density, SolverSettings};
use pdmp_mfc::scenario::time_mean;
use pdmp_mfc::types::{inner, DualPath};
use pdmp_mfc::Problem;

fn tracking(problem: &Problem, kappa: f64) -> CouplingCost {
    let g = &problem.grid;
    let nominal = expected_consumption(problem, &forward_density(problem, None).unwrap());
    CouplingCost::tracking(g, kappa, vec![time_mean(g, &nominal); g.n_times()]).unwrap()
}

fn density_eval(problem: &Problem, coupling: &CouplingCost, lambda: &[f64]) -> pdmp_mfc::dual::DualEvaluation {
    let path = DualPath::new(&problem.grid, lambda.to_vec()).unwrap();
    evaluate_dual(problem, coupling, &path, GradientOracle::Density, &SolverSettings::default()).unwrap()
}

/// Primal cost of a control, computed exactly from its density.
fn primal_cost(problem: &Problem, coupling: &CouplingCost, control: &pdmp_mfc::ValueField) -> f64 {
    let m = forward_density(problem, Some(control)).unwrap();
    let e = expected_consumption(problem, &m);
    coupling.total(&problem.grid, &e) + expected_individual_cost(problem, &m, control)
}

fn lambda_path(n: usize, seeds: &[f64]) -> Vec<f64> {
    (0..n).map(|i| seeds[i % seeds.len()] * (1.0 + 0.3 * (i as f64 * 0.7).sin())).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn directional_derivative_matches_gradient(
        a in prop::collection::vec(-2.0f64..2.0, 4),
        b in prop::collection::vec(-1.0f64..1.0, 3),
        kappa in 0.5f64..200.0,
    ) {
        let problem = common::coarse_problem();
        let coupling = tracking(&problem, kappa);
        let n = problem.grid.n_times();
        let lam = lambda_path(n, &a);
        let mu = lambda_path(n, &b);
        let h = 1e-4;
        let shifted = |s: f64| -> Vec<f64> { lam.iter().zip(&mu).map(|(l, m)| l + s * m).collect() };
        let fd = (density_eval(&problem, &coupling, &shifted(h)).dual_value
            - density_eval(&problem, &coupling, &shifted(-h)).dual_value)
            / (2.0 * h);
        let analytic = inner(&problem.grid, &density_eval(&problem, &coupling, &lam).gradient, &mu);
        prop_assert!((fd - analytic).abs() <= 1e-3 * analytic.abs().max(1e-6), "fd {fd} vs {analytic}");
    }

    #[test]
    fn dual_value_bounded_by_primal_cost(
        a in prop::collection::vec(-3.0f64..3.0, 4),
        b in prop::collection::vec(-3.0f64..3.0, 4),
        kappa in 0.5f64..200.0,
    ) {
        let problem = common::coarse_problem();
        let coupling = tracking(&problem, kappa);
        let n = problem.grid.n_times();
        let w = density_eval(&problem, &coupling, &lambda_path(n, &a)).dual_value;
        let other = density_eval(&problem, &coupling, &lambda_path(n, &b));
        for control in [&other.control, &pdmp_mfc::ValueField::zeros(pdmp_mfc::FieldKind::ControlRate, &problem.grid)] {
            let j = primal_cost(&problem, &coupling, control);
            prop_assert!(w <= j + 1e-12, "W = {w} exceeds J = {j}");
        }
    }
}

#[test]
fn density_uzawa_increases_dual_value() {
    let problem = common::coarse_problem();
    let coupling = tracking(&problem, 100.0);
    let settings = UzawaSettings {
        iterations: 30,
        step: 5.0,
        oracle: GradientOracle::Density,
        lambda_bound: 1e4,
        solver: SolverSettings::default(),
    };
    let out = uzawa_run(&problem, &coupling, &settings).unwrap();
    let w: Vec<f64> = out.history.iter().map(|r| r.dual_value).collect();
    for pair in w.windows(2) {
        assert!(pair[1] >= pair[0] - 1e-12, "dual value dropped: {w:?}");
    }
    let first = out.history.first().unwrap();
    let last = out.history.last().unwrap();
    assert!(last.tracking_rmse < 0.5 * first.tracking_rmse);
    assert!(last.grad_norm < first.grad_norm);

    // the duality gap shrinks along the run
    let gap = |lambda: &[f64]| {
        let e = density_eval(&problem, &coupling, lambda);
        let j = primal_cost(&problem, &coupling, &e.control);
        assert!(e.dual_value <= j + 1e-12);
        j - e.dual_value
    };
    let start = gap(&vec![0.0; problem.grid.n_times()]);
    let end = gap(&out.lambda.values);
    assert!(end < 0.5 * start, "gap {start} -> {end}");
}

#[test]
fn monte_carlo_matches_density_oracle() {
    let problem = common::coarse_problem();
    let coupling = tracking(&problem, 10.0);
    let n = problem.grid.n_times();
    let lambda = lambda_path(n, &[0.5, -1.0, 1.5]);
    let exact = density_eval(&problem, &coupling, &lambda);
    let path = DualPath::new(&problem.grid, lambda).unwrap();
    let mc = evaluate_dual(
        &problem,
        &coupling,
        &path,
        GradientOracle::MonteCarlo {
            trajectories: 40_000,
            seed: 11,
        },
        &SolverSettings::default(),
    )
    .unwrap();
    assert!(mc.dual_value_se > 0.0);
    // MC runs in continuous temperature, the density on the nodes, so allow
    // the interpolation bias on top of the sampling error.
    let tol = 4.0 * mc.dual_value_se + 0.02 * exact.dual_value.abs();
    assert!(
        (mc.dual_value - exact.dual_value).abs() <= tol,
        "MC {} +- {} vs density {}",
        mc.dual_value,
        mc.dual_value_se,
        exact.dual_value
    );
}

#[test]
fn weak_duality_holds_on_every_iteration() {
    let problem = common::coarse_problem();
    let coupling = tracking(&problem, 10.0);
    let settings = UzawaSettings {
        iterations: 15,
        step: 10.0,
        oracle: GradientOracle::Density,
        lambda_bound: 1e4,
        solver: SolverSettings::default(),
    };
    let mut state = UzawaState::new(&problem.grid);
    for _ in 0..settings.iterations {
        let eval = state.advance(&problem, &coupling, &settings).unwrap();
        let j = primal_cost(&problem, &coupling, &eval.control);
        assert!(eval.dual_value <= j + 1e-12, "iteration {}: W {} > J {j}", state.k, eval.dual_value);
    }
}

#[test]
fn converged_tracking_is_feasible() {
    // full-size day, deterministic oracle
    let cfg = common::default_config();
    let problem = Problem::from_config(&cfg).unwrap();
    let coupling = tracking(&problem, 100.0);
    let settings = UzawaSettings {
        iterations: 100,
        step: 100.0,
        oracle: GradientOracle::Density,
        lambda_bound: 1e4,
        solver: SolverSettings::default(),
    };
    let out = uzawa_run(&problem, &coupling, &settings).unwrap();
    let eval = evaluate_dual(&problem, &coupling, &out.lambda, GradientOracle::Density, &SolverSettings::default()).unwrap();
    let sup = eval.gradient.iter().fold(0.0_f64, |m, u| m.max(u.abs()));
    assert!(sup <= 0.02, "sup |E[p] - v| = {sup}");
}
