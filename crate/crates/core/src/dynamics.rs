//! Water-heater physics: temperature drift, exact flow, safety intensity,
//! consumption and individual costs.

use serde::{Deserialize, Serialize};

use crate::table::TimeTable;
use crate::types::{Mode, StatePoint};

/// Linear temperature dynamics
/// `dθ/dt = i σP - ρ (θ - θ_amb) - ε(t) (θ - θ_in)`, rates per hour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftModel {
    /// Heating rate per unit of mode index, °C/h.
    pub sigma_p: f64,
    /// Loss rate towards ambient, 1/h.
    pub rho: f64,
    pub theta_amb: f64,
    pub theta_in: f64,
    /// Drain rate, 1/h.
    pub eps: TimeTable,
}

/// One exact flow step `θ ↦ offset + factor θ` of the linear ODE with
/// frozen coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineStep {
    pub offset: f64,
    pub factor: f64,
}

impl AffineStep {
    #[inline]
    pub fn apply(&self, theta: f64) -> f64 {
        self.offset + self.factor * theta
    }
}

impl DriftModel {
    /// Drift with an explicit drain rate.
    #[inline]
    pub fn drift_with(&self, mode: usize, theta: f64, eps: f64) -> f64 {
        mode as f64 * self.sigma_p - self.rho * (theta - self.theta_amb) - eps * (theta - self.theta_in)
    }

    /// Exact flow over `dt` hours with the drain rate frozen at `eps`.
    pub fn affine_step(&self, mode: usize, eps: f64, dt: f64) -> AffineStep {
        let b = self.rho + eps;
        let heat = mode as f64 * self.sigma_p;
        if b == 0.0 {
            return AffineStep {
                offset: heat * dt,
                factor: 1.0,
            };
        }
        let equilibrium = (heat + self.rho * self.theta_amb + eps * self.theta_in) / b;
        let factor = (-b * dt).exp();
        AffineStep {
            offset: equilibrium * (1.0 - factor),
            factor,
        }
    }

    /// Equilibrium temperature of `mode` under drain rate `eps`, if any.
    pub fn equilibrium(&self, mode: usize, eps: f64) -> Option<f64> {
        let b = self.rho + eps;
        (b > 0.0).then(|| (mode as f64 * self.sigma_p + self.rho * self.theta_amb + eps * self.theta_in) / b)
    }

    /// Almost-sure lower temperature bound for agents starting at or above `init_lo`.
    pub fn lower_bound(&self, init_lo: f64) -> f64 {
        self.theta_in.min(self.theta_amb).min(init_lo)
    }

    /// Almost-sure upper bound for agents starting at or below `init_hi` when
    /// the top mode is `top_mode`; infinite if heating is never balanced.
    pub fn upper_bound(&self, init_hi: f64, top_mode: usize) -> f64 {
        let eq = |eps: f64| self.equilibrium(top_mode, eps).unwrap_or(f64::INFINITY);
        // θ_eq is monotone in ε, so the extremes of the table bound it.
        let hi = eq(self.eps.min()).max(eq(self.eps.max()));
        hi.max(init_hi).max(self.theta_amb).max(self.theta_in)
    }
}

/// Drift `b(t, i, θ)` in °C/h.
pub fn drift(t: f64, s: StatePoint, dm: &DriftModel) -> f64 {
    dm.drift_with(s.mode.index(), s.theta, dm.eps.value(t))
}

/// Temperature after following the flow of mode `s.mode` for `dt` hours.
/// The drain rate is taken at the step midpoint, matching tables that are
/// constant on the step.
pub fn advance_flow(t: f64, s: StatePoint, dt: f64, dm: &DriftModel) -> f64 {
    dm.affine_step(s.mode.index(), dm.eps.value(t + 0.5 * dt), dt)
        .apply(s.theta)
}

/// Extra intensity that forces a switch near the comfort bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafetyIntensity {
    pub theta_min: f64,
    pub theta_max: f64,
    /// Rate reached beyond the bounds, 1/h.
    pub peak: f64,
    /// Width of the linear ramp inside the bounds, °C.
    pub ramp_width: f64,
}

impl SafetyIntensity {
    /// Rate of the forced jump `from -> to` at temperature `theta`.
    ///
    /// Heating modes are pushed to OFF when hot; OFF is pushed to the top
    /// mode when cold. With two modes this is the usual ON/OFF rule.
    #[inline]
    pub fn rate(&self, from: usize, to: usize, theta: f64, modes: usize) -> f64 {
        if from == to || modes < 2 {
            return 0.0;
        }
        if from >= 1 && to == 0 {
            if theta >= self.theta_max {
                self.peak
            } else if theta >= self.theta_max - self.ramp_width {
                self.peak * (theta - self.theta_max + self.ramp_width) / self.ramp_width
            } else {
                0.0
            }
        } else if from == 0 && to == modes - 1 {
            if theta <= self.theta_min {
                self.peak
            } else if theta <= self.theta_min + self.ramp_width {
                self.peak * (self.theta_min + self.ramp_width - theta) / self.ramp_width
            } else {
                0.0
            }
        } else {
            0.0
        }
    }
}

/// `α̂_j(t, i, θ)`; time-independent.
pub fn hat_alpha(_t: f64, s: StatePoint, j: Mode, si: &SafetyIntensity, modes: usize) -> f64 {
    si.rate(s.mode.index(), j.index(), s.theta, modes)
}

/// Normalised power draw of a mode: `i / (d - 1)`, so OFF = 0 and full power = 1.
#[inline]
pub fn mode_power(mode: usize, modes: usize) -> f64 {
    if modes < 2 {
        0.0
    } else {
        mode as f64 / (modes - 1) as f64
    }
}

/// `p(t, X)`.
pub fn consumption_p(_t: f64, s: StatePoint, modes: usize) -> f64 {
    mode_power(s.mode.index(), modes)
}

/// Individual running cost `c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub enum RunningCost {
    #[default]
    Zero,
    /// Electricity price times consumption.
    Price(TimeTable),
}

/// Terminal cost `g(i, θ) = offsets[i] + slope θ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub enum TerminalCost {
    #[default]
    Zero,
    Affine { offsets: Vec<f64>, slope: f64 },
}

impl TerminalCost {
    #[inline]
    pub fn value(&self, mode: usize, theta: f64) -> f64 {
        match self {
            TerminalCost::Zero => 0.0,
            TerminalCost::Affine { offsets, slope } => {
                offsets.get(mode).copied().unwrap_or(0.0) + slope * theta
            }
        }
    }
}

/// `c(t, X)`.
pub fn running_cost_c(t: f64, s: StatePoint, running: &RunningCost, modes: usize) -> f64 {
    match running {
        RunningCost::Zero => 0.0,
        RunningCost::Price(price) => price.value(t) * consumption_p(t, s, modes),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn model(sigma_p: f64, rho: f64, eps: f64) -> DriftModel {
        DriftModel {
            sigma_p,
            rho,
            theta_amb: 20.0,
            theta_in: 15.0,
            eps: TimeTable::constant(eps),
        }
    }

    fn safety() -> SafetyIntensity {
        SafetyIntensity {
            theta_min: 50.0,
            theta_max: 65.0,
            peak: 12.0,
            ramp_width: 1.0,
        }
    }

    /// Classical RK4 with many small steps.
    fn rk4(dm: &DriftModel, mode: usize, theta: f64, t0: f64, dt: f64, steps: usize) -> f64 {
        let h = dt / steps as f64;
        let f = |t: f64, th: f64| drift(t, StatePoint::new(Mode(mode), th), dm);
        let mut th = theta;
        for s in 0..steps {
            let t = t0 + s as f64 * h;
            let k1 = f(t, th);
            let k2 = f(t + 0.5 * h, th + 0.5 * h * k1);
            let k3 = f(t + 0.5 * h, th + 0.5 * h * k2);
            let k4 = f(t + h, th + h * k3);
            th += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        th
    }

    #[test]
    fn drift_examples() {
        let dm = model(12.0, 0.02, 0.0);
        assert_eq!(drift(0.0, StatePoint::new(Mode::OFF, 20.0), &dm), 0.0);
        let pure = model(12.0, 0.0, 0.0);
        assert_eq!(drift(3.0, StatePoint::new(Mode::ON, 57.0), &pure), 12.0);
        let v = drift(0.0, StatePoint::new(Mode::ON, 60.0), &dm);
        assert!((v - 11.2).abs() < 1e-12);
    }

    #[test]
    fn flow_fixed_points() {
        let still = model(12.0, 0.0, 0.0);
        assert_eq!(advance_flow(0.0, StatePoint::new(Mode::OFF, 42.0), 0.5, &still), 42.0);
        let dm = model(12.0, 0.01, 0.05);
        let eq = dm.equilibrium(1, 0.05).unwrap();
        let out = advance_flow(1.0, StatePoint::new(Mode::ON, eq), 0.7, &dm);
        assert!((out - eq).abs() < 1e-9);
    }

    #[test]
    fn flow_matches_rk4() {
        let dm = DriftModel {
            sigma_p: 12.0,
            rho: 0.005,
            theta_amb: 20.0,
            theta_in: 15.0,
            eps: TimeTable::window(0.01, 0.1, 7.0, 9.0).unwrap(),
        };
        for &(mode, theta, t, dt) in &[
            (1, 52.0, 0.0, 1.0 / 30.0),
            (0, 64.0, 7.0, 0.5),
            (1, 48.0, 7.5, 1.0),
            (0, 30.0, 12.0, 2.0),
        ] {
            let exact = advance_flow(t, StatePoint::new(Mode(mode), theta), dt, &dm);
            let num = rk4(&dm, mode, theta, t, dt, 2000);
            assert!((exact - num).abs() < 1e-8, "mode {mode} θ {theta}: {exact} vs {num}");
        }
    }

    #[test]
    fn hat_alpha_examples() {
        let si = safety();
        assert_eq!(hat_alpha(0.0, StatePoint::new(Mode::ON, 66.0), Mode::OFF, &si, 2), 12.0);
        assert_eq!(hat_alpha(0.0, StatePoint::new(Mode::OFF, 57.0), Mode::ON, &si, 2), 0.0);
        assert_eq!(hat_alpha(0.0, StatePoint::new(Mode::ON, 64.5), Mode::OFF, &si, 2), 6.0);
        assert_eq!(hat_alpha(0.0, StatePoint::new(Mode::OFF, 50.25), Mode::ON, &si, 2), 9.0);
        assert_eq!(hat_alpha(0.0, StatePoint::new(Mode::OFF, 49.0), Mode::ON, &si, 2), 12.0);
        // wrong direction at each bound
        assert_eq!(hat_alpha(0.0, StatePoint::new(Mode::OFF, 70.0), Mode::ON, &si, 2), 0.0);
        assert_eq!(hat_alpha(0.0, StatePoint::new(Mode::ON, 40.0), Mode::OFF, &si, 2), 0.0);
    }

    #[test]
    fn consumption_and_costs() {
        assert_eq!(consumption_p(3.0, StatePoint::new(Mode::OFF, 55.0), 2), 0.0);
        assert_eq!(consumption_p(3.0, StatePoint::new(Mode::ON, 55.0), 2), 1.0);
        let mean = (0..10)
            .map(|n| consumption_p(0.0, StatePoint::new(Mode(n % 2), 55.0), 2))
            .sum::<f64>()
            / 10.0;
        assert_eq!(mean, 0.5);

        let on = StatePoint::new(Mode::ON, 55.0);
        let off = StatePoint::new(Mode::OFF, 55.0);
        assert_eq!(running_cost_c(9.0, on, &RunningCost::Zero, 2), 0.0);
        let price = RunningCost::Price(TimeTable::window(1.0, 5.0, 8.0, 20.0).unwrap());
        assert_eq!(running_cost_c(9.0, off, &price, 2), 0.0);
        assert_eq!(running_cost_c(9.0, on, &price, 2), 5.0);
    }

    #[test]
    fn drift_points_inward_at_derived_bounds() {
        let dm = DriftModel {
            sigma_p: 12.0,
            rho: 0.005,
            theta_amb: 20.0,
            theta_in: 15.0,
            eps: TimeTable::window(0.01, 0.1, 7.0, 9.0).unwrap(),
        };
        let lo = dm.lower_bound(50.0);
        let hi = dm.upper_bound(65.0, 1);
        for eps in [0.01, 0.1] {
            for mode in 0..2 {
                assert!(dm.drift_with(mode, lo, eps) >= 0.0);
                assert!(dm.drift_with(mode, hi, eps) <= 1e-9);
            }
        }
    }

    proptest! {
        #[test]
        fn safety_rate_is_continuous(theta in 45.0..70.0f64, from in 0usize..2) {
            let si = safety();
            let h = 1e-7;
            let to = 1 - from;
            let a = si.rate(from, to, theta, 2);
            let b = si.rate(from, to, theta + h, 2);
            prop_assert!((a - b).abs() <= si.peak / si.ramp_width * h * 1.01 + 1e-12);
            prop_assert_eq!(si.rate(from, from, theta, 2), 0.0);
        }

        #[test]
        fn flow_is_monotone(a in 10.0..90.0f64, b in 10.0..90.0f64, mode in 0usize..2, t in 0.0..24.0f64) {
            let dm = DriftModel {
                sigma_p: 12.0,
                rho: 0.005,
                theta_amb: 20.0,
                theta_in: 15.0,
                eps: TimeTable::window(0.01, 0.1, 7.0, 9.0).unwrap(),
            };
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let fl = advance_flow(t, StatePoint::new(Mode(mode), lo), 0.25, &dm);
            let fh = advance_flow(t, StatePoint::new(Mode(mode), hi), 0.25, &dm);
            prop_assert!(fl <= fh);
        }

        #[test]
        fn flow_stays_within_derived_bounds(theta in 15.0..65.0f64, mode in 0usize..2, t in 0.0..24.0f64, dt in 0.0..5.0f64) {
            let dm = DriftModel {
                sigma_p: 12.0,
                rho: 0.005,
                theta_amb: 20.0,
                theta_in: 15.0,
                eps: TimeTable::window(0.01, 0.1, 7.0, 9.0).unwrap(),
            };
            let lo = dm.lower_bound(50.0);
            let hi = dm.upper_bound(65.0, 1);
            let out = advance_flow(t, StatePoint::new(Mode(mode), theta), dt, &dm);
            prop_assert!(out >= lo - 1e-9 && out <= hi + 1e-9);
        }
    }
}
