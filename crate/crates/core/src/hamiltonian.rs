//! Jump cost `L` and its convex conjugate `H`.
//!
//! `L(y) = l(y)` for `y > 0`, `L(0) = 0` and `L(y) = +∞` for `y < 0`, so
//! `H(x) = sup_y (x y - L(y))` vanishes on `x ≤ 0` and the optimal jump rate
//! `H'(x)` is always a valid (non-negative) intensity.

use std::fmt;
use std::sync::Arc;

/// A strongly convex, increasing running cost `l` on `ℝ₊` together with the
/// closed forms of the conjugate of its extension `L`.
pub trait ConvexJumpCost: Send + Sync {
    fn l(&self, y: f64) -> f64;
    fn l_prime(&self, y: f64) -> f64;
    fn h(&self, x: f64) -> f64;
    fn h_prime(&self, x: f64) -> f64;
}

#[derive(Clone)]
pub enum JumpCost {
    /// `l(y) = weight * y² / 2`, hence `H(x) = max(x, 0)² / (2 weight)`.
    Quadratic { weight: f64 },
    Custom(Arc<dyn ConvexJumpCost>),
}

impl fmt::Debug for JumpCost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            JumpCost::Quadratic { weight } => write!(f, "Quadratic {{ weight: {weight} }}"),
            JumpCost::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl Default for JumpCost {
    fn default() -> Self {
        JumpCost::Quadratic { weight: 1.0 }
    }
}

impl JumpCost {
    pub fn is_valid(&self) -> bool {
        match self {
            JumpCost::Quadratic { weight } => weight.is_finite() && *weight > 0.0,
            JumpCost::Custom(_) => true,
        }
    }

    /// `L(y)`, including the `+∞` branch for negative rates.
    pub fn big_l(&self, y: f64) -> f64 {
        if y < 0.0 {
            f64::INFINITY
        } else if y == 0.0 {
            0.0
        } else {
            match self {
                JumpCost::Quadratic { weight } => 0.5 * weight * y * y,
                JumpCost::Custom(c) => c.l(y),
            }
        }
    }

    #[inline]
    pub fn h(&self, x: f64) -> f64 {
        match self {
            JumpCost::Quadratic { weight } => {
                if x > 0.0 {
                    0.5 * x * x / weight
                } else {
                    0.0
                }
            }
            JumpCost::Custom(c) => {
                if x > 0.0 {
                    c.h(x)
                } else {
                    0.0
                }
            }
        }
    }

    #[inline]
    pub fn h_prime(&self, x: f64) -> f64 {
        match self {
            JumpCost::Quadratic { weight } => {
                if x > 0.0 {
                    x / weight
                } else {
                    0.0
                }
            }
            JumpCost::Custom(c) => {
                if x > 0.0 {
                    c.h_prime(x).max(0.0)
                } else {
                    0.0
                }
            }
        }
    }
}

/// `H(x)` for the jump cost `jc`.
pub fn h_value(x: f64, jc: &JumpCost) -> f64 {
    jc.h(x)
}

/// `H'(x)`: the optimal jump rate given a value gap `x`.
pub fn h_prime(x: f64, jc: &JumpCost) -> f64 {
    jc.h_prime(x)
}
