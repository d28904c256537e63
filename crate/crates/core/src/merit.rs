//! The l1 exact penalty merit function and its parameter updates.
//!
//! phi(x, tau) = tau f(x) + ||c(x)||_1 measures progress of a step; the
//! quadratic model reduction
//!
//! ```text
//!   dq = -tau (g'd + max(d'Hd, 0)/2) + ||c||_1
//! ```
//!
//! is the decrease predicted for a unit step. The merit parameter tau is
//! lowered just enough to keep dq bounded below by
//! `tau max(d'Hd, 0)/2 + sigma ||c||_1`, which makes every full step a
//! descent direction for phi.

use serde::{Deserialize, Serialize};

/// Candidate value for a monotone parameter update. The unbounded case is
/// kept symbolic so comparisons against it are exact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Trial {
    Finite(f64),
    Infinite,
}

impl Trial {
    pub fn as_option(self) -> Option<f64> {
        match self {
            Trial::Finite(v) => Some(v),
            Trial::Infinite => None,
        }
    }
}

impl Serialize for Trial {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Trial::Finite(v) => s.serialize_f64(*v),
            Trial::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Trial {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let v = serde_json::Value::deserialize(d)?;
        match v {
            serde_json::Value::Number(n) => {
                Ok(Trial::Finite(n.as_f64().ok_or_else(|| D::Error::custom("bad number"))?))
            }
            serde_json::Value::String(s) if s == "inf" => Ok(Trial::Infinite),
            other => Err(D::Error::custom(format!("bad trial value {other}"))),
        }
    }
}

/// Merit function value `tau f + ||c||_1`.
pub fn phi(tau: f64, f: f64, c_norm1: f64) -> f64 {
    tau * f + c_norm1
}

/// Model curvature term `max(d'Hd, 0)`.
pub fn curvature(dhd: f64) -> f64 {
    dhd.max(0.0)
}

/// Predicted merit reduction of a unit step.
pub fn delta_q(tau: f64, gtd: f64, dhd: f64, c_norm1: f64) -> f64 {
    -tau * (gtd + 0.5 * curvature(dhd)) + c_norm1
}

/// Directional derivative of phi along d at x, `tau g'd - ||c||_1`.
pub fn directional_derivative(tau: f64, gtd: f64, c_norm1: f64) -> f64 {
    tau * gtd - c_norm1
}

/// Largest merit parameter for which the step is a sufficiently good
/// descent direction. Unbounded when the model term is already nonpositive.
pub fn tau_trial(gtd: f64, dhd: f64, c_norm1: f64, sigma: f64) -> Trial {
    tau_trial_denom(gtd + curvature(dhd), c_norm1, sigma)
}

/// Trial rule applied to a precomputed model term `g'd + max(d'Hd, 0)`.
///
/// Callers holding a KKT step should prefer an algebraically equivalent,
/// cancellation-free evaluation of the term: for the exact step,
/// `g'd + d'Hd = y'c`, so when the curvature clamp is inactive the term is
/// `y'c` (exactly zero at feasible points), and otherwise it is `g'd` alone.
/// An overflowing quotient degrades to the unbounded case.
pub fn tau_trial_denom(denom: f64, c_norm1: f64, sigma: f64) -> Trial {
    if denom <= 0.0 {
        return Trial::Infinite;
    }
    let q = (1.0 - sigma) * c_norm1 / denom;
    if q.is_finite() {
        Trial::Finite(q)
    } else {
        Trial::Infinite
    }
}

/// Monotone update: keep `prev` when it does not exceed the trial value,
/// otherwise cut strictly below the trial by the factor (1 - epsilon).
pub fn update_tau(prev: f64, trial: Trial, epsilon: f64) -> f64 {
    match trial {
        Trial::Infinite => prev,
        Trial::Finite(t) => {
            if prev <= t {
                prev
            } else {
                (1.0 - epsilon) * t
            }
        }
    }
}

/// Trial ratio `dq / (tau ||d||_2^2)`; requires d != 0.
pub fn xi_trial(dq: f64, tau: f64, d_norm_sq: f64) -> f64 {
    dq / (tau * d_norm_sq)
}

/// Same keep-or-cut rule as the merit parameter, for the ratio parameter.
pub fn update_xi(prev: f64, trial: f64, epsilon: f64) -> f64 {
    if prev <= trial {
        prev
    } else {
        (1.0 - epsilon) * trial
    }
}

/// Acceptance test `phi_trial <= phi_current - eta alpha dq`, boundary
/// inclusive. A non-finite trial value never passes.
pub fn sufficient_decrease(
    phi_trial: f64,
    phi_current: f64,
    eta: f64,
    alpha: f64,
    dq: f64,
) -> bool {
    phi_trial <= phi_current - eta * alpha * dq
}
