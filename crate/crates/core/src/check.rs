//! Run-time verification of solver invariants.
//!
//! `InvariantChecker` is a `RunSink` that re-derives, from first principles,
//! the properties every accepted iteration is supposed to have, and records
//! a message for each violation. Attach it to a run and call
//! `assert_clean()` afterwards. The checks are independent of the solver
//! code paths: step decompositions, null space bases and model reductions
//! are recomputed from the logged matrices.

use crate::kkt::decompose;
use crate::merit::{self, Trial};
use crate::record::{RunSink, TraceEvent};

#[derive(Debug, Clone)]
pub struct InvariantChecker {
    /// Fractional cut used by the parameter updates under test.
    pub epsilon: f64,
    /// Feasibility weight in the reduction bound.
    pub sigma: f64,
    /// Sufficient decrease fraction for runs that enforce merit decrease.
    pub eta: f64,
    pub events: usize,
    pub violations: Vec<String>,
    max_kept: usize,
}

impl Default for InvariantChecker {
    fn default() -> Self {
        InvariantChecker {
            epsilon: 1e-6,
            sigma: 0.5,
            eta: 1e-4,
            events: 0,
            violations: Vec::new(),
            max_kept: 50,
        }
    }
}

impl InvariantChecker {
    pub fn new(epsilon: f64, sigma: f64, eta: f64) -> Self {
        InvariantChecker { epsilon, sigma, eta, ..InvariantChecker::default() }
    }

    fn flag(&mut self, k: usize, what: String) {
        if self.violations.len() < self.max_kept {
            self.violations.push(format!("k={k}: {what}"));
        } else if self.violations.len() == self.max_kept {
            self.violations.push("... further violations suppressed".into());
        }
    }

    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    /// Panics with every recorded violation.
    pub fn assert_clean(&self) {
        assert!(
            self.is_clean(),
            "{} invariant violations over {} iterations:\n{}",
            self.violations.len(),
            self.events,
            self.violations.join("\n")
        );
    }
}

impl RunSink for InvariantChecker {
    fn on_iteration(&mut self, ev: &TraceEvent<'_>) {
        self.events += 1;
        let k = ev.k;
        let c_norm1 = ev.c.lp_norm(1);
        let gtd = ev.g_used.dot(ev.d);
        let dhd = ev.d.dot(&(ev.h_eff * ev.d));
        let curv = merit::curvature(dhd);

        // the step satisfies the first optimality block of the system it
        // was solved from: g + H d + J' y = 0
        let r1 = ev.g_used + ev.h_eff * ev.d + ev.jac.transpose() * ev.y;
        let scale1 = ev.g_used.norm().max(1.0);
        if r1.norm() > 1e-7 * scale1 {
            self.flag(k, format!("step residual {:.3e} vs scale {:.3e}", r1.norm(), scale1));
        }

        // scalar consequence of that block and J d = -c: g'd + d'Hd = y'c
        let ytc = ev.y.dot(ev.c);
        let s_scale = gtd.abs().max(dhd.abs()).max(ytc.abs()).max(1.0);
        if (gtd + dhd - ytc).abs() > 1e-7 * s_scale {
            self.flag(
                k,
                format!("identity g'd + d'Hd = y'c off by {:.3e}", (gtd + dhd - ytc).abs()),
            );
        }

        // the parameter updates are exactly the published keep-or-cut rules
        let tau_expect = merit::update_tau(ev.tau_prev, ev.tau_trial, self.epsilon);
        if ev.tau != tau_expect {
            self.flag(k, format!("tau {} != update rule result {}", ev.tau, tau_expect));
        }
        if ev.tau > ev.tau_prev {
            self.flag(k, format!("tau increased {} -> {}", ev.tau_prev, ev.tau));
        }
        if let Trial::Finite(t) = ev.tau_trial {
            if ev.tau > t {
                self.flag(k, format!("tau {} above trial {}", ev.tau, t));
            }
        }
        if let (Some(xp), Some(xt), Some(x)) = (ev.xi_prev, ev.xi_trial, ev.xi) {
            let expect = merit::update_xi(xp, xt, self.epsilon);
            if x != expect {
                self.flag(k, format!("xi {} != update rule result {}", x, expect));
            }
        }

        // model reduction and its lower bound
        let dq_expect = merit::delta_q(ev.tau, gtd, dhd, c_norm1);
        let dq_scale = (ev.tau * gtd.abs()).max(ev.tau * curv).max(c_norm1).max(1.0);
        if (ev.dq - dq_expect).abs() > 1e-9 * dq_scale {
            self.flag(k, format!("dq {} != recomputed {}", ev.dq, dq_expect));
        }
        let bound = 0.5 * ev.tau * curv + self.sigma * c_norm1;
        if ev.dq < bound - 1e-9 * dq_scale {
            self.flag(k, format!("dq {:.6e} below bound {:.6e}", ev.dq, bound));
        }

        // step decomposition: the normal part is no longer than the
        // constraint violation allows, the tangential part lies in null(J)
        match decompose(ev.d, ev.jac, ev.c) {
            Ok(dec) => {
                let sv = ev.jac.clone().singular_values();
                let smin = sv.as_slice().iter().copied().fold(f64::INFINITY, f64::min);
                let vbound = ev.c.norm() / smin;
                let vscale = vbound.max(1.0);
                if dec.v.norm() > vbound + 1e-8 * vscale {
                    self.flag(
                        k,
                        format!("normal part {:.3e} above bound {:.3e}", dec.v.norm(), vbound),
                    );
                }
                let ju = ev.jac * &dec.u;
                let jscale = (ev.jac.norm() * dec.u.norm()).max(1.0);
                if ju.norm() > 1e-8 * jscale {
                    self.flag(k, format!("tangential part leaves null(J) by {:.3e}", ju.norm()));
                }
                let ztz = dec.z.transpose() * &dec.z;
                let eye = nalgebra::DMatrix::identity(ztz.nrows(), ztz.ncols());
                if (ztz - eye).norm() > 1e-10 {
                    self.flag(k, "null space basis is not orthonormal".into());
                }
                let zv = dec.z.transpose() * &dec.v;
                if zv.norm() > 1e-8 * dec.v.norm().max(1.0) {
                    self.flag(k, format!("normal part has null space component {:.3e}", zv.norm()));
                }
            }
            Err(e) => self.flag(k, format!("decomposition failed: {e}")),
        }

        // stepsize obligations
        if !(ev.alpha.is_finite() && ev.alpha > 0.0) {
            self.flag(k, format!("bad stepsize {}", ev.alpha));
        }
        if let Some((lo, hi)) = ev.interval {
            if ev.alpha < lo || ev.alpha > hi {
                self.flag(k, format!("alpha {} outside [{}, {}]", ev.alpha, lo, hi));
            }
        }
        if ev.enforces_decrease {
            match ev.phi_new {
                Some(phi_new) => {
                    if !merit::sufficient_decrease(phi_new, ev.phi_old, self.eta, ev.alpha, ev.dq) {
                        self.flag(
                            k,
                            format!(
                                "merit decrease violated: {} > {} - {}*{}*{}",
                                phi_new, ev.phi_old, self.eta, ev.alpha, ev.dq
                            ),
                        );
                    }
                }
                None => self.flag(k, "decrease enforced but no trial merit logged".into()),
            }
        }
    }
}
