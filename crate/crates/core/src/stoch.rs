//! Budget-based SQP with noisy gradients.
//!
//! Each iteration solves the step system with a sampled gradient estimate,
//! updates the merit parameter and a step-scaling ratio from the sampled
//! quantities, and takes a stepsize chosen by projecting the same candidate
//! formulas the deterministic solver uses onto a shrinking trust interval
//! `[beta xi tau / (tau L + Gamma), ... + theta beta^2]`. There is no
//! acceptance test and no early stopping: the run always consumes its full
//! iteration budget.
//!
//! Alongside every sampled solve, the same factorization is applied to the
//! true gradient. The resulting shadow quantities are logged so that runs
//! can be compared against the noise-free trajectory, but they never
//! influence the iterates.

use nalgebra::DMatrix;

use crate::error::{Result, SolverError};
use crate::kkt::{least_squares_multiplier, KktOptions, KktSystem};
use crate::lipschitz;
use crate::merit;
use crate::oracle::{GradientOracle, OracleConfig};
use crate::problem::{CountingProblem, Problem};
use crate::record::{IterRow, NullSink, RunMeta, RunRecord, RunSink, RunStatus, TraceEvent};

/// Stepsize damping sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BetaSchedule {
    Constant(f64),
    /// `beta0 / (k + 1)^exponent`.
    Diminishing {
        beta0: f64,
        exponent: f64,
    },
}

impl BetaSchedule {
    pub fn at(self, k: usize) -> f64 {
        match self {
            BetaSchedule::Constant(b) => b,
            BetaSchedule::Diminishing { beta0, exponent } => {
                beta0 / ((k + 1) as f64).powf(exponent)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct StochConfig {
    pub tau_init: f64,
    pub xi_init: f64,
    /// Fractional cut applied when a monotone parameter decreases.
    pub epsilon: f64,
    /// Feasibility weight in the merit parameter rule.
    pub sigma: f64,
    /// Width multiplier of the stepsize interval.
    pub theta: f64,
    pub beta: BetaSchedule,
    /// Iteration budget; the run produces exactly this many rows.
    pub max_iter: usize,
    /// Relative threshold below which the sampled step counts as zero. The
    /// default is sqrt(machine epsilon): a shorter step sits at the accuracy
    /// floor of the linear solve, where the computed model reduction is
    /// rounding noise and can come out nonpositive at a stationary point.
    pub d_zero_tol: f64,
    /// Smoothness constants (L, Gamma). Estimated from gradient differences
    /// near the start when absent.
    pub lipschitz: Option<(f64, f64)>,
    pub noise: OracleConfig,
    pub kkt: KktOptions,
}

impl Default for StochConfig {
    fn default() -> Self {
        StochConfig {
            tau_init: 1.0,
            xi_init: 1.0,
            epsilon: 1e-6,
            sigma: 0.5,
            theta: 10.0,
            beta: BetaSchedule::Constant(1.0),
            max_iter: 1000,
            d_zero_tol: f64::EPSILON.sqrt(),
            lipschitz: None,
            noise: OracleConfig::default(),
            kkt: KktOptions::default(),
        }
    }
}

pub fn run_stochastic(problem: &Problem, cfg: &StochConfig) -> Result<RunRecord> {
    run_stochastic_with(problem, cfg, &mut NullSink)
}

pub fn run_stochastic_with(
    problem: &Problem,
    cfg: &StochConfig,
    sink: &mut dyn RunSink,
) -> Result<RunRecord> {
    let started = std::time::Instant::now();
    let cp = CountingProblem::new(problem);
    let n = problem.n();
    let (l, gamma_total) = match cfg.lipschitz {
        Some(pair) => pair,
        None => {
            let est = lipschitz::estimate_default(problem, cfg.noise.seed)?;
            (est.l, est.gamma_total())
        }
    };
    if !(l + gamma_total > 0.0) {
        return Err(SolverError::InvalidConfig(
            "smoothness estimates vanish; the stepsize interval is undefined".into(),
        ));
    }

    let meta = RunMeta {
        run_id: RunRecord::make_run_id(
            problem.name(),
            "stochastic",
            "identity",
            cfg.noise.noise_variance,
            cfg.noise.seed,
        ),
        problem: problem.name().to_string(),
        solver: "stochastic".to_string(),
        h_policy: "identity".to_string(),
        seed: cfg.noise.seed,
        noise_variance: cfg.noise.noise_variance,
        max_iter: cfg.max_iter,
        tau_fixed: None,
        lipschitz: Some((l, gamma_total)),
    };

    let oracle = GradientOracle::new(cfg.noise);
    let h = DMatrix::<f64>::identity(n, n);
    let mut x = problem.x0().clone();
    let mut tau = cfg.tau_init;
    let mut xi = cfg.xi_init;
    let mut rows: Vec<IterRow> = Vec::new();
    let mut status = RunStatus::Completed;

    for k in 0..cfg.max_iter {
        let f = cp.objective(&x);
        let g = cp.gradient(&x)?;
        let c = cp.constraints(&x)?;
        let jac = cp.jacobian(&x)?;
        if !(f.is_finite()
            && g.iter().all(|v| v.is_finite())
            && c.iter().all(|v| v.is_finite())
            && jac.iter().all(|v| v.is_finite()))
        {
            status = RunStatus::NumericalFailure;
            break;
        }
        let gbar = oracle.sample(k as u64, &g).gbar;

        let sys = match KktSystem::new(&h, &jac, &cfg.kkt) {
            Ok(sys) => sys,
            Err(SolverError::LicqFailure { .. }) => {
                status = RunStatus::LicqFailure;
                break;
            }
            Err(_) => {
                status = RunStatus::NumericalFailure;
                break;
            }
        };
        let sol = match sys.solve(&gbar, &c) {
            Ok(s) => s,
            Err(_) => {
                status = RunStatus::NumericalFailure;
                break;
            }
        };
        let shadow = match sys.solve(&g, &c) {
            Ok(s) => s,
            Err(_) => {
                status = RunStatus::NumericalFailure;
                break;
            }
        };

        let feas = c.amax();
        let stat =
            least_squares_multiplier(&g, &jac).ok().map(|y| (&g + jac.transpose() * y).amax());
        let c_norm1 = c.lp_norm(1);

        // identity curvature: d'Hd = ||d||^2, so the clamp never activates
        // and the stable form of the parameter rule term is y'c throughout
        let shadow_trial = merit::tau_trial_denom(shadow.y.dot(&c), c_norm1, cfg.sigma);

        let dbar = &sol.d;
        if dbar.amax() <= cfg.d_zero_tol * x.amax().max(1.0) {
            rows.push(IterRow {
                k,
                f,
                feas,
                stat,
                stat_step: None,
                tau: Some(tau),
                tau_trial: None,
                xi: Some(xi),
                beta: Some(cfg.beta.at(k)),
                alpha: None,
                branch: None,
                d_norm: Some(dbar.norm()),
                delta: Some(sol.delta),
                fevals: cp.objective_evals(),
                flags: vec!["zero-step".to_string()],
            });
            continue;
        }

        let gtd = gbar.dot(dbar);
        let dhd = dbar.norm_squared();
        let d_norm_sq = dhd;
        let tau_prev = tau;
        let trial = merit::tau_trial_denom(sol.y.dot(&c), c_norm1, cfg.sigma);
        tau = merit::update_tau(tau, trial, cfg.epsilon);
        let dq = merit::delta_q(tau, gtd, dhd, c_norm1);
        if !(dq > 0.0) {
            status = RunStatus::NumericalFailure;
            break;
        }
        let xi_prev = xi;
        let xi_t = merit::xi_trial(dq, tau, d_norm_sq);
        xi = merit::update_xi(xi, xi_t, cfg.epsilon);

        let beta = cfg.beta.at(k);
        let denom = (tau * l + gamma_total) * d_norm_sq;
        let lo = beta * xi * tau / (tau * l + gamma_total);
        let hi = lo + cfg.theta * beta * beta;
        if !(lo.is_finite() && hi.is_finite() && denom > 0.0) {
            status = RunStatus::NumericalFailure;
            break;
        }
        let mut flags = Vec::new();
        if !(lo > 0.0 && lo <= 1.0) {
            log::warn!("{} k={}: interval start {:.3e} outside (0, 1]", meta.run_id, k, lo);
            flags.push("interval".to_string());
        }
        // the second candidate comes from the unprojected first one; both
        // are then projected separately (the projection is monotone, so the
        // candidate order is preserved)
        let alpha_hat_init = beta * dq / denom;
        let alpha_tilde_init = alpha_hat_init - 4.0 * c_norm1 / denom;
        if !(alpha_hat_init.is_finite() && alpha_tilde_init.is_finite()) {
            status = RunStatus::NumericalFailure;
            break;
        }
        let alpha_hat = alpha_hat_init.clamp(lo, hi);
        let alpha_tilde = alpha_tilde_init.clamp(lo, hi);
        let (alpha, branch) = crate::det::select_stepsize(alpha_hat, alpha_tilde);

        sink.on_iteration(&TraceEvent {
            k,
            x: &x,
            f,
            c: &c,
            g_true: &g,
            g_used: &gbar,
            jac: &jac,
            h_eff: &h,
            d: dbar,
            y: &sol.y,
            delta: sol.delta,
            tau_prev,
            tau_trial: trial,
            tau,
            dq,
            xi_prev: Some(xi_prev),
            xi_trial: Some(xi_t),
            xi: Some(xi),
            alpha,
            branch: Some(branch),
            interval: Some((lo, hi)),
            beta: Some(beta),
            phi_old: merit::phi(tau, f, c_norm1),
            phi_new: None,
            enforces_decrease: false,
        });

        rows.push(IterRow {
            k,
            f,
            feas,
            stat,
            stat_step: None,
            tau: Some(tau),
            tau_trial: Some(shadow_trial),
            xi: Some(xi),
            beta: Some(beta),
            alpha: Some(alpha),
            branch: Some(branch),
            d_norm: Some(d_norm_sq.sqrt()),
            delta: Some(sol.delta),
            fevals: cp.objective_evals(),
            flags,
        });

        x += alpha * dbar;
    }

    Ok(RunRecord {
        meta,
        rows,
        status,
        fevals: cp.objective_evals(),
        final_x: x.iter().copied().collect(),
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}
