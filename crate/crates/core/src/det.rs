//! Deterministic SQP with two step acceptance strategies.
//!
//! Both runners compute the same primal-dual step and merit parameter; they
//! differ in how the stepsize is chosen:
//!
//! * `run_adaptive` builds candidate steps from running Lipschitz constant
//!   estimates and accepts when the trial point either satisfies the
//!   quadratic upper/lower envelopes implied by those estimates or already
//!   gives sufficient merit decrease; violated estimates are inflated and
//!   the candidates recomputed.
//! * `run_linesearch` backtracks from a unit step until the merit decrease
//!   condition holds.
//!
//! Runs terminate successfully when the stationarity and feasibility
//! residuals drop below relative tolerances anchored at the first iterate.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SolverError};
use crate::kkt::{least_squares_multiplier, KktOptions, KktSystem};
use crate::lipschitz::LipschitzEstimates;
use crate::merit;
use crate::problem::{CountingProblem, Problem};
use crate::record::{
    Branch, IterRow, NullSink, RunMeta, RunRecord, RunSink, RunStatus, TraceEvent,
};

/// How the curvature matrix H is chosen at each iterate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HPolicy {
    #[default]
    Identity,
    /// Lagrangian Hessian at (x_k, y_{k-1}) with inertia correction; falls
    /// back to the identity when the problem has no Hessian callback.
    Hessian,
}

impl HPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            HPolicy::Identity => "identity",
            HPolicy::Hessian => "hessian",
        }
    }
}

impl std::str::FromStr for HPolicy {
    type Err = SolverError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(HPolicy::Identity),
            "hessian" => Ok(HPolicy::Hessian),
            other => Err(SolverError::InvalidConfig(format!("unknown H policy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DetConfig {
    /// Initial merit parameter.
    pub tau_init: f64,
    /// Fractional cut applied when a monotone parameter decreases.
    pub epsilon: f64,
    /// Feasibility weight in the merit parameter rule.
    pub sigma: f64,
    /// Sufficient decrease fraction.
    pub eta: f64,
    /// Inflation factor for violated Lipschitz estimates.
    pub rho: f64,
    /// Starting Lipschitz estimates.
    pub l_init: f64,
    pub gamma_init: f64,
    /// Per-iteration re-initialization factor for the estimates, in (0, 1].
    pub shrink_factor: f64,
    /// Backtracking contraction factor.
    pub nu: f64,
    /// Backtracking starting stepsize.
    pub alpha_init: f64,
    pub max_iter: usize,
    /// Cap on inner acceptance loop trips; far above the theoretical bound.
    pub inner_cap: usize,
    /// Relative stationarity tolerance.
    pub stat_tol: f64,
    /// Relative feasibility tolerance.
    pub feas_tol: f64,
    pub kkt: KktOptions,
}

impl Default for DetConfig {
    fn default() -> Self {
        DetConfig {
            tau_init: 1.0,
            epsilon: 1e-6,
            sigma: 0.5,
            eta: 1e-4,
            rho: 3.0,
            l_init: 1.0,
            gamma_init: 1.0,
            shrink_factor: 0.5,
            nu: 0.5,
            alpha_init: 1.0,
            max_iter: 10_000,
            inner_cap: 100,
            stat_tol: 1e-6,
            feas_tol: 1e-6,
            kkt: KktOptions::default(),
        }
    }
}

/// Candidate stepsizes from the quadratic envelope model:
/// `alpha_hat = 2 (1 - eta) dq / ((tau L + Gamma) ||d||^2)` and
/// `alpha_tilde = alpha_hat - 4 ||c||_1 / ((tau L + Gamma) ||d||^2)`.
pub fn stepsize_candidates(
    dq: f64,
    tau: f64,
    l: f64,
    gamma_total: f64,
    c_norm1: f64,
    d_norm_sq: f64,
    eta: f64,
) -> (f64, f64) {
    let denom = (tau * l + gamma_total) * d_norm_sq;
    let alpha_hat = 2.0 * (1.0 - eta) * dq / denom;
    let alpha_tilde = alpha_hat - 4.0 * c_norm1 / denom;
    (alpha_hat, alpha_tilde)
}

/// Three-way rule: take `alpha_hat` when it is short of a full step, a full
/// step when 1 lies between the candidates, otherwise `alpha_tilde`.
pub fn select_stepsize(alpha_hat: f64, alpha_tilde: f64) -> (f64, Branch) {
    debug_assert!(alpha_tilde <= alpha_hat);
    if alpha_hat < 1.0 {
        (alpha_hat, Branch::BelowOne)
    } else if alpha_tilde <= 1.0 {
        (1.0, Branch::Unit)
    } else {
        (alpha_tilde, Branch::AboveOne)
    }
}

/// Outcome of checking the two-sided Lipschitz envelopes at a trial point.
#[derive(Debug, Clone)]
pub struct LipschitzCheck {
    pub objective_violated: bool,
    pub constraints_violated: Vec<bool>,
}

impl LipschitzCheck {
    pub fn ok(&self) -> bool {
        !self.objective_violated && !self.constraints_violated.iter().any(|&v| v)
    }
}

/// Verify `f(x + a d) <= f + a g'd + L a^2 ||d||^2 / 2` and, per constraint,
/// `|c_i(x + a d)| <= |c_i + a (Jd)_i| + gamma_i a^2 ||d||^2 / 2`.
/// Non-finite trial values count as violations.
#[allow(clippy::too_many_arguments)]
pub fn lipschitz_valid(
    f0: f64,
    gtd: f64,
    c0: &DVector<f64>,
    jd: &DVector<f64>,
    f_trial: f64,
    c_trial: &DVector<f64>,
    l: f64,
    gamma: &DVector<f64>,
    alpha: f64,
    d_norm_sq: f64,
) -> LipschitzCheck {
    let quad = 0.5 * alpha * alpha * d_norm_sq;
    let objective_violated = !(f_trial <= f0 + alpha * gtd + l * quad);
    let constraints_violated = (0..c0.len())
        .map(|i| !(c_trial[i].abs() <= (c0[i] + alpha * jd[i]).abs() + gamma[i] * quad))
        .collect();
    LipschitzCheck { objective_violated, constraints_violated }
}

/// Adaptive-stepsize runner.
pub fn run_adaptive(problem: &Problem, cfg: &DetConfig, policy: HPolicy) -> Result<RunRecord> {
    run_adaptive_with(problem, cfg, policy, &mut NullSink)
}

pub fn run_adaptive_with(
    problem: &Problem,
    cfg: &DetConfig,
    policy: HPolicy,
    sink: &mut dyn RunSink,
) -> Result<RunRecord> {
    run_det(problem, cfg, policy, Mode::Adaptive, sink)
}

/// Backtracking runner.
pub fn run_linesearch(problem: &Problem, cfg: &DetConfig, policy: HPolicy) -> Result<RunRecord> {
    run_linesearch_with(problem, cfg, policy, &mut NullSink)
}

pub fn run_linesearch_with(
    problem: &Problem,
    cfg: &DetConfig,
    policy: HPolicy,
    sink: &mut dyn RunSink,
) -> Result<RunRecord> {
    run_det(problem, cfg, policy, Mode::Linesearch, sink)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Mode {
    Adaptive,
    Linesearch,
}

impl Mode {
    fn solver_name(self) -> &'static str {
        match self {
            Mode::Adaptive => "adaptive",
            Mode::Linesearch => "linesearch",
        }
    }
}

fn finite_state(f: f64, g: &DVector<f64>, c: &DVector<f64>, jac: &DMatrix<f64>) -> bool {
    f.is_finite()
        && g.iter().all(|v| v.is_finite())
        && c.iter().all(|v| v.is_finite())
        && jac.iter().all(|v| v.is_finite())
}

fn run_det(
    problem: &Problem,
    cfg: &DetConfig,
    policy: HPolicy,
    mode: Mode,
    sink: &mut dyn RunSink,
) -> Result<RunRecord> {
    let started = std::time::Instant::now();
    let cp = CountingProblem::new(problem);
    let n = problem.n();
    let m = problem.m();
    let use_hessian = policy == HPolicy::Hessian && problem.has_hessian();

    let meta = RunMeta {
        run_id: RunRecord::make_run_id(problem.name(), mode.solver_name(), policy.as_str(), 0.0, 0),
        problem: problem.name().to_string(),
        solver: mode.solver_name().to_string(),
        h_policy: policy.as_str().to_string(),
        seed: 0,
        noise_variance: 0.0,
        max_iter: cfg.max_iter,
        tau_fixed: None,
        lipschitz: None,
    };

    let mut x = problem.x0().clone();
    let mut y_prev = DVector::zeros(m);
    let mut tau = cfg.tau_init;
    let mut lip = LipschitzEstimates::uniform(cfg.l_init, cfg.gamma_init, m);
    let mut rows: Vec<IterRow> = Vec::new();
    let status;
    let mut scale_stat = 1.0f64;
    let mut scale_feas = 1.0f64;

    let mut k = 0usize;
    loop {
        let f = cp.objective(&x);
        let g = cp.gradient(&x)?;
        let c = cp.constraints(&x)?;
        let jac = cp.jacobian(&x)?;
        if !finite_state(f, &g, &c, &jac) {
            status = RunStatus::NumericalFailure;
            break;
        }

        let h = if use_hessian {
            cp.problem().lagrangian_hessian(&x, &y_prev)?.expect("hessian available")
        } else {
            DMatrix::identity(n, n)
        };

        let sys = match KktSystem::new(&h, &jac, &cfg.kkt) {
            Ok(sys) => sys,
            Err(SolverError::LicqFailure { .. }) => {
                let stat = least_squares_multiplier(&g, &jac)
                    .ok()
                    .map(|y| (&g + jac.transpose() * y).amax());
                rows.push(IterRow::state_only(k, f, c.amax(), stat, cp.objective_evals()));
                status = RunStatus::LicqFailure;
                break;
            }
            Err(_) => {
                status = RunStatus::NumericalFailure;
                break;
            }
        };
        let sol = match sys.solve(&g, &c) {
            Ok(sol) => sol,
            Err(_) => {
                status = RunStatus::NumericalFailure;
                break;
            }
        };

        let stat_step = (&g + jac.transpose() * &sol.y).amax();
        let feas = c.amax();
        let stat_ls =
            least_squares_multiplier(&g, &jac).ok().map(|y| (&g + jac.transpose() * y).amax());
        if k == 0 {
            scale_stat = stat_step.max(1.0);
            scale_feas = feas.max(1.0);
        }

        if stat_step <= cfg.stat_tol * scale_stat && feas <= cfg.feas_tol * scale_feas {
            rows.push(IterRow::state_only(k, f, feas, stat_ls, cp.objective_evals()));
            status = RunStatus::Success;
            break;
        }
        if k == cfg.max_iter {
            rows.push(IterRow::state_only(k, f, feas, stat_ls, cp.objective_evals()));
            status = RunStatus::IterationLimit;
            break;
        }

        // effective curvature matrix after the inertia shift
        let mut h_eff = h.clone();
        if sol.delta != 0.0 {
            for i in 0..n {
                h_eff[(i, i)] += sol.delta;
            }
        }
        let d = &sol.d;
        let gtd = g.dot(d);
        let dhd = d.dot(&(&h_eff * d));
        let c_norm1 = c.lp_norm(1);
        let d_norm_sq = d.norm_squared();

        let tau_prev = tau;
        // g'd + d'Hd = y'c for the exact step; evaluating the right side
        // avoids the catastrophic cancellation of the left near feasibility
        let model_term = if dhd >= 0.0 { sol.y.dot(&c) } else { gtd };
        let trial = merit::tau_trial_denom(model_term, c_norm1, cfg.sigma);
        tau = merit::update_tau(tau, trial, cfg.epsilon);
        let dq = merit::delta_q(tau, gtd, dhd, c_norm1);
        let phi_old = merit::phi(tau, f, c_norm1);
        if !(dq > 0.0) || d_norm_sq == 0.0 {
            // the model predicts no progress yet the residual test failed;
            // numerical trouble rather than convergence
            status = RunStatus::NumericalFailure;
            break;
        }

        let jd = &jac * d;
        let mut accepted: Option<(f64, Option<Branch>, f64, f64)> = None; // alpha, branch, f_trial, c1_trial
        let mut x_trial = x.clone();

        match mode {
            Mode::Adaptive => {
                let mut lip_j = lip.scaled(cfg.shrink_factor);
                for _trip in 0..cfg.inner_cap {
                    let (alpha_hat, alpha_tilde) = stepsize_candidates(
                        dq,
                        tau,
                        lip_j.l,
                        lip_j.gamma_total(),
                        c_norm1,
                        d_norm_sq,
                        cfg.eta,
                    );
                    if !alpha_hat.is_finite() || !alpha_tilde.is_finite() {
                        break;
                    }
                    let (alpha, branch) = select_stepsize(alpha_hat, alpha_tilde);
                    x_trial = &x + alpha * d;
                    let f_trial = cp.objective(&x_trial);
                    let c_trial = cp.constraints(&x_trial)?;
                    let check = lipschitz_valid(
                        f,
                        gtd,
                        &c,
                        &jd,
                        f_trial,
                        &c_trial,
                        lip_j.l,
                        &lip_j.gamma,
                        alpha,
                        d_norm_sq,
                    );
                    let c1_trial = c_trial.lp_norm(1);
                    let suff = merit::sufficient_decrease(
                        merit::phi(tau, f_trial, c1_trial),
                        phi_old,
                        cfg.eta,
                        alpha,
                        dq,
                    );
                    // inflate before the acceptance test: estimates stored on
                    // a merit-based acceptance must reflect observed envelope
                    // violations, or repeated halving drives them to zero
                    if check.objective_violated {
                        lip_j.l *= cfg.rho;
                    }
                    for i in 0..m {
                        if check.constraints_violated[i] {
                            lip_j.gamma[i] *= cfg.rho;
                        }
                    }
                    if check.ok() || suff {
                        lip = lip_j.clone();
                        accepted = Some((alpha, Some(branch), f_trial, c1_trial));
                        break;
                    }
                }
            }
            Mode::Linesearch => {
                let mut alpha = cfg.alpha_init;
                for _trip in 0..cfg.inner_cap {
                    x_trial = &x + alpha * d;
                    let f_trial = cp.objective(&x_trial);
                    let c_trial = cp.constraints(&x_trial)?;
                    let c1_trial = c_trial.lp_norm(1);
                    if merit::sufficient_decrease(
                        merit::phi(tau, f_trial, c1_trial),
                        phi_old,
                        cfg.eta,
                        alpha,
                        dq,
                    ) {
                        accepted = Some((alpha, None, f_trial, c1_trial));
                        break;
                    }
                    alpha *= cfg.nu;
                }
            }
        }

        let (alpha, branch, f_trial, c1_trial) = match accepted {
            Some(t) => t,
            None => {
                rows.push(IterRow::state_only(k, f, feas, stat_ls, cp.objective_evals()));
                status = match mode {
                    Mode::Adaptive => RunStatus::NumericalFailure,
                    Mode::Linesearch => RunStatus::LinesearchFailure,
                };
                break;
            }
        };

        sink.on_iteration(&TraceEvent {
            k,
            x: &x,
            f,
            c: &c,
            g_true: &g,
            g_used: &g,
            jac: &jac,
            h_eff: &h_eff,
            d,
            y: &sol.y,
            delta: sol.delta,
            tau_prev,
            tau_trial: trial,
            tau,
            dq,
            xi_prev: None,
            xi_trial: None,
            xi: None,
            alpha,
            branch,
            interval: None,
            beta: None,
            phi_old,
            phi_new: Some(merit::phi(tau, f_trial, c1_trial)),
            enforces_decrease: mode == Mode::Linesearch,
        });

        rows.push(IterRow {
            k,
            f,
            feas,
            stat: stat_ls,
            stat_step: Some(stat_step),
            tau: Some(tau),
            tau_trial: Some(trial),
            xi: None,
            beta: None,
            alpha: Some(alpha),
            branch,
            d_norm: Some(d_norm_sq.sqrt()),
            delta: Some(sol.delta),
            fevals: cp.objective_evals(),
            flags: Vec::new(),
        });

        y_prev = sol.y;
        x = x_trial;
        k += 1;
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
