//! Stochastic subgradient descent on the l1 exact penalty function, the
//! reference method for the budget-based comparisons.
//!
//! The penalty parameter is fixed for a whole run; a grid search picks the
//! value that does best on the same budget and seed the final run uses.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SolverError};
use crate::kkt::least_squares_multiplier;
use crate::lipschitz;
use crate::metrics::{extract_errors, ErrorPair};
use crate::oracle::{GradientOracle, OracleConfig};
use crate::problem::{CountingProblem, Problem};
use crate::record::{IterRow, RunMeta, RunRecord, RunStatus};

#[derive(Debug, Clone)]
pub struct SubgradConfig {
    /// Penalty parameter weighting the objective against `||c||_1`.
    pub tau: f64,
    /// Iteration budget; the run produces exactly this many rows.
    pub max_iter: usize,
    /// Smoothness constants (L, Gamma); estimated near the start when
    /// absent, with the same seeded recipe the budget-based SQP runs use.
    pub lipschitz: Option<(f64, f64)>,
    pub noise: OracleConfig,
}

impl Default for SubgradConfig {
    fn default() -> Self {
        SubgradConfig { tau: 1.0, max_iter: 1000, lipschitz: None, noise: OracleConfig::default() }
    }
}

/// Element of the subdifferential of `tau f + ||c||_1`: `tau g + J' sign(c)`
/// with the zero subgradient chosen on active constraints.
pub fn penalty_subgradient(
    tau: f64,
    g: &DVector<f64>,
    jac: &DMatrix<f64>,
    c: &DVector<f64>,
) -> DVector<f64> {
    let sign = c.map(|v| {
        if v > 0.0 {
            1.0
        } else if v < 0.0 {
            -1.0
        } else {
            0.0
        }
    });
    tau * g + jac.transpose() * sign
}

pub fn run_subgradient(problem: &Problem, cfg: &SubgradConfig) -> Result<RunRecord> {
    let started = std::time::Instant::now();
    let cp = CountingProblem::new(problem);
    let (l, gamma_total) = match cfg.lipschitz {
        Some(pair) => pair,
        None => {
            let est = lipschitz::estimate_default(problem, cfg.noise.seed)?;
            (est.l, est.gamma_total())
        }
    };
    if !(cfg.tau * l + gamma_total > 0.0) {
        return Err(SolverError::InvalidConfig(
            "smoothness estimates vanish; the constant stepsize is undefined".into(),
        ));
    }
    let step = cfg.tau / (cfg.tau * l + gamma_total);

    let meta = RunMeta {
        run_id: RunRecord::make_run_id(
            problem.name(),
            "subgradient",
            "none",
            cfg.noise.noise_variance,
            cfg.noise.seed,
        ),
        problem: problem.name().to_string(),
        solver: "subgradient".to_string(),
        h_policy: "none".to_string(),
        seed: cfg.noise.seed,
        noise_variance: cfg.noise.noise_variance,
        max_iter: cfg.max_iter,
        tau_fixed: Some(cfg.tau),
        lipschitz: Some((l, gamma_total)),
    };

    let oracle = GradientOracle::new(cfg.noise);
    let mut x = problem.x0().clone();
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
        let sg = penalty_subgradient(cfg.tau, &gbar, &jac, &c);

        let stat =
            least_squares_multiplier(&g, &jac).ok().map(|y| (&g + jac.transpose() * y).amax());
        rows.push(IterRow {
            k,
            f,
            feas: c.amax(),
            stat,
            stat_step: None,
            tau: Some(cfg.tau),
            tau_trial: None,
            xi: None,
            beta: None,
            alpha: Some(step),
            branch: None,
            d_norm: Some(sg.norm()),
            delta: None,
            fevals: cp.objective_evals(),
            flags: Vec::new(),
        });

        x -= step * sg;
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

/// Default tuning grid: eleven decades ending at 1.
pub fn default_tau_grid() -> Vec<f64> {
    (-10..=0).map(|e| 10f64.powi(e)).collect()
}

#[derive(Debug, Clone)]
pub struct TuneOutcome {
    pub best_tau: f64,
    pub best: ErrorPair,
    /// Every grid value with the errors its run achieved, in grid order.
    pub table: Vec<(f64, ErrorPair)>,
}

/// Run the full grid with everything but the penalty parameter held fixed
/// and keep the value with lexicographically smallest
/// (feasibility error, optimality error); ties keep the earliest grid entry.
pub fn tune_tau(
    problem: &Problem,
    base: &SubgradConfig,
    grid: &[f64],
    tol: f64,
) -> Result<TuneOutcome> {
    if grid.is_empty() {
        return Err(SolverError::InvalidConfig("empty tuning grid".into()));
    }
    let mut table = Vec::with_capacity(grid.len());
    for &tau in grid {
        let cfg = SubgradConfig { tau, ..base.clone() };
        let rec = run_subgradient(problem, &cfg)?;
        let errs = extract_errors(&rec.rows, tol).unwrap_or(ErrorPair {
            feasibility: f64::INFINITY,
            optimality: f64::INFINITY,
            at_iteration: 0,
            was_feasible: false,
        });
        table.push((tau, errs));
    }
    let (mut best_tau, mut best) = table[0];
    for &(tau, e) in &table[1..] {
        let better = e.feasibility < best.feasibility
            || (e.feasibility == best.feasibility && e.optimality < best.optimality);
        if better {
            best_tau = tau;
            best = e;
        }
    }
    Ok(TuneOutcome { best_tau, best, table })
}
