//! End-to-end acceptance checks. Each test prints one
//! `[ACCEPTANCE] criterion N (<name>): PASS|FAIL` line (run with
//! `--nocapture` to see them on success) and panics with details on failure.

// `!(x > eps)` guards fail closed on NaN, same as the library code.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use eqsqp::check::InvariantChecker;
use eqsqp::det::{
    self, run_adaptive, run_adaptive_with, run_linesearch, run_linesearch_with, DetConfig, HPolicy,
};
use eqsqp::experiment::{self, ExperimentPlan, SolverSpec};
use eqsqp::kkt::{
    decompose, least_squares_multiplier, null_space_basis, solve_kkt, stationarity_residual,
    KktOptions, KktSystem,
};
use eqsqp::merit::{self, Trial};
use eqsqp::metrics::{self, ProfileInput};
use eqsqp::oracle::{GradientOracle, OracleConfig};
use eqsqp::problem::Problem;
use eqsqp::record::{Branch, IterRow, RunStatus};
use eqsqp::stoch::{run_stochastic, run_stochastic_with, StochConfig};
use eqsqp::subgrad::{self, SubgradConfig};
use eqsqp::suite;

fn report(n: usize, name: &str, res: Result<(), String>) {
    let verdict = if res.is_ok() { "PASS" } else { "FAIL" };
    println!("[ACCEPTANCE] criterion {n} ({name}): {verdict}");
    if let Err(e) = res {
        panic!("criterion {n} ({name}):\n{e}");
    }
}

fn budget(elapsed: std::time::Duration, limit_s: f64, errs: &mut Vec<String>) {
    if elapsed.as_secs_f64() > limit_s {
        errs.push(format!("runtime {:.1}s exceeds the {limit_s}s budget", elapsed.as_secs_f64()));
    }
}

fn finish(errs: Vec<String>) -> Result<(), String> {
    if errs.is_empty() {
        Ok(())
    } else {
        Err(errs.join("\n"))
    }
}

fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty());
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let h = (v.len() - 1) as f64 * 0.5;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    0.5 * (v[lo] + v[hi])
}

#[test]
fn criterion_1_deterministic_convergence() {
    let started = Instant::now();
    let mut errs = Vec::new();
    let cfg = DetConfig::default();
    for problem in suite::all() {
        for policy in [HPolicy::Identity, HPolicy::Hessian] {
            type Runner = fn(&Problem, &DetConfig, HPolicy) -> eqsqp::Result<eqsqp::RunRecord>;
            for (mode, run) in
                [("adaptive", run_adaptive as Runner), ("linesearch", run_linesearch as Runner)]
            {
                let tag = format!("{} {mode} {}", problem.name(), policy.as_str());
                let rec = match run(&problem, &cfg, policy) {
                    Ok(r) => r,
                    Err(e) => {
                        errs.push(format!("{tag}: {e}"));
                        continue;
                    }
                };
                if rec.status != RunStatus::Success {
                    errs.push(format!("{tag}: status {:?}", rec.status));
                    continue;
                }
                let iters = rec.rows.last().map(|r| r.k).unwrap_or(0);
                if iters > 10_000 {
                    errs.push(format!("{tag}: {iters} iterations"));
                }
                if let Some(xs) = problem.known_solution() {
                    let dist = rec
                        .final_x
                        .iter()
                        .zip(xs.iter())
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0f64, f64::max);
                    if dist > 1e-5 {
                        errs.push(format!("{tag}: {dist:.2e} from the catalogued solution"));
                    }
                }
            }
        }
    }
    budget(started.elapsed(), 10.0, &mut errs);
    report(1, "deterministic convergence", finish(errs));
}

#[test]
fn criterion_2_iteration_invariants() {
    let mut errs = Vec::new();
    let det_cfg = DetConfig::default();
    for problem in suite::all() {
        for policy in [HPolicy::Identity, HPolicy::Hessian] {
            let mut chk = InvariantChecker::default();
            match run_adaptive_with(&problem, &det_cfg, policy, &mut chk) {
                Ok(_) => {
                    if !chk.is_clean() {
                        errs.push(format!(
                            "{} adaptive {}: {}",
                            problem.name(),
                            policy.as_str(),
                            chk.violations.join("; ")
                        ));
                    }
                }
                Err(e) => errs.push(format!("{} adaptive: {e}", problem.name())),
            }
            let mut chk = InvariantChecker::default();
            match run_linesearch_with(&problem, &det_cfg, policy, &mut chk) {
                Ok(_) => {
                    if !chk.is_clean() {
                        errs.push(format!(
                            "{} linesearch {}: {}",
                            problem.name(),
                            policy.as_str(),
                            chk.violations.join("; ")
                        ));
                    }
                }
                Err(e) => errs.push(format!("{} linesearch: {e}", problem.name())),
            }
        }
        for noise in [1e-8, 1e-2] {
            let cfg = StochConfig {
                max_iter: 300,
                noise: OracleConfig { noise_variance: noise, seed: 1 },
                ..StochConfig::default()
            };
            let mut chk = InvariantChecker::default();
            match run_stochastic_with(&problem, &cfg, &mut chk) {
                Ok(_) => {
                    if !chk.is_clean() {
                        errs.push(format!(
                            "{} stochastic noise={noise:e}: {}",
                            problem.name(),
                            chk.violations.join("; ")
                        ));
                    }
                }
                Err(e) => errs.push(format!("{} stochastic: {e}", problem.name())),
            }
        }
    }
    report(2, "iteration invariants", finish(errs));
}

#[test]
fn criterion_3_hand_derived_oracles() {
    let mut errs = Vec::new();
    let mut ensure = |cond: bool, msg: String| {
        if !cond {
            errs.push(msg);
        }
    };
    let close = |a: f64, b: f64, tol: f64| (a - b).abs() <= tol;
    let v = |s: &[f64]| DVector::from_row_slice(s);

    // problem evaluations against direct arithmetic
    {
        let p = suite::by_name("lin-quad").unwrap();
        let e0 = p.evaluate(&v(&[0.0, 0.0])).unwrap();
        ensure(
            e0.f == 0.0 && e0.g == v(&[0.0, 0.0]) && e0.c == v(&[-2.0]),
            format!("lin-quad at origin: f={}, c={:?}", e0.f, e0.c),
        );
        ensure(
            e0.jac == DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            "lin-quad Jacobian at origin".into(),
        );
        let e1 = p.evaluate(&v(&[1.0, 1.0])).unwrap();
        ensure(
            e1.f == 1.0 && e1.g == v(&[1.0, 1.0]) && e1.c == v(&[0.0]),
            format!("lin-quad at (1,1): f={}, c={:?}", e1.f, e1.c),
        );
        ensure(p.known_solution() == Some(&v(&[1.0, 1.0])), "lin-quad catalogued solution".into());

        let cr = suite::by_name("circle-rosen").unwrap();
        let ec = cr.evaluate(&v(&[1.0, 1.0])).unwrap();
        ensure(ec.c == v(&[1.0]), format!("circle-rosen c at (1,1): {:?}", ec.c));
        ensure(
            ec.jac == DMatrix::from_row_slice(1, 2, &[2.0, 2.0]),
            "circle-rosen J at (1,1)".into(),
        );
    }

    // constraint qualification across the suite
    for p in suite::all() {
        let jac = p.jacobian(p.x0()).unwrap();
        let smin = jac.singular_values().iter().fold(f64::INFINITY, |a, &b| a.min(b));
        ensure(smin > 1e-8, format!("{}: sigma_min(J(x0)) = {smin:e}", p.name()));
    }

    // hand-solved 3x3 primal-dual systems
    {
        let h = DMatrix::<f64>::identity(2, 2);
        let j = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let opts = KktOptions::default();
        let s = solve_kkt(&h, &j, &v(&[1.0, 1.0]), &v(&[1.0]), &opts).unwrap();
        ensure(
            close(s.d[0], -1.0, 1e-12) && close(s.d[1], -1.0, 1e-12),
            format!("hand system 1: d = {:?}", s.d),
        );
        ensure(close(s.y[0], 0.0, 1e-12) && s.delta == 0.0, "hand system 1: y, delta".into());

        let s2 = solve_kkt(&h, &j, &v(&[0.0, 2.0]), &v(&[0.0]), &opts).unwrap();
        ensure(
            close(s2.d[0], 0.0, 1e-12) && close(s2.d[1], -2.0, 1e-12) && close(s2.y[0], 0.0, 1e-12),
            format!("hand system 2: d = {:?}, y = {:?}", s2.d, s2.y),
        );

        let dec = decompose(&v(&[-1.0, -1.0]), &j, &v(&[1.0])).unwrap();
        ensure(
            close(dec.v[0], -1.0, 1e-12) && close(dec.v[1], 0.0, 1e-12),
            format!("decomposition v = {:?}", dec.v),
        );
        ensure(
            close(dec.u[0], 0.0, 1e-12) && close(dec.u[1], -1.0, 1e-12),
            format!("decomposition u = {:?}", dec.u),
        );

        let (stat, feas) = stationarity_residual(&v(&[1.0, 1.0]), &j, &v(&[-1.0]), &v(&[0.0]));
        ensure(stat == 1.0 && feas == 0.0, format!("residual pair 1: ({stat}, {feas})"));
        let (stat, feas) = stationarity_residual(&v(&[2.0, 0.0]), &j, &v(&[-2.0]), &v(&[0.5]));
        ensure(stat == 0.0 && feas == 0.5, format!("residual pair 2: ({stat}, {feas})"));

        let y = least_squares_multiplier(&v(&[1.0, 1.0]), &j).unwrap();
        ensure(close(y[0], -1.0, 1e-12), format!("normal equation 1: y = {:?}", y));
        let j2 = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let y2 = least_squares_multiplier(&v(&[1.0, 1.0]), &j2).unwrap();
        let r2 = (&v(&[1.0, 1.0]) + j2.transpose() * &y2).amax();
        ensure(
            close(y2[0], -1.0, 1e-12) && r2 <= 1e-12,
            format!("normal equation 2: y = {:?}, residual {r2:e}", y2),
        );
    }

    // merit arithmetic
    {
        ensure(merit::phi(0.5, 3.0, 3.0) == 4.5, "phi case 1".into());
        ensure(merit::phi(10.0, 0.0, 1.0) == 1.0, "phi case 2".into());
        ensure(merit::delta_q(1.0, -2.0, 2.0, 1.0) == 2.0, "delta_q case 1".into());
        ensure(
            merit::delta_q(1.0, 1.0, -4.0, 0.0) == -1.0,
            "delta_q clamps negative curvature".into(),
        );
        ensure(
            merit::directional_derivative(1.0, -2.0, 1.0) == -3.0,
            "directional derivative".into(),
        );

        let t1 = merit::tau_trial(1.0, 0.0, 2.0, 0.5);
        ensure(t1 == Trial::Finite(1.0), format!("trial case 1: {t1:?}"));
        ensure(merit::update_tau(1.0, t1, 1e-6) == 1.0, "trial case 1 keeps tau".into());
        let t2 = merit::tau_trial_denom(4.0, 2.0, 0.5);
        ensure(t2 == Trial::Finite(0.25), format!("trial case 2: {t2:?}"));
        ensure(
            merit::update_tau(1.0, t2, 1e-6) == 0.25 * (1.0 - 1e-6),
            "trial case 2 cuts tau".into(),
        );

        ensure(merit::xi_trial(2.0, 1.0, 4.0) == 0.5, "xi trial".into());
        ensure(merit::update_xi(0.25, 0.5, 1e-6) == 0.25, "xi kept".into());
        ensure(merit::update_xi(1.0, 0.5, 1e-6) == 0.5 * (1.0 - 1e-6), "xi cut".into());

        ensure(merit::sufficient_decrease(9.0, 10.0, 1e-4, 1.0, 2.0), "decrease satisfied".into());
        ensure(
            merit::sufficient_decrease(10.0 - 2.0 * 1e-4, 10.0, 1e-4, 1.0, 2.0),
            "decrease boundary counts".into(),
        );
    }

    // candidate stepsizes and the three-way rule
    {
        let (hat, tilde) = det::stepsize_candidates(1.0, 1.0, 1.0, 1.0, 0.0, 1.0, 0.5);
        ensure(hat == 0.5 && tilde == 0.5, format!("candidates 1: ({hat}, {tilde})"));
        let (hat, tilde) = det::stepsize_candidates(4.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1e-4);
        ensure(
            close(hat, 3.9996, 1e-12) && close(tilde, 1.9996, 1e-12),
            format!("candidates 2: ({hat}, {tilde})"),
        );
        ensure(
            det::select_stepsize(0.5, 0.3) == (0.5, Branch::BelowOne),
            "select below one".into(),
        );
        ensure(det::select_stepsize(2.0, 0.5) == (1.0, Branch::Unit), "select unit".into());
        ensure(
            det::select_stepsize(3.0, 1.5) == (1.5, Branch::AboveOne),
            "select above one".into(),
        );
    }

    // envelope test boundary on f(x) = x^2 at the origin
    {
        let c0 = DVector::<f64>::zeros(0);
        let gamma = DVector::<f64>::zeros(0);
        let chk = det::lipschitz_valid(0.0, 0.0, &c0, &c0, 1.0, &c0, 1.0, &gamma, 1.0, 1.0);
        ensure(chk.objective_violated, "L=1 must be violated".into());
        let chk = det::lipschitz_valid(0.0, 0.0, &c0, &c0, 1.0, &c0, 2.0, &gamma, 1.0, 1.0);
        ensure(chk.ok(), "L=2 boundary must hold".into());
    }

    // projected stepsizes for budget runs, both documented cases
    {
        let (beta, xi, tau, l, gamma, theta) = (1.0, 0.5, 1.0, 1.0, 1.0, 10.0);
        let lo = beta * xi * tau / (tau * l + gamma);
        let hi = lo + theta * beta * beta;
        ensure(lo == 0.25 && hi == 10.25, format!("interval ({lo}, {hi})"));
        let denom = (tau * l + gamma) * 1.0;
        let hat_init: f64 = beta * 1.0 / denom;
        let tilde_init = hat_init - 4.0 * 0.0 / denom;
        let pair = det::select_stepsize(hat_init.clamp(lo, hi), tilde_init.clamp(lo, hi));
        ensure(pair == (0.5, Branch::BelowOne), format!("projected case 1: {pair:?}"));
        let hat_init: f64 = beta * 30.0 / denom;
        let tilde_init = hat_init - 4.0 * 1.0 / denom;
        ensure(
            hat_init == 15.0 && tilde_init == 13.0,
            format!("unprojected pair ({hat_init}, {tilde_init})"),
        );
        let pair = det::select_stepsize(hat_init.clamp(lo, hi), tilde_init.clamp(lo, hi));
        ensure(pair == (10.25, Branch::AboveOne), format!("projected case 2: {pair:?}"));
    }

    // penalty subgradient arithmetic
    {
        let sg = subgrad::penalty_subgradient(
            1.0,
            &v(&[1.0, 0.0]),
            &DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            &v(&[-2.0]),
        );
        ensure(sg == v(&[0.0, 0.0]), format!("subgradient 1: {sg:?}"));
        let sg = subgrad::penalty_subgradient(
            0.5,
            &v(&[2.0, 2.0]),
            &DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            &v(&[3.0]),
        );
        ensure(sg == v(&[2.0, 2.0]), format!("subgradient 2: {sg:?}"));
    }

    // constant-step contraction on a quadratic with an inert constraint:
    // with L=1, Gamma=1, tau=1 the step is 1/2 and the error halves exactly
    {
        let p = Problem::new(
            "free-quad",
            2,
            1,
            v(&[0.0, 0.0]),
            Box::new(|x: &DVector<f64>| 0.5 * ((x[0] - 3.0).powi(2) + (x[1] + 1.0).powi(2))),
            Box::new(|x: &DVector<f64>| DVector::from_row_slice(&[x[0] - 3.0, x[1] + 1.0])),
            Box::new(|_: &DVector<f64>| DVector::zeros(1)),
            Box::new(|_: &DVector<f64>| DMatrix::zeros(1, 2)),
        );
        let cfg = SubgradConfig {
            tau: 1.0,
            max_iter: 10,
            lipschitz: Some((1.0, 1.0)),
            ..SubgradConfig::default()
        };
        let rec = subgrad::run_subgradient(&p, &cfg).unwrap();
        let expect = 3.0 * 0.5f64.powi(10);
        ensure(
            close(rec.final_x[0] - 3.0, -expect, 1e-15)
                && close(rec.final_x[1] + 1.0, expect / 3.0, 1e-15),
            format!("contraction endpoint {:?}", rec.final_x),
        );
    }

    // tuning records the selected value and reuses it
    {
        let p = suite::by_name("lin-quad").unwrap();
        let base = SubgradConfig {
            max_iter: 300,
            noise: OracleConfig { noise_variance: 1e-4, seed: 0 },
            ..SubgradConfig::default()
        };
        let grid = subgrad::default_tau_grid();
        ensure(grid.len() == 11, format!("grid size {}", grid.len()));
        let outcome = subgrad::tune_tau(&p, &base, &grid, 1e-6).unwrap();
        ensure(
            grid.contains(&outcome.best_tau),
            format!("tuned value {} not on the grid", outcome.best_tau),
        );
        let tuned = SubgradConfig { tau: outcome.best_tau, ..base };
        let rec = subgrad::run_subgradient(&p, &tuned).unwrap();
        ensure(
            rec.meta.tau_fixed == Some(outcome.best_tau),
            "tuned value missing from metadata".into(),
        );
    }

    // shadow trial pieces from the hand KKT solve on lin-quad at the origin
    {
        let p = suite::by_name("lin-quad").unwrap();
        let e = p.evaluate(p.x0()).unwrap();
        let h = DMatrix::<f64>::identity(2, 2);
        let sys = KktSystem::new(&h, &e.jac, &KktOptions::default()).unwrap();
        let s = sys.solve(&e.g, &e.c).unwrap();
        ensure(
            close(s.d[0], 1.0, 1e-12) && close(s.d[1], 1.0, 1e-12) && close(s.y[0], -1.0, 1e-12),
            format!("lin-quad origin solve d={:?} y={:?}", s.d, s.y),
        );
        let gtd = e.g.dot(&s.d);
        let dhd = s.d.dot(&(&h * &s.d));
        let trial = merit::tau_trial(gtd, dhd, e.c.lp_norm(1), 0.5);
        ensure(trial == Trial::Finite(0.5), format!("origin trial {trial:?}"));
    }

    // budget runs at near-zero noise reach feasibility on most seeds
    {
        let p = suite::by_name("lin-quad").unwrap();
        let mut feasible = 0;
        for seed in 0..10u64 {
            let cfg = StochConfig {
                max_iter: 1000,
                noise: OracleConfig { noise_variance: 1e-8, seed },
                ..StochConfig::default()
            };
            let rec = run_stochastic(&p, &cfg).unwrap();
            if let Some(pair) = metrics::extract_errors(&rec.rows, 1e-6) {
                if pair.was_feasible {
                    feasible += 1;
                }
            }
        }
        ensure(feasible >= 9, format!("only {feasible}/10 seeds reached feasibility"));
    }

    // the true-gradient trial logged by budget runs ignores the seed
    {
        let p = suite::by_name("hs6").unwrap();
        let mk = |seed| StochConfig {
            max_iter: 1,
            noise: OracleConfig { noise_variance: 1e-2, seed },
            ..StochConfig::default()
        };
        let a = run_stochastic(&p, &mk(0)).unwrap();
        let b = run_stochastic(&p, &mk(1)).unwrap();
        ensure(
            a.rows[0].tau_trial == b.rows[0].tau_trial,
            "first-row trial differs across seeds".into(),
        );
    }

    // error extraction rule on synthetic logs
    {
        let mk = |feas: &[f64]| -> Vec<IterRow> {
            feas.iter()
                .enumerate()
                .map(|(k, &fe)| IterRow::state_only(k, 0.0, fe, Some(1.0), k + 1))
                .collect()
        };
        let pair = metrics::extract_errors(&mk(&[1.0, 1e-8, 1e-7]), 1e-6).unwrap();
        ensure(
            pair.at_iteration == 2 && pair.was_feasible,
            format!("extraction picks k={}", pair.at_iteration),
        );
        let pair = metrics::extract_errors(&mk(&[3.0, 2.0, 2.0]), 1e-6).unwrap();
        ensure(
            pair.at_iteration == 1 && !pair.was_feasible,
            format!("tie-break picks k={}", pair.at_iteration),
        );
        let pair = metrics::extract_errors(&mk(&[1e-9, 1e-8, 1e-7]), 1e-6).unwrap();
        ensure(pair.at_iteration == 2, "all-feasible picks the last row".into());
    }

    // profile and box-plot hand cases
    {
        let inputs = vec![
            ProfileInput { problem: "p".into(), solver: "s1".into(), value: Some(10.0) },
            ProfileInput { problem: "p".into(), solver: "s2".into(), value: Some(20.0) },
        ];
        let curves = metrics::performance_profile(&inputs, 20.0);
        let value_at = |solver: &str, t: f64| -> f64 {
            let c = curves.iter().find(|c| c.solver == solver).unwrap();
            c.points.iter().filter(|(bt, _)| *bt <= t).map(|(_, r)| *r).next_back().unwrap_or(0.0)
        };
        ensure(value_at("s1", 1.0) == 1.0, "profile s1 at 1".into());
        ensure(value_at("s2", 1.0) == 0.0, "profile s2 at 1".into());
        ensure(value_at("s2", 2.0) == 1.0, "profile s2 at 2".into());

        let b = metrics::boxplot_data(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        ensure(
            b.q1 == 2.0 && b.median == 3.0 && b.q3 == 4.0,
            format!("quartiles ({}, {}, {})", b.q1, b.median, b.q3),
        );
        let b = metrics::boxplot_data(&[1.0, 1.0, 1.0, 1.0, 100.0]).unwrap();
        ensure(b.outlier_count == 1, format!("outliers {}", b.outlier_count));
        let b = metrics::boxplot_data(&[7.0, 7.0, 7.0]).unwrap();
        ensure(
            b.lo == 7.0 && b.q1 == 7.0 && b.median == 7.0 && b.q3 == 7.0 && b.hi == 7.0,
            "degenerate group".into(),
        );
    }

    // quadratics solve in one step and take unit linesearch steps throughout
    {
        let p = suite::by_name("lin-quad").unwrap();
        for policy in [HPolicy::Identity, HPolicy::Hessian] {
            let rec = run_adaptive(&p, &DetConfig::default(), policy).unwrap();
            let dist = rec
                .final_x
                .iter()
                .zip(p.known_solution().unwrap().iter())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            ensure(
                rec.status == RunStatus::Success && dist <= 1e-6,
                format!("lin-quad adaptive {}: {dist:e}", policy.as_str()),
            );
        }
        let rec = run_linesearch(&p, &DetConfig::default(), HPolicy::Identity).unwrap();
        ensure(
            rec.rows.iter().filter_map(|r| r.alpha).all(|a| a == 1.0),
            "linesearch took a non-unit step on the quadratic".into(),
        );
    }

    report(3, "hand-derived oracles", finish(errs));
}

#[test]
fn criterion_4_stepsize_branch_coverage() {
    let mut seen = [false; 3];
    let cfg = DetConfig::default();
    for problem in suite::all() {
        for policy in [HPolicy::Identity, HPolicy::Hessian] {
            if let Ok(rec) = run_adaptive(&problem, &cfg, policy) {
                for row in &rec.rows {
                    match row.branch {
                        Some(Branch::BelowOne) => seen[0] = true,
                        Some(Branch::Unit) => seen[1] = true,
                        Some(Branch::AboveOne) => seen[2] = true,
                        None => {}
                    }
                }
            }
        }
    }
    let mut errs = Vec::new();
    for (hit, name) in seen.iter().zip(["below one", "unit", "above one"]) {
        if !hit {
            errs.push(format!("branch `{name}` never taken across the suite"));
        }
    }
    report(4, "stepsize branch coverage", finish(errs));
}

#[test]
fn criterion_5_zero_noise_merit_match() {
    let mut errs = Vec::new();
    for problem in suite::all() {
        let cfg = StochConfig {
            max_iter: 1000,
            noise: OracleConfig { noise_variance: 0.0, seed: 0 },
            ..StochConfig::default()
        };
        let rec = match run_stochastic(&problem, &cfg) {
            Ok(r) => r,
            Err(e) => {
                errs.push(format!("{}: {e}", problem.name()));
                continue;
            }
        };
        if rec.status != RunStatus::Completed {
            errs.push(format!("{}: status {:?}", problem.name(), rec.status));
            continue;
        }
        // replay the update rule over the true-gradient trials; at zero
        // noise the run's parameter must track it bit for bit
        let mut tau = cfg.tau_init;
        for row in &rec.rows {
            if let Some(trial) = row.tau_trial {
                tau = merit::update_tau(tau, trial, cfg.epsilon);
            }
            if row.tau != Some(tau) {
                errs.push(format!(
                    "{} k={}: tau {:?} vs shadow {tau}",
                    problem.name(),
                    row.k,
                    row.tau
                ));
                break;
            }
        }
    }
    report(5, "zero-noise merit match", finish(errs));
}

#[test]
fn criterion_6_stochastic_step_statistics() {
    let started = Instant::now();
    let mut errs = Vec::new();
    let noise = 1e-2;
    let draws = 20_000usize;

    for name in ["hs7", "hs40"] {
        let p = suite::by_name(name).unwrap();
        let n = p.n();
        let e = p.evaluate(p.x0()).unwrap();
        let h = DMatrix::<f64>::identity(n, n);
        let sys = KktSystem::new(&h, &e.jac, &KktOptions::default()).unwrap();
        let base = sys.solve(&e.g, &e.c).unwrap();
        let c1 = e.c.lp_norm(1);
        let tau = 1.0;
        let dq_det = merit::delta_q(tau, e.g.dot(&base.d), base.d.norm_squared(), c1);

        // reduced curvature: H restricted to null(J) (identity here, so the
        // smallest eigenvalue is 1; computed anyway to honor the formula)
        let z = null_space_basis(&e.jac);
        let zhz = z.transpose() * &h * &z;
        let zeta = zhz.symmetric_eigen().eigenvalues.iter().fold(f64::INFINITY, |a, &b| a.min(b));
        if !(zeta > 0.0) {
            errs.push(format!("{name}: reduced curvature {zeta} not positive"));
            continue;
        }

        let oracle = GradientOracle::new(OracleConfig { noise_variance: noise, seed: 77 });
        let mut sum_d = DVector::<f64>::zeros(n);
        let mut sumsq_d = DVector::<f64>::zeros(n);
        let mut sum_dq = 0.0f64;
        let mut sumsq_dq = 0.0f64;
        for i in 0..draws {
            let gbar = oracle.sample(i as u64, &e.g).gbar;
            let s = sys.solve(&gbar, &e.c).unwrap();
            for j in 0..n {
                sum_d[j] += s.d[j];
                sumsq_d[j] += s.d[j] * s.d[j];
            }
            let dq = merit::delta_q(tau, gbar.dot(&s.d), s.d.norm_squared(), c1);
            sum_dq += dq;
            sumsq_dq += dq * dq;
        }
        let nf = draws as f64;
        for j in 0..n {
            let mean = sum_d[j] / nf;
            let var = (sumsq_d[j] / nf - mean * mean).max(0.0);
            let se = (var / nf).sqrt();
            if (mean - base.d[j]).abs() > 4.0 * se + 1e-12 {
                errs.push(format!(
                    "{name}: mean step coordinate {j} = {mean} vs {} (se {se:e})",
                    base.d[j]
                ));
            }
        }
        let mean_dq = sum_dq / nf;
        let var_dq = (sumsq_dq / nf - mean_dq * mean_dq).max(0.0);
        let se_dq = (var_dq / nf).sqrt();
        let bound = dq_det + tau / zeta * oracle.variance_bound(n);
        if mean_dq > bound + 4.0 * se_dq {
            errs.push(format!(
                "{name}: mean reduction {mean_dq} above bound {bound} (se {se_dq:e})"
            ));
        }
    }

    // oracle moments at 1e5 draws
    {
        let g = DVector::from_row_slice(&[0.3, -1.2, 4.0]);
        let oracle = GradientOracle::new(OracleConfig { noise_variance: noise, seed: 2024 });
        let n_draws = 100_000usize;
        let mut sum = DVector::<f64>::zeros(3);
        let mut sumsq = 0.0f64;
        for i in 0..n_draws {
            let noise_vec = oracle.sample(i as u64, &g).gbar - &g;
            sum += &noise_vec;
            sumsq += noise_vec.norm_squared();
        }
        let se = (noise / n_draws as f64).sqrt();
        for j in 0..3 {
            let mean = sum[j] / n_draws as f64;
            if mean.abs() > 4.0 * se {
                errs.push(format!("oracle mean[{j}] = {mean} (se {se:e})"));
            }
        }
        let sample_var = sumsq / (3 * n_draws) as f64;
        if (sample_var - noise).abs() > 0.1 * noise {
            errs.push(format!("oracle sample variance {sample_var} vs {noise}"));
        }
    }

    budget(started.elapsed(), 30.0, &mut errs);
    report(6, "stochastic step statistics", finish(errs));
}

#[test]
fn criterion_7_merit_trial_frequency() {
    let started = Instant::now();
    let mut errs = Vec::new();
    for problem in suite::all() {
        for noise in [1e-8, 1e-4, 1e-2, 1e-1] {
            for seed in 0..10u64 {
                let cfg = StochConfig {
                    max_iter: 1000,
                    noise: OracleConfig { noise_variance: noise, seed },
                    ..StochConfig::default()
                };
                let tag = format!("{} noise={noise:e} seed={seed}", problem.name());
                let rec = match run_stochastic(&problem, &cfg) {
                    Ok(r) => r,
                    Err(e) => {
                        errs.push(format!("{tag}: {e}"));
                        continue;
                    }
                };
                if rec.status != RunStatus::Completed || rec.rows.len() != 1000 {
                    errs.push(format!(
                        "{tag}: status {:?} with {} rows",
                        rec.status,
                        rec.rows.len()
                    ));
                    continue;
                }
                let window = &rec.rows[900..];
                let mut total = 0usize;
                let mut held = 0usize;
                for row in window {
                    match (row.tau, row.tau_trial) {
                        (Some(tau), Some(Trial::Finite(t))) => {
                            total += 1;
                            if tau <= t {
                                held += 1;
                            }
                        }
                        (Some(_), Some(Trial::Infinite)) => {
                            total += 1;
                            held += 1;
                        }
                        _ => {}
                    }
                }
                if total > 0 && (held as f64) < 0.95 * total as f64 {
                    errs.push(format!("{tag}: trial bound held on {held}/{total}"));
                }
            }
        }
    }
    budget(started.elapsed(), 300.0, &mut errs);
    report(7, "merit trial frequency", finish(errs));
}

#[test]
fn criterion_8_tuned_baseline_comparison() {
    let started = Instant::now();
    let mut errs = Vec::new();
    let grid = subgrad::default_tau_grid();

    for noise in [1e-4, 1e-2] {
        let mut sqp_feas = Vec::new();
        let mut sqp_opt = Vec::new();
        let mut sub_feas = Vec::new();
        let mut sub_opt = Vec::new();
        for problem in suite::all() {
            for seed in 0..10u64 {
                let cfg = StochConfig {
                    max_iter: 1000,
                    noise: OracleConfig { noise_variance: noise, seed },
                    ..StochConfig::default()
                };
                match run_stochastic(&problem, &cfg) {
                    Ok(rec) => match metrics::extract_errors(&rec.rows, 1e-6) {
                        Some(pair) => {
                            sqp_feas.push(pair.feasibility);
                            sqp_opt.push(pair.optimality);
                        }
                        None => errs.push(format!(
                            "{} noise={noise:e} seed={seed}: no rows",
                            problem.name()
                        )),
                    },
                    Err(e) => errs.push(format!("{}: {e}", problem.name())),
                }

                let base = SubgradConfig {
                    max_iter: 10_000,
                    noise: OracleConfig { noise_variance: noise, seed },
                    ..SubgradConfig::default()
                };
                match subgrad::tune_tau(&problem, &base, &grid, 1e-6) {
                    Ok(outcome) => {
                        sub_feas.push(outcome.best.feasibility);
                        sub_opt.push(outcome.best.optimality);
                    }
                    Err(e) => errs.push(format!("{} tuning: {e}", problem.name())),
                }
            }
        }
        if sqp_opt.is_empty() || sub_opt.is_empty() {
            errs.push(format!("noise {noise:e}: missing data"));
            continue;
        }
        let m_sqp_opt = median(&sqp_opt);
        let m_sub_opt = median(&sub_opt);
        if !(m_sqp_opt <= m_sub_opt) {
            errs.push(format!(
                "noise {noise:e}: median optimality {m_sqp_opt:e} vs baseline {m_sub_opt:e}"
            ));
        }
        if noise == 1e-2 {
            let m_sqp_feas = median(&sqp_feas);
            let m_sub_feas = median(&sub_feas);
            if !(m_sqp_feas < m_sub_feas) {
                errs.push(format!(
                    "noise {noise:e}: median feasibility {m_sqp_feas:e} vs baseline {m_sub_feas:e}"
                ));
            }
        }
    }
    budget(started.elapsed(), 600.0, &mut errs);
    report(8, "tuned baseline comparison", finish(errs));
}

#[test]
fn criterion_9_manifest_reproducibility() {
    let mut errs = Vec::new();
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let plan = ExperimentPlan {
        problems: vec!["hs6".into(), "circle-rosen".into()],
        solvers: vec![
            SolverSpec::Adaptive { h: HPolicy::Hessian },
            SolverSpec::Stochastic { max_iter: None },
            SolverSpec::Subgradient { tune: false, tau: Some(0.1), max_iter: None },
        ],
        noise_levels: vec![1e-4],
        seeds: vec![0, 1],
        max_iter: 200,
        success_tol: 1e-6,
        out_dir: dir_a.path().to_string_lossy().into_owned(),
    };
    if let Err(e) = experiment::run_experiment(&plan) {
        errs.push(format!("first run: {e}"));
    }

    // rerun from the manifest, not the original plan
    match ExperimentPlan::load(&dir_a.path().join("manifest.json")) {
        Ok(mut reloaded) => {
            if reloaded != plan {
                errs.push("manifest does not echo the plan".into());
            }
            reloaded.out_dir = dir_b.path().to_string_lossy().into_owned();
            if let Err(e) = experiment::run_experiment(&reloaded) {
                errs.push(format!("manifest rerun: {e}"));
            }
        }
        Err(e) => errs.push(format!("manifest load: {e}")),
    }

    if errs.is_empty() {
        let entries: Vec<_> = std::fs::read_dir(dir_a.path().join("runs"))
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        if entries.is_empty() {
            errs.push("no run logs were written".into());
        }
        for name in entries {
            let a = std::fs::read(dir_a.path().join("runs").join(&name)).unwrap();
            match std::fs::read(dir_b.path().join("runs").join(&name)) {
                Ok(b) => {
                    if a != b {
                        errs.push(format!("{name:?} differs between reruns"));
                    }
                }
                Err(e) => errs.push(format!("{name:?} missing in rerun: {e}")),
            }
        }
    }
    report(9, "manifest reproducibility", finish(errs));
}
