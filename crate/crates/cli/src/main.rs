//! Command line front end: single runs, batch experiments, and the derived
//! tables (profiles, box plots, penalty tuning).

use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use eqsqp::det::{run_adaptive, run_linesearch, DetConfig, HPolicy};
use eqsqp::experiment::{self, ExperimentPlan, ProfileMetric, PROFILE_CAP};
use eqsqp::metrics;
use eqsqp::oracle::OracleConfig;
use eqsqp::record::RunRecord;
use eqsqp::stoch::{run_stochastic, StochConfig};
use eqsqp::subgrad::{self, SubgradConfig};
use eqsqp::suite;

#[derive(Parser)]
#[command(name = "eqsqp", version, about = "Equality-constrained SQP solvers and experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SolverArg {
    Adaptive,
    Linesearch,
    Stochastic,
    Subgradient,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PolicyArg {
    Identity,
    Hessian,
}

impl From<PolicyArg> for HPolicy {
    fn from(p: PolicyArg) -> HPolicy {
        match p {
            PolicyArg::Identity => HPolicy::Identity,
            PolicyArg::Hessian => HPolicy::Hessian,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MetricArg {
    Iters,
    Fevals,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    problem: String,
    #[arg(long, value_enum)]
    solver: SolverArg,
    /// Oracle seed for sampled-gradient solvers.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Gradient noise variance for sampled-gradient solvers.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, value_enum, default_value = "identity")]
    h_policy: PolicyArg,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Fixed penalty parameter for the subgradient baseline.
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    /// Directory for the run log; created if needed.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one solver on one problem and print the outcome.
    Solve(SolveArgs),
    /// Execute a JSON experiment plan (or a manifest echoing one).
    Experiment {
        #[arg(long)]
        plan: PathBuf,
    },
    /// Performance-profile curves from a finished experiment directory.
    Profile {
        #[arg(long = "in")]
        in_dir: PathBuf,
        #[arg(long, value_enum, default_value = "iters")]
        metric: MetricArg,
        #[arg(long, default_value_t = PROFILE_CAP)]
        cap: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Box-plot summaries of the extracted errors, one file per error kind.
    Boxplot {
        #[arg(long = "in")]
        in_dir: PathBuf,
        /// Relative feasibility tolerance used by the error extraction.
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Grid-search the baseline penalty parameter on one problem.
    TuneTau {
        #[arg(long)]
        problem: String,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        max_iter: usize,
    },
    /// List the built-in problems.
    Problems,
}

fn run_solve(args: &SolveArgs) -> anyhow::Result<RunRecord> {
    let problem = suite::by_name(&args.problem)?;
    let noise = OracleConfig { noise_variance: args.noise, seed: args.seed };
    let rec = match args.solver {
        SolverArg::Adaptive | SolverArg::Linesearch => {
            if args.noise != 0.0 {
                bail!("deterministic solvers do not take --noise");
            }
            let mut cfg = DetConfig::default();
            if let Some(mi) = args.max_iter {
                cfg.max_iter = mi;
            }
            let policy = HPolicy::from(args.h_policy);
            if args.solver == SolverArg::Adaptive {
                run_adaptive(&problem, &cfg, policy)?
            } else {
                run_linesearch(&problem, &cfg, policy)?
            }
        }
        SolverArg::Stochastic => {
            let mut cfg = StochConfig { noise, ..StochConfig::default() };
            if let Some(mi) = args.max_iter {
                cfg.max_iter = mi;
            }
            run_stochastic(&problem, &cfg)?
        }
        SolverArg::Subgradient => {
            let mut cfg = SubgradConfig { noise, tau: args.tau, ..SubgradConfig::default() };
            if let Some(mi) = args.max_iter {
                cfg.max_iter = mi;
            }
            subgrad::run_subgradient(&problem, &cfg)?
        }
    };
    Ok(rec)
}

fn main() -> anyhow::Result<()> {
    env_logger::init();
    let cli = Cli::parse();
    match &cli.command {
        Command::Solve(args) => {
            let rec = run_solve(args)?;
            let last = rec.rows.last();
            println!(
                "{}: {} after {} iterations, {} evaluations",
                rec.meta.run_id,
                serde_json::to_value(rec.status)?.as_str().unwrap_or("?"),
                last.map(|r| r.k).unwrap_or(0),
                rec.fevals
            );
            if let Some(row) = last {
                println!(
                    "  f = {:.9e}, feasibility = {:.3e}, stationarity = {}",
                    row.f,
                    row.feas,
                    row.stat.map(|s| format!("{s:.3e}")).unwrap_or_else(|| "-".into())
                );
            }
            if let Some(pair) = metrics::extract_errors(&rec.rows, 1e-6) {
                println!(
                    "  errors at k={}: feasibility {:.3e}, optimality {:.3e}{}",
                    pair.at_iteration,
                    pair.feasibility,
                    pair.optimality,
                    if pair.was_feasible { "" } else { " (never feasible)" }
                );
            }
            if let Some(dir) = &args.out {
                std::fs::create_dir_all(dir)
                    .with_context(|| format!("creating {}", dir.display()))?;
                let path = dir.join(format!("{}.jsonl", rec.meta.run_id));
                rec.save(&path)?;
                println!("  log: {}", path.display());
            }
        }
        Command::Experiment { plan } => {
            let plan = ExperimentPlan::load(plan)
                .with_context(|| format!("loading plan {}", plan.display()))?;
            let outcome = experiment::run_experiment(&plan)?;
            println!(
                "{} runs, {} failures -> {}",
                outcome.records.len(),
                outcome.failures.len(),
                outcome.dir.display()
            );
            for (inst, err) in &outcome.failures {
                eprintln!("failed: {inst}: {err}");
            }
        }
        Command::Profile { in_dir, metric, cap, out } => {
            let metric = match metric {
                MetricArg::Iters => ProfileMetric::Iterations,
                MetricArg::Fevals => ProfileMetric::Fevals,
            };
            experiment::profile_dir_to_csv(in_dir, metric, *cap, out)?;
            println!("wrote {}", out.display());
        }
        Command::Boxplot { in_dir, tol, out } => {
            experiment::boxplot_dir_to_csv(in_dir, *tol, out)?;
            println!("wrote {} (feasibility and optimality variants)", out.display());
        }
        Command::TuneTau { problem, noise, seed, max_iter } => {
            let p = suite::by_name(problem)?;
            let base = SubgradConfig {
                max_iter: *max_iter,
                noise: OracleConfig { noise_variance: *noise, seed: *seed },
                ..SubgradConfig::default()
            };
            let grid = subgrad::default_tau_grid();
            let outcome = subgrad::tune_tau(&p, &base, &grid, 1e-6)?;
            println!("tau,feasibility,optimality");
            for (tau, pair) in &outcome.table {
                println!("{tau},{},{}", pair.feasibility, pair.optimality);
            }
            println!("best: tau = {}", outcome.best_tau);
        }
        Command::Problems => {
            for p in suite::all() {
                println!(
                    "{:<12} n={} m={}{}",
                    p.name(),
                    p.n(),
                    p.m(),
                    if p.known_solution().is_some() { "  (catalogued solution)" } else { "" }
                );
            }
        }
    }
    Ok(())
}
