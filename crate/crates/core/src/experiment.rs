//! Batch experiments: a JSON plan expands into a cross product of runs,
//! executed in parallel, persisted one log file per run, with error tables,
//! profile curves and box-plot summaries derived afterwards.
//!
//! Everything written here except `timings.csv` is a pure function of the
//! plan, so rerunning a plan (or the manifest that echoes it) reproduces the
//! artifact directory byte for byte.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::det::{run_adaptive, run_linesearch, DetConfig, HPolicy};
use crate::error::{Result, SolverError};
use crate::metrics::{self, ErrorPair, ProfileInput};
use crate::oracle::OracleConfig;
use crate::record::{RunRecord, RunStatus};
use crate::stoch::{run_stochastic, StochConfig};
use crate::subgrad::{self, SubgradConfig};
use crate::suite;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SolverSpec {
    Adaptive {
        #[serde(default)]
        h: HPolicy,
    },
    Linesearch {
        #[serde(default)]
        h: HPolicy,
    },
    Stochastic {
        #[serde(skip_serializing_if = "Option::is_none", default)]
        max_iter: Option<usize>,
    },
    Subgradient {
        #[serde(default)]
        tune: bool,
        /// Fixed penalty parameter when not tuning.
        #[serde(skip_serializing_if = "Option::is_none", default)]
        tau: Option<f64>,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        max_iter: Option<usize>,
    },
}

impl SolverSpec {
    /// Gradient noise and seeds only matter for sampled-gradient runs.
    pub fn is_deterministic(&self) -> bool {
        matches!(self, SolverSpec::Adaptive { .. } | SolverSpec::Linesearch { .. })
    }

    /// Column label in derived tables, e.g. `adaptive/hessian`.
    pub fn label(&self) -> String {
        match self {
            SolverSpec::Adaptive { h } => format!("adaptive/{}", h.as_str()),
            SolverSpec::Linesearch { h } => format!("linesearch/{}", h.as_str()),
            SolverSpec::Stochastic { .. } => "stochastic/identity".into(),
            SolverSpec::Subgradient { tune: true, .. } => "subgradient-tuned/none".into(),
            SolverSpec::Subgradient { .. } => "subgradient/none".into(),
        }
    }
}

fn default_noise_levels() -> Vec<f64> {
    vec![1e-8, 1e-4, 1e-2, 1e-1]
}

fn default_seeds() -> Vec<u64> {
    (0..10).collect()
}

fn default_max_iter() -> usize {
    1000
}

fn default_success_tol() -> f64 {
    1e-6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    /// Empty selects every catalogued problem.
    #[serde(default)]
    pub problems: Vec<String>,
    pub solvers: Vec<SolverSpec>,
    /// Gradient noise variances; deterministic solvers ignore these.
    #[serde(default = "default_noise_levels")]
    pub noise_levels: Vec<f64>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Iteration budget. Deterministic runs treat this as a limit, budget
    /// runs consume it exactly. Per-solver overrides take precedence.
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// Relative feasibility tolerance for error extraction and profiles.
    #[serde(default = "default_success_tol")]
    pub success_tol: f64,
    pub out_dir: String,
}

impl ExperimentPlan {
    /// Accepts either a bare plan or a manifest that embeds one under
    /// `"plan"`, so a finished experiment can be rerun from its manifest.
    pub fn load(path: &Path) -> Result<ExperimentPlan> {
        let text = std::fs::read_to_string(path)?;
        let value: serde_json::Value = serde_json::from_str(&text)?;
        let plan_value = match value.get("plan") {
            Some(inner) => inner.clone(),
            None => value,
        };
        Ok(serde_json::from_value(plan_value)?)
    }

    fn problem_names(&self) -> Vec<String> {
        if self.problems.is_empty() {
            suite::names()
        } else {
            self.problems.clone()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.solvers.is_empty() {
            return Err(SolverError::InvalidConfig("plan has no solvers".into()));
        }
        if self.out_dir.is_empty() {
            return Err(SolverError::InvalidConfig("plan has no out_dir".into()));
        }
        for name in self.problem_names() {
            suite::by_name(&name)?;
        }
        for spec in &self.solvers {
            if !spec.is_deterministic() {
                if self.noise_levels.is_empty() {
                    return Err(SolverError::InvalidConfig(
                        "sampled-gradient solvers need at least one noise level".into(),
                    ));
                }
                if self.seeds.is_empty() {
                    return Err(SolverError::InvalidConfig(
                        "sampled-gradient solvers need at least one seed".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// One cell of the expanded cross product.
#[derive(Debug, Clone)]
struct Instance {
    problem: String,
    spec: SolverSpec,
    noise: f64,
    seed: u64,
}

impl Instance {
    fn describe(&self) -> String {
        format!("{} {} noise={:e} seed={}", self.problem, self.spec.label(), self.noise, self.seed)
    }
}

/// Deterministic solvers collapse the noise and seed axes: every such cell
/// is the same run with the same run id, so only one is kept.
fn expand(plan: &ExperimentPlan) -> Vec<Instance> {
    let mut out = Vec::new();
    for problem in plan.problem_names() {
        for spec in &plan.solvers {
            if spec.is_deterministic() {
                out.push(Instance {
                    problem: problem.clone(),
                    spec: spec.clone(),
                    noise: 0.0,
                    seed: 0,
                });
            } else {
                for &noise in &plan.noise_levels {
                    for &seed in &plan.seeds {
                        out.push(Instance {
                            problem: problem.clone(),
                            spec: spec.clone(),
                            noise,
                            seed,
                        });
                    }
                }
            }
        }
    }
    out
}

fn run_instance(inst: &Instance, plan: &ExperimentPlan) -> Result<RunRecord> {
    let problem = suite::by_name(&inst.problem)?;
    match &inst.spec {
        SolverSpec::Adaptive { h } => {
            let cfg = DetConfig { max_iter: plan.max_iter, ..DetConfig::default() };
            run_adaptive(&problem, &cfg, *h)
        }
        SolverSpec::Linesearch { h } => {
            let cfg = DetConfig { max_iter: plan.max_iter, ..DetConfig::default() };
            run_linesearch(&problem, &cfg, *h)
        }
        SolverSpec::Stochastic { max_iter } => {
            let cfg = StochConfig {
                max_iter: max_iter.unwrap_or(plan.max_iter),
                noise: OracleConfig { noise_variance: inst.noise, seed: inst.seed },
                ..StochConfig::default()
            };
            run_stochastic(&problem, &cfg)
        }
        SolverSpec::Subgradient { tune, tau, max_iter } => {
            let base = SubgradConfig {
                max_iter: max_iter.unwrap_or(plan.max_iter),
                noise: OracleConfig { noise_variance: inst.noise, seed: inst.seed },
                tau: tau.unwrap_or(1.0),
                ..SubgradConfig::default()
            };
            if *tune {
                let grid = subgrad::default_tau_grid();
                let outcome = subgrad::tune_tau(&problem, &base, &grid, plan.success_tol)?;
                let tuned = SubgradConfig { tau: outcome.best_tau, ..base };
                subgrad::run_subgradient(&problem, &tuned)
            } else {
                subgrad::run_subgradient(&problem, &base)
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub plan: ExperimentPlan,
    /// SHA-256 of the canonical (serialized) plan.
    pub config_hash: String,
    pub crate_version: String,
    pub conventions: Conventions,
    pub run_files: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Conventions {
    pub fevals: String,
    pub quartiles: String,
    pub reproducible: String,
}

impl Default for Conventions {
    fn default() -> Self {
        Conventions {
            fevals: "every objective evaluation is counted, including rejected trial points".into(),
            quartiles: "linear interpolation between order statistics".into(),
            reproducible: "all artifacts except timings.csv are a pure function of the plan".into(),
        }
    }
}

pub fn config_hash(plan: &ExperimentPlan) -> String {
    let canonical = serde_json::to_string(plan).expect("plan serializes");
    let digest = Sha256::digest(canonical.as_bytes());
    let mut hex = String::with_capacity(64);
    for b in digest {
        let _ = write!(hex, "{b:02x}");
    }
    hex
}

pub struct ExperimentOutcome {
    pub dir: PathBuf,
    pub records: Vec<RunRecord>,
    /// (instance description, error message) for runs that did not start.
    pub failures: Vec<(String, String)>,
}

pub fn run_experiment(plan: &ExperimentPlan) -> Result<ExperimentOutcome> {
    plan.validate()?;
    let dir = PathBuf::from(&plan.out_dir);
    let runs_dir = dir.join("runs");
    std::fs::create_dir_all(&runs_dir)?;

    let instances = expand(plan);
    let results: Vec<(Instance, Result<RunRecord>)> = instances
        .into_par_iter()
        .map(|inst| {
            let res = run_instance(&inst, plan);
            (inst, res)
        })
        .collect();

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (inst, res) in results {
        match res {
            Ok(rec) => records.push(rec),
            Err(e) => failures.push((inst.describe(), e.to_string())),
        }
    }

    let mut run_files = Vec::new();
    for rec in &records {
        let file = format!("{}.jsonl", rec.meta.run_id);
        rec.save(&runs_dir.join(&file))?;
        run_files.push(file);
    }

    write_errors_csv(&dir.join("errors.csv"), &records, plan.success_tol)?;
    write_failures_csv(&dir.join("failures.csv"), &failures)?;

    let profile_sources: Vec<&RunRecord> =
        records.iter().filter(|r| solver_terminates(&r.meta.solver)).collect();
    for (metric, file) in [
        (ProfileMetric::Iterations, "profile_iters.csv"),
        (ProfileMetric::Fevals, "profile_fevals.csv"),
    ] {
        let curves = profile_curves(&profile_sources, metric, PROFILE_CAP);
        write_profile_csv(&dir.join(file), &curves)?;
    }

    for (pick, file) in [
        (ErrorKind::Feasibility, "boxplot_feasibility.csv"),
        (ErrorKind::Optimality, "boxplot_optimality.csv"),
    ] {
        let table = boxplot_table(&records, plan.success_tol, pick);
        write_boxplot_csv(&dir.join(file), &table)?;
    }

    write_summary_csv(&dir.join("summary.csv"), &records, plan.success_tol)?;
    write_timings_csv(&dir.join("timings.csv"), &records)?;

    let manifest = Manifest {
        plan: plan.clone(),
        config_hash: config_hash(plan),
        crate_version: env!("CARGO_PKG_VERSION").into(),
        conventions: Conventions::default(),
        run_files,
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    std::fs::write(dir.join("manifest.json"), text)?;

    Ok(ExperimentOutcome { dir, records, failures })
}

pub const PROFILE_CAP: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileMetric {
    Iterations,
    Fevals,
}

impl ProfileMetric {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "iters" => Ok(ProfileMetric::Iterations),
            "fevals" => Ok(ProfileMetric::Fevals),
            other => Err(SolverError::InvalidConfig(format!("unknown metric `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Feasibility,
    Optimality,
}

fn solver_label(rec: &RunRecord) -> String {
    format!("{}/{}", rec.meta.solver, rec.meta.h_policy)
}

/// Budget-based solvers never terminate on tolerances, so they carry no
/// iterations-to-success metric and are excluded from profiles.
fn solver_terminates(solver: &str) -> bool {
    solver == "adaptive" || solver == "linesearch"
}

/// Each (problem, noise, seed) cell is its own profile row so that seeded
/// runs of the same problem count separately.
fn profile_key(rec: &RunRecord) -> String {
    format!("{}__n{:e}__s{}", rec.meta.problem, rec.meta.noise_variance, rec.meta.seed)
}

pub fn profile_curves(
    records: &[&RunRecord],
    metric: ProfileMetric,
    cap: f64,
) -> Vec<metrics::ProfileCurve> {
    let inputs: Vec<ProfileInput> = records
        .iter()
        .map(|rec| {
            let value = if rec.status == RunStatus::Success {
                Some(match metric {
                    ProfileMetric::Iterations => rec.rows.last().map(|r| r.k as f64).unwrap_or(0.0),
                    ProfileMetric::Fevals => rec.fevals as f64,
                })
            } else {
                None
            };
            ProfileInput { problem: profile_key(rec), solver: solver_label(rec), value }
        })
        .collect();
    metrics::performance_profile(&inputs, cap)
}

struct ErrorRow {
    rec_index: usize,
    pair: Option<ErrorPair>,
}

fn error_rows(records: &[RunRecord], tol: f64) -> Vec<ErrorRow> {
    records
        .iter()
        .enumerate()
        .map(|(i, rec)| ErrorRow { rec_index: i, pair: metrics::extract_errors(&rec.rows, tol) })
        .collect()
}

pub struct BoxplotRow {
    pub solver: String,
    pub noise: f64,
    pub n: usize,
    pub stats: metrics::BoxStats,
}

/// Groups error values by (solver, noise) across problems and seeds.
pub fn boxplot_table(records: &[RunRecord], tol: f64, pick: ErrorKind) -> Vec<BoxplotRow> {
    let rows = error_rows(records, tol);
    let mut groups: Vec<(String, f64)> = Vec::new();
    for rec in records {
        let key = (solver_label(rec), rec.meta.noise_variance);
        if !groups.contains(&key) {
            groups.push(key);
        }
    }
    let mut out = Vec::new();
    for (solver, noise) in groups {
        let mut values = Vec::new();
        for row in &rows {
            let rec = &records[row.rec_index];
            if solver_label(rec) == solver && rec.meta.noise_variance == noise {
                if let Some(pair) = &row.pair {
                    let v = match pick {
                        ErrorKind::Feasibility => pair.feasibility,
                        ErrorKind::Optimality => pair.optimality,
                    };
                    values.push(v);
                }
            }
        }
        let n = values.len();
        if let Some(stats) = metrics::boxplot_data(&values) {
            out.push(BoxplotRow { solver: solver.clone(), noise, n, stats });
        }
    }
    out
}

fn write_errors_csv(path: &Path, records: &[RunRecord], tol: f64) -> Result<()> {
    let mut s = String::from(
        "run_id,problem,solver,h_policy,noise,seed,status,iters,fevals,feasibility,optimality,at_iteration,was_feasible\n",
    );
    for rec in records {
        let pair = metrics::extract_errors(&rec.rows, tol);
        let status = serde_json::to_value(rec.status)?;
        let status = status.as_str().unwrap_or("unknown").to_string();
        let iters = rec.rows.last().map(|r| r.k).unwrap_or(0);
        match pair {
            Some(p) => {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                    rec.meta.run_id,
                    rec.meta.problem,
                    rec.meta.solver,
                    rec.meta.h_policy,
                    rec.meta.noise_variance,
                    rec.meta.seed,
                    status,
                    iters,
                    rec.fevals,
                    p.feasibility,
                    p.optimality,
                    p.at_iteration,
                    p.was_feasible
                );
            }
            None => {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{},{},{},,,,",
                    rec.meta.run_id,
                    rec.meta.problem,
                    rec.meta.solver,
                    rec.meta.h_policy,
                    rec.meta.noise_variance,
                    rec.meta.seed,
                    status,
                    iters,
                    rec.fevals
                );
            }
        }
    }
    std::fs::write(path, s)?;
    Ok(())
}

fn write_failures_csv(path: &Path, failures: &[(String, String)]) -> Result<()> {
    let mut s = String::from("instance,error\n");
    for (inst, err) in failures {
        let _ = writeln!(s, "{},{}", inst, err.replace(',', ";"));
    }
    std::fs::write(path, s)?;
    Ok(())
}

fn write_profile_csv(path: &Path, curves: &[metrics::ProfileCurve]) -> Result<()> {
    let mut s = String::from("solver,t,rho\n");
    for curve in curves {
        for (t, rho) in &curve.points {
            let _ = writeln!(s, "{},{},{}", curve.solver, t, rho);
        }
    }
    std::fs::write(path, s)?;
    Ok(())
}

fn write_boxplot_csv(path: &Path, table: &[BoxplotRow]) -> Result<()> {
    let mut s = String::from("solver,noise,n,lo,q1,median,q3,hi,outliers\n");
    for row in table {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            row.solver,
            row.noise,
            row.n,
            row.stats.lo,
            row.stats.q1,
            row.stats.median,
            row.stats.q3,
            row.stats.hi,
            row.stats.outlier_count
        );
    }
    std::fs::write(path, s)?;
    Ok(())
}

fn write_summary_csv(path: &Path, records: &[RunRecord], tol: f64) -> Result<()> {
    let mut groups: Vec<(String, f64)> = Vec::new();
    for rec in records {
        let key = (solver_label(rec), rec.meta.noise_variance);
        if !groups.contains(&key) {
            groups.push(key);
        }
    }
    let mut s = String::from("solver,noise,runs,solved,median_feasibility,median_optimality\n");
    for (solver, noise) in groups {
        let mut feas = Vec::new();
        let mut opt = Vec::new();
        let mut runs = 0usize;
        let mut solved = 0usize;
        for rec in records {
            if solver_label(rec) != solver || rec.meta.noise_variance != noise {
                continue;
            }
            runs += 1;
            if rec.status.is_solved() {
                solved += 1;
            }
            if let Some(p) = metrics::extract_errors(&rec.rows, tol) {
                feas.push(p.feasibility);
                opt.push(p.optimality);
            }
        }
        let med = |v: &[f64]| metrics::boxplot_data(v).map(|b| b.median);
        let fmt = |m: Option<f64>| m.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            solver,
            noise,
            runs,
            solved,
            fmt(med(&feas)),
            fmt(med(&opt))
        );
    }
    std::fs::write(path, s)?;
    Ok(())
}

/// The only artifact that is not reproducible across reruns.
fn write_timings_csv(path: &Path, records: &[RunRecord]) -> Result<()> {
    let mut s = String::from("run_id,wall_time_s\n");
    for rec in records {
        let _ = writeln!(s, "{},{:.6}", rec.meta.run_id, rec.wall_time_s);
    }
    std::fs::write(path, s)?;
    Ok(())
}

/// Reads every run log under `<dir>/runs`.
pub fn load_runs(dir: &Path) -> Result<Vec<RunRecord>> {
    let runs_dir = dir.join("runs");
    let mut names: BTreeSet<String> = BTreeSet::new();
    for entry in std::fs::read_dir(&runs_dir)? {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.ends_with(".jsonl") {
            names.insert(name);
        }
    }
    let mut out = Vec::new();
    for name in names {
        out.push(RunRecord::load(&runs_dir.join(name))?);
    }
    Ok(out)
}

/// Recomputes a profile CSV from a finished artifact directory.
pub fn profile_dir_to_csv(dir: &Path, metric: ProfileMetric, cap: f64, out: &Path) -> Result<()> {
    let records = load_runs(dir)?;
    let sources: Vec<&RunRecord> =
        records.iter().filter(|r| solver_terminates(&r.meta.solver)).collect();
    let curves = profile_curves(&sources, metric, cap);
    write_profile_csv(out, &curves)
}

/// Recomputes both box-plot CSVs from a finished artifact directory; `out`
/// gets a `_feasibility`/`_optimality` suffix before the extension.
pub fn boxplot_dir_to_csv(dir: &Path, tol: f64, out: &Path) -> Result<()> {
    let records = load_runs(dir)?;
    for (pick, tag) in
        [(ErrorKind::Feasibility, "feasibility"), (ErrorKind::Optimality, "optimality")]
    {
        let table = boxplot_table(&records, tol, pick);
        let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("boxplot");
        let ext = out.extension().and_then(|s| s.to_str()).unwrap_or("csv");
        let path = out.with_file_name(format!("{stem}_{tag}.{ext}"));
        write_boxplot_csv(&path, &table)?;
    }
    Ok(())
}
