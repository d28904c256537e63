//! Run records: per-iteration logs, final status, and persistence.
//!
//! A run serializes to line-delimited JSON: one meta line, one line per
//! iteration row, one final line. Wall time is deliberately kept out of the
//! file so rerunning a configuration reproduces it byte for byte.

use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::merit::Trial;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    /// Stationarity and feasibility tolerances met.
    Success,
    /// Fixed iteration budget consumed (budget-based runs).
    Completed,
    IterationLimit,
    LicqFailure,
    NumericalFailure,
    LinesearchFailure,
}

impl RunStatus {
    /// Runs that produced a usable trajectory.
    pub fn is_solved(self) -> bool {
        matches!(self, RunStatus::Success | RunStatus::Completed)
    }
}

/// Which stepsize candidate the three-way rule selected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    BelowOne,
    Unit,
    AboveOne,
}

/// State of iterate k plus the step taken from it. Rows are contiguous in k
/// from 0. A terminal row (success or budget edge) carries state only.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterRow {
    pub k: usize,
    pub f: f64,
    /// ||c||_inf at the iterate.
    pub feas: f64,
    /// ||g + J'y||_inf with the least-squares multiplier and true gradient.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub stat: Option<f64>,
    /// Same residual with the multiplier returned by the step computation.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub stat_step: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub tau: Option<f64>,
    /// Merit parameter trial value computed from the true gradient.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub tau_trial: Option<Trial>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub xi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub branch: Option<Branch>,
    /// Two-norm of the step direction.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub d_norm: Option<f64>,
    /// Hessian shift applied by the inertia correction.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub delta: Option<f64>,
    /// Cumulative objective evaluations after this iteration.
    pub fevals: usize,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub flags: Vec<String>,
}

impl IterRow {
    pub fn state_only(k: usize, f: f64, feas: f64, stat: Option<f64>, fevals: usize) -> Self {
        IterRow {
            k,
            f,
            feas,
            stat,
            stat_step: None,
            tau: None,
            tau_trial: None,
            xi: None,
            beta: None,
            alpha: None,
            branch: None,
            d_norm: None,
            delta: None,
            fevals,
            flags: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMeta {
    pub run_id: String,
    pub problem: String,
    pub solver: String,
    pub h_policy: String,
    pub seed: u64,
    pub noise_variance: f64,
    pub max_iter: usize,
    /// Penalty parameter for the subgradient baseline (after tuning if any).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub tau_fixed: Option<f64>,
    /// Sampled smoothness estimates (L, total Gamma) when the run used them.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub lipschitz: Option<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub meta: RunMeta,
    pub rows: Vec<IterRow>,
    pub status: RunStatus,
    pub fevals: usize,
    pub final_x: Vec<f64>,
    /// Not serialized into the log file; reported in summaries only.
    pub wall_time_s: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum LogLine {
    Meta(RunMeta),
    Row(IterRow),
    Final { status: RunStatus, fevals: usize, final_x: Vec<f64> },
}

impl RunRecord {
    /// Standard identifier: problem, solver, policy, noise, seed.
    pub fn make_run_id(
        problem: &str,
        solver: &str,
        h_policy: &str,
        noise_variance: f64,
        seed: u64,
    ) -> String {
        format!("{problem}__{solver}__{h_policy}__n{noise_variance:e}__s{seed}")
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        serde_json::to_writer(&mut w, &LogLine::Meta(self.meta.clone()))?;
        w.write_all(b"\n")?;
        for row in &self.rows {
            serde_json::to_writer(&mut w, &LogLine::Row(row.clone()))?;
            w.write_all(b"\n")?;
        }
        serde_json::to_writer(
            &mut w,
            &LogLine::Final {
                status: self.status,
                fevals: self.fevals,
                final_x: self.final_x.clone(),
            },
        )?;
        w.write_all(b"\n")?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<RunRecord> {
        let mut meta = None;
        let mut rows = Vec::new();
        let mut tail = None;
        for line in r.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<LogLine>(&line)? {
                LogLine::Meta(m) => meta = Some(m),
                LogLine::Row(row) => rows.push(row),
                LogLine::Final { status, fevals, final_x } => {
                    tail = Some((status, fevals, final_x))
                }
            }
        }
        let meta = meta.ok_or_else(|| {
            crate::error::SolverError::InvalidConfig("log file has no meta line".into())
        })?;
        let (status, fevals, final_x) = tail.ok_or_else(|| {
            crate::error::SolverError::InvalidConfig("log file has no final line".into())
        })?;
        Ok(RunRecord { meta, rows, status, fevals, final_x, wall_time_s: 0.0 })
    }

    pub fn load(path: &Path) -> Result<RunRecord> {
        let f = std::fs::File::open(path)?;
        RunRecord::read_jsonl(std::io::BufReader::new(f))
    }
}

/// Everything known about one accepted iteration, handed to observers.
/// Vectors are borrowed from solver state; `h_eff` includes any inertia
/// correction shift, and `g_used` is the gradient that produced the step
/// (the sampled one in stochastic runs).
pub struct TraceEvent<'a> {
    pub k: usize,
    pub x: &'a DVector<f64>,
    pub f: f64,
    pub c: &'a DVector<f64>,
    pub g_true: &'a DVector<f64>,
    pub g_used: &'a DVector<f64>,
    pub jac: &'a DMatrix<f64>,
    pub h_eff: &'a DMatrix<f64>,
    pub d: &'a DVector<f64>,
    pub y: &'a DVector<f64>,
    pub delta: f64,
    pub tau_prev: f64,
    pub tau_trial: Trial,
    pub tau: f64,
    pub dq: f64,
    pub xi_prev: Option<f64>,
    pub xi_trial: Option<f64>,
    pub xi: Option<f64>,
    pub alpha: f64,
    pub branch: Option<Branch>,
    /// Projection interval for the stepsize, when one applies.
    pub interval: Option<(f64, f64)>,
    pub beta: Option<f64>,
    pub phi_old: f64,
    /// Merit value at the accepted trial point, when the run evaluates it.
    pub phi_new: Option<f64>,
    /// Whether the run enforces the merit decrease condition per step.
    pub enforces_decrease: bool,
}

/// Observer hook for accepted iterations.
pub trait RunSink {
    fn on_iteration(&mut self, _ev: &TraceEvent<'_>) {}
}

/// Sink that ignores everything.
pub struct NullSink;

impl RunSink for NullSink {}
