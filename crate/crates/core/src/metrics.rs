//! Error extraction and aggregate comparison summaries.

use serde::{Deserialize, Serialize};

use crate::record::IterRow;

/// Terminal errors of a run, read off its iterate log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorPair {
    pub feasibility: f64,
    pub optimality: f64,
    /// Row the errors were taken from.
    pub at_iteration: usize,
    /// Whether any row met the feasibility threshold.
    pub was_feasible: bool,
}

/// Pick the row that represents a budget-based run: the last row whose
/// infeasibility is within `tol * max(1, initial infeasibility)`, or, if no
/// row qualifies, the first row attaining the smallest infeasibility. The
/// optimality error is that row's stationarity residual; a row without one
/// counts as unboundedly suboptimal.
pub fn extract_errors(rows: &[IterRow], tol: f64) -> Option<ErrorPair> {
    let first = rows.first()?;
    let threshold = tol * first.feas.max(1.0);
    let pick = rows.iter().rev().find(|r| r.feas <= threshold);
    let (row, was_feasible) = match pick {
        Some(r) => (r, true),
        None => {
            let mut best = first;
            for r in rows {
                if r.feas < best.feas {
                    best = r;
                }
            }
            (best, false)
        }
    };
    Some(ErrorPair {
        feasibility: row.feas,
        optimality: row.stat.unwrap_or(f64::INFINITY),
        at_iteration: row.k,
        was_feasible,
    })
}

/// One solver's cost on one problem; `None` marks a failed run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileInput {
    pub problem: String,
    pub solver: String,
    pub value: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileCurve {
    pub solver: String,
    /// Step function `(threshold, fraction of problems solved within it)`,
    /// including the starting point at threshold 1.
    pub points: Vec<(f64, f64)>,
}

/// Cost-ratio profiles. Every problem appearing in the input counts in the
/// denominator; runs with no finite value get an infinite ratio, as do all
/// runs on problems where every solver failed.
pub fn performance_profile(inputs: &[ProfileInput], cap: f64) -> Vec<ProfileCurve> {
    let mut problems: Vec<&str> = Vec::new();
    let mut solvers: Vec<&str> = Vec::new();
    for i in inputs {
        if !problems.contains(&i.problem.as_str()) {
            problems.push(&i.problem);
        }
        if !solvers.contains(&i.solver.as_str()) {
            solvers.push(&i.solver);
        }
    }

    let value_of = |p: &str, s: &str| -> Option<f64> {
        inputs
            .iter()
            .find(|i| i.problem == p && i.solver == s)
            .and_then(|i| i.value)
            .filter(|v| v.is_finite())
    };

    // ratio table indexed [solver][problem]
    let mut ratios: Vec<Vec<f64>> = vec![Vec::new(); solvers.len()];
    for &p in &problems {
        let best = solvers.iter().filter_map(|&s| value_of(p, s)).fold(f64::INFINITY, f64::min);
        for (si, &s) in solvers.iter().enumerate() {
            let r = match value_of(p, s) {
                Some(v) if best.is_finite() && best > 0.0 => v / best,
                Some(_) | None => f64::INFINITY,
            };
            ratios[si].push(r);
        }
    }

    // breakpoints shared across solvers so curves align
    let mut thresholds: Vec<f64> =
        ratios.iter().flatten().copied().filter(|r| r.is_finite() && *r <= cap).collect();
    thresholds.push(1.0);
    thresholds.push(cap);
    thresholds.sort_by(|a, b| a.partial_cmp(b).unwrap());
    thresholds.dedup();

    let denom = problems.len() as f64;
    solvers
        .iter()
        .enumerate()
        .map(|(si, &s)| {
            let points = thresholds
                .iter()
                .map(|&t| {
                    let hit = ratios[si].iter().filter(|&&r| r <= t).count();
                    (t, hit as f64 / denom)
                })
                .collect();
            ProfileCurve { solver: s.to_string(), points }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    /// Whisker ends: most extreme values within 1.5 IQR of the quartiles.
    pub lo: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub hi: f64,
    pub outlier_count: usize,
}

/// Quantile with linear interpolation between order statistics.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = p * (n - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < n {
        sorted[i] * (1.0 - frac) + sorted[i + 1] * frac
    } else {
        sorted[n - 1]
    }
}

pub fn boxplot_data(values: &[f64]) -> Option<BoxStats> {
    if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q1 = quantile(&sorted, 0.25);
    let median = quantile(&sorted, 0.5);
    let q3 = quantile(&sorted, 0.75);
    let iqr = q3 - q1;
    let fence_lo = q1 - 1.5 * iqr;
    let fence_hi = q3 + 1.5 * iqr;
    let lo = sorted.iter().copied().find(|&v| v >= fence_lo).unwrap();
    let hi = sorted.iter().rev().copied().find(|&v| v <= fence_hi).unwrap();
    let outlier_count = sorted.iter().filter(|&&v| v < fence_lo || v > fence_hi).count();
    Some(BoxStats { lo, q1, median, q3, hi, outlier_count })
}
