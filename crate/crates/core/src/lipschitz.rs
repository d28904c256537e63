//! Smoothness constant estimates.
//!
//! The adaptive solver maintains running estimates of the objective gradient
//! Lipschitz constant L and one constant per constraint; budget-based runs
//! estimate them once from gradient differences near the starting point and
//! keep them fixed. The sampling recipe is seeded so that two solvers given
//! the same seed share identical estimates.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Result, SolverError};
use crate::oracle::{substream_rng, LIPSCHITZ_STREAM};
use crate::problem::Problem;

/// Floor for adaptively maintained estimates. Repeated halving without
/// re-inflation would otherwise underflow and overflow the stepsize
/// candidate formulas; values this small act exactly like zero in the
/// three-way stepsize selection.
pub const ESTIMATE_FLOOR: f64 = 1e-100;

#[derive(Debug, Clone)]
pub struct LipschitzEstimates {
    /// Objective gradient constant.
    pub l: f64,
    /// One constant per constraint gradient.
    pub gamma: DVector<f64>,
}

impl LipschitzEstimates {
    pub fn uniform(l: f64, gamma: f64, m: usize) -> Self {
        LipschitzEstimates { l, gamma: DVector::from_element(m, gamma) }
    }

    /// Sum of the per-constraint constants.
    pub fn gamma_total(&self) -> f64 {
        self.gamma.sum()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        LipschitzEstimates {
            l: (factor * self.l).max(ESTIMATE_FLOOR),
            gamma: self.gamma.map(|g| (factor * g).max(ESTIMATE_FLOOR)),
        }
    }
}

/// Sample-based estimates near a point: draw `q` points `x + h z` with z
/// uniform on the sphere and take the largest pairwise difference quotient
/// of the gradients, per function.
pub fn estimate_near(
    problem: &Problem,
    x: &DVector<f64>,
    seed: u64,
    q: usize,
    h: f64,
) -> Result<LipschitzEstimates> {
    let n = problem.n();
    let m = problem.m();
    let mut rng = substream_rng(seed, LIPSCHITZ_STREAM);
    let mut points = Vec::with_capacity(q);
    for _ in 0..q {
        let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = z.norm();
        // a zero draw has probability zero; fall back to a coordinate step
        let dir = if norm > 0.0 {
            z / norm
        } else {
            DVector::from_fn(n, |i, _| if i == 0 { 1.0 } else { 0.0 })
        };
        points.push(x + h * dir);
    }

    let grads: Vec<DVector<f64>> =
        points.iter().map(|p| problem.gradient(p)).collect::<Result<_>>()?;
    let jacs: Vec<nalgebra::DMatrix<f64>> =
        points.iter().map(|p| problem.jacobian(p)).collect::<Result<_>>()?;

    let mut l = 0.0f64;
    let mut gamma = DVector::<f64>::zeros(m);
    for a in 0..q {
        for b in a + 1..q {
            let dist = (&points[a] - &points[b]).norm();
            if dist == 0.0 {
                continue;
            }
            l = l.max((&grads[a] - &grads[b]).norm() / dist);
            for i in 0..m {
                let diff = (jacs[a].row(i) - jacs[b].row(i)).norm();
                gamma[i] = gamma[i].max(diff / dist);
            }
        }
    }

    if !l.is_finite() || gamma.iter().any(|g| !g.is_finite()) {
        return Err(SolverError::NonFinite { context: "smoothness estimation".into() });
    }
    Ok(LipschitzEstimates { l, gamma })
}

/// Estimation with the sampling parameters used by the budget-based runs.
pub fn estimate_default(problem: &Problem, seed: u64) -> Result<LipschitzEstimates> {
    estimate_near(problem, problem.x0(), seed, 10, 1e-4)
}
