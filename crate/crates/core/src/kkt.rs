//! Equality-constrained Newton (KKT) systems.
//!
//! The primal-dual step at an iterate x solves
//!
//! ```text
//!   [ H + dI  J^T ] [ d ]    [ g ]
//!   [ J        0  ] [ y ] = -[ c ]
//! ```
//!
//! where J must have full row rank and the shift d >= 0 is chosen so the
//! matrix has inertia (n, m, 0), equivalently so the Hessian is positive
//! definite on the null space of J. The shift is found by walking a
//! geometric ladder and checking the inertia reported by the symmetric
//! indefinite factorization.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SolverError};
use crate::ldlt::{Inertia, LdltFactor};

/// Tuning knobs for the KKT solve.
#[derive(Debug, Clone)]
pub struct KktOptions {
    /// First nonzero shift is `delta0_scale * max(1, ||H||_inf)`.
    pub delta0_scale: f64,
    /// Multiplier between consecutive ladder shifts.
    pub delta_growth: f64,
    /// Give up once the shift exceeds this.
    pub delta_max: f64,
    /// J is rank deficient when its smallest singular value falls below
    /// `rank_tol * max(1, ||J||_2)`.
    pub rank_tol: f64,
    /// Backward error threshold that triggers one refinement pass.
    pub residual_tol: f64,
}

impl Default for KktOptions {
    fn default() -> Self {
        KktOptions {
            delta0_scale: 1e-8,
            delta_growth: 10.0,
            delta_max: 1e8,
            rank_tol: 1e-10,
            residual_tol: 1e-8,
        }
    }
}

/// Primal-dual step produced by a KKT solve.
#[derive(Debug, Clone)]
pub struct KktSolution {
    pub d: DVector<f64>,
    pub y: DVector<f64>,
    /// Diagonal shift that was required (0 when the Hessian was already
    /// positive definite on the constraint null space).
    pub delta: f64,
    /// Backward error of the returned solution, infinity norm.
    pub residual_norm: f64,
}

/// Factored KKT matrix at a fixed (H, J) pair, reusable across right-hand
/// sides. Stochastic runs solve two systems per iterate that differ only in
/// the gradient, so the factorization is worth keeping.
pub struct KktSystem {
    factor: LdltFactor,
    kmat: DMatrix<f64>,
    n: usize,
    m: usize,
    delta: f64,
    residual_tol: f64,
}

impl KktSystem {
    pub fn new(h: &DMatrix<f64>, j: &DMatrix<f64>, opts: &KktOptions) -> Result<Self> {
        let n = h.nrows();
        let m = j.nrows();
        assert_eq!(h.ncols(), n, "H must be square");
        assert_eq!(j.ncols(), n, "J must have n columns");
        assert!(m < n, "need fewer constraints than variables");

        check_full_row_rank(j, opts.rank_tol)?;

        let h_norm = inf_norm(h);
        let delta0 = opts.delta0_scale * h_norm.max(1.0);
        let target = Inertia { positive: n, negative: m, zero: 0 };

        let mut delta = 0.0f64;
        loop {
            let kmat = assemble(h, j, delta);
            let factor = LdltFactor::factor(&kmat)?;
            if !factor.is_singular() && factor.inertia() == target {
                return Ok(KktSystem {
                    factor,
                    kmat,
                    n,
                    m,
                    delta,
                    residual_tol: opts.residual_tol,
                });
            }
            delta = if delta == 0.0 { delta0 } else { delta * opts.delta_growth };
            if delta > opts.delta_max {
                return Err(SolverError::InertiaCorrectionFailed { delta_max: opts.delta_max });
            }
        }
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Solve for the step at right-hand side -(g, c).
    pub fn solve(&self, g: &DVector<f64>, c: &DVector<f64>) -> Result<KktSolution> {
        assert_eq!(g.len(), self.n);
        assert_eq!(c.len(), self.m);
        let dim = self.n + self.m;
        let mut rhs = DVector::zeros(dim);
        for i in 0..self.n {
            rhs[i] = -g[i];
        }
        for i in 0..self.m {
            rhs[self.n + i] = -c[i];
        }

        let mut x = self.factor.solve(&rhs)?;
        let scale = g.amax().max(c.amax()).max(1.0);
        let mut resid = &rhs - &self.kmat * &x;
        if resid.amax() > self.residual_tol * scale {
            // one refinement pass; small systems rarely need more
            let corr = self.factor.solve(&resid)?;
            x += corr;
            resid = &rhs - &self.kmat * &x;
        }

        let d = DVector::from_fn(self.n, |i, _| x[i]);
        let y = DVector::from_fn(self.m, |i, _| x[self.n + i]);
        Ok(KktSolution { d, y, delta: self.delta, residual_norm: resid.amax() })
    }
}

/// One-shot KKT solve with inertia correction.
pub fn solve_kkt(
    h: &DMatrix<f64>,
    j: &DMatrix<f64>,
    g: &DVector<f64>,
    c: &DVector<f64>,
    opts: &KktOptions,
) -> Result<KktSolution> {
    KktSystem::new(h, j, opts)?.solve(g, c)
}

/// Step split into normal and tangential parts, with a null space basis.
#[derive(Debug, Clone)]
pub struct Decomposition {
    /// Tangential component, lies in the null space of J.
    pub u: DVector<f64>,
    /// Normal component, `v = -J^T (J J^T)^{-1} c`.
    pub v: DVector<f64>,
    /// Orthonormal basis of the null space of J, n x (n - m).
    pub z: DMatrix<f64>,
}

/// Split `d = u + v` orthogonally against the constraint Jacobian.
pub fn decompose(d: &DVector<f64>, j: &DMatrix<f64>, c: &DVector<f64>) -> Result<Decomposition> {
    let v = normal_component(j, c)?;
    let u = d - &v;
    let z = null_space_basis(j);
    Ok(Decomposition { u, v, z })
}

/// `v = -J^T (J J^T)^{-1} c`, the minimum-norm step onto the linearized
/// constraint set.
pub fn normal_component(j: &DMatrix<f64>, c: &DVector<f64>) -> Result<DVector<f64>> {
    let jjt = j * j.transpose();
    let chol = nalgebra::Cholesky::new(jjt)
        .ok_or(SolverError::LicqFailure { sigma_min: 0.0, threshold: 0.0 })?;
    let w = chol.solve(c);
    Ok(-(j.transpose() * w))
}

/// Orthonormal basis of the null space of J, computed from a full
/// orthogonal decomposition of J^T.
pub fn null_space_basis(j: &DMatrix<f64>) -> DMatrix<f64> {
    let n = j.ncols();
    let m = j.nrows();
    // QR of J^T padded to square yields a full Q; trailing columns span the
    // orthogonal complement of range(J^T) = null(J)
    let mut padded = DMatrix::zeros(n, n);
    padded.view_mut((0, 0), (n, m)).copy_from(&j.transpose());
    let q = padded.qr().q();
    q.columns(m, n - m).into_owned()
}

/// Multiplier minimizing `||g + J^T y||_2`, from the normal equations.
pub fn least_squares_multiplier(g: &DVector<f64>, j: &DMatrix<f64>) -> Result<DVector<f64>> {
    let jjt = j * j.transpose();
    let chol = nalgebra::Cholesky::new(jjt)
        .ok_or(SolverError::LicqFailure { sigma_min: 0.0, threshold: 0.0 })?;
    Ok(chol.solve(&(-(j * g))))
}

/// Infinity norms of the stationarity and feasibility residuals.
pub fn stationarity_residual(
    g: &DVector<f64>,
    j: &DMatrix<f64>,
    y: &DVector<f64>,
    c: &DVector<f64>,
) -> (f64, f64) {
    let stat = (g + j.transpose() * y).amax();
    let feas = if c.is_empty() { 0.0 } else { c.amax() };
    (stat, feas)
}

fn check_full_row_rank(j: &DMatrix<f64>, rank_tol: f64) -> Result<()> {
    let sv = j.clone().singular_values();
    let smax = sv.iter().fold(0.0f64, |a, &b| a.max(b));
    let smin = sv.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    let threshold = rank_tol * smax.max(1.0);
    if !(smin > threshold) {
        return Err(SolverError::LicqFailure { sigma_min: smin, threshold });
    }
    Ok(())
}

fn assemble(h: &DMatrix<f64>, j: &DMatrix<f64>, delta: f64) -> DMatrix<f64> {
    let n = h.nrows();
    let m = j.nrows();
    let dim = n + m;
    let mut k = DMatrix::zeros(dim, dim);
    k.view_mut((0, 0), (n, n)).copy_from(h);
    for i in 0..n {
        k[(i, i)] += delta;
    }
    k.view_mut((n, 0), (m, n)).copy_from(j);
    k.view_mut((0, n), (n, m)).copy_from(&j.transpose());
    k
}

fn inf_norm(m: &DMatrix<f64>) -> f64 {
    let mut best = 0.0f64;
    for i in 0..m.nrows() {
        let mut row = 0.0;
        for j in 0..m.ncols() {
            row += m[(i, j)].abs();
        }
        best = best.max(row);
    }
    best
}
