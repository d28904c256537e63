//! Smooth equality-constrained problem definitions.
//!
//! A problem is `min f(x) s.t. c(x) = 0` with n variables and m < n
//! constraints, supplied through callbacks for f, its gradient, c, and the
//! constraint Jacobian. A Lagrangian Hessian callback is optional; solvers
//! that want second order information fall back to the identity when it is
//! absent. Every callback result is dimension-checked at the call site so a
//! misdeclared problem fails loudly instead of corrupting a run.

use std::cell::Cell;

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SolverError};

pub type ObjFn = dyn Fn(&DVector<f64>) -> f64 + Send + Sync;
pub type GradFn = dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync;
pub type ConsFn = dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync;
pub type JacFn = dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync;
/// Hessian of the Lagrangian f(x) + y'c(x) with respect to x.
pub type HessFn = dyn Fn(&DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync;

pub struct Problem {
    name: String,
    n: usize,
    m: usize,
    x0: DVector<f64>,
    known_solution: Option<DVector<f64>>,
    objective: Box<ObjFn>,
    gradient: Box<GradFn>,
    constraints: Box<ConsFn>,
    jacobian: Box<JacFn>,
    lagrangian_hessian: Option<Box<HessFn>>,
}

/// All first-order information at a point.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub f: f64,
    pub g: DVector<f64>,
    pub c: DVector<f64>,
    pub jac: DMatrix<f64>,
}

impl Problem {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        n: usize,
        m: usize,
        x0: DVector<f64>,
        objective: Box<ObjFn>,
        gradient: Box<GradFn>,
        constraints: Box<ConsFn>,
        jacobian: Box<JacFn>,
    ) -> Self {
        assert!(m >= 1 && m < n, "need 1 <= m < n");
        assert_eq!(x0.len(), n, "x0 dimension mismatch");
        Problem {
            name: name.into(),
            n,
            m,
            x0,
            known_solution: None,
            objective,
            gradient,
            constraints,
            jacobian,
            lagrangian_hessian: None,
        }
    }

    pub fn with_hessian(mut self, h: Box<HessFn>) -> Self {
        self.lagrangian_hessian = Some(h);
        self
    }

    pub fn with_known_solution(mut self, xs: DVector<f64>) -> Self {
        assert_eq!(xs.len(), self.n);
        self.known_solution = Some(xs);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn x0(&self) -> &DVector<f64> {
        &self.x0
    }

    pub fn known_solution(&self) -> Option<&DVector<f64>> {
        self.known_solution.as_ref()
    }

    pub fn has_hessian(&self) -> bool {
        self.lagrangian_hessian.is_some()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        (self.objective)(x)
    }

    pub fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let g = (self.gradient)(x);
        self.expect_len("gradient", g.len(), self.n)?;
        Ok(g)
    }

    pub fn constraints(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let c = (self.constraints)(x);
        self.expect_len("constraints", c.len(), self.m)?;
        Ok(c)
    }

    pub fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let jac = (self.jacobian)(x);
        if jac.nrows() != self.m || jac.ncols() != self.n {
            return Err(SolverError::ContractViolation {
                problem: self.name.clone(),
                callback: "jacobian",
                expected: self.m * self.n,
                got: jac.nrows() * jac.ncols(),
            });
        }
        Ok(jac)
    }

    /// Lagrangian Hessian if the problem provides one.
    pub fn lagrangian_hessian(
        &self,
        x: &DVector<f64>,
        y: &DVector<f64>,
    ) -> Result<Option<DMatrix<f64>>> {
        match &self.lagrangian_hessian {
            None => Ok(None),
            Some(cb) => {
                let h = cb(x, y);
                if h.nrows() != self.n || h.ncols() != self.n {
                    return Err(SolverError::ContractViolation {
                        problem: self.name.clone(),
                        callback: "lagrangian_hessian",
                        expected: self.n * self.n,
                        got: h.nrows() * h.ncols(),
                    });
                }
                Ok(Some(h))
            }
        }
    }

    pub fn evaluate(&self, x: &DVector<f64>) -> Result<Evaluation> {
        Ok(Evaluation {
            f: self.objective(x),
            g: self.gradient(x)?,
            c: self.constraints(x)?,
            jac: self.jacobian(x)?,
        })
    }

    fn expect_len(&self, callback: &'static str, got: usize, expected: usize) -> Result<()> {
        if got != expected {
            return Err(SolverError::ContractViolation {
                problem: self.name.clone(),
                callback,
                expected,
                got,
            });
        }
        Ok(())
    }
}

impl std::fmt::Debug for Problem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Problem")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("m", &self.m)
            .finish()
    }
}

/// View over a problem that counts callback invocations; used by runners to
/// report work done, with trial-point evaluations included.
pub struct CountingProblem<'a> {
    inner: &'a Problem,
    objective_evals: Cell<usize>,
    gradient_evals: Cell<usize>,
    constraint_evals: Cell<usize>,
    jacobian_evals: Cell<usize>,
}

impl<'a> CountingProblem<'a> {
    pub fn new(inner: &'a Problem) -> Self {
        CountingProblem {
            inner,
            objective_evals: Cell::new(0),
            gradient_evals: Cell::new(0),
            constraint_evals: Cell::new(0),
            jacobian_evals: Cell::new(0),
        }
    }

    pub fn problem(&self) -> &Problem {
        self.inner
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        self.objective_evals.set(self.objective_evals.get() + 1);
        self.inner.objective(x)
    }

    pub fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.gradient_evals.set(self.gradient_evals.get() + 1);
        self.inner.gradient(x)
    }

    pub fn constraints(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.constraint_evals.set(self.constraint_evals.get() + 1);
        self.inner.constraints(x)
    }

    pub fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.jacobian_evals.set(self.jacobian_evals.get() + 1);
        self.inner.jacobian(x)
    }

    pub fn objective_evals(&self) -> usize {
        self.objective_evals.get()
    }

    pub fn gradient_evals(&self) -> usize {
        self.gradient_evals.get()
    }
}
