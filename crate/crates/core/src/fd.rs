//! Central-difference derivative checks for problem definitions.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::problem::Problem;

/// Per-component step `h_i = eps^(1/3) max(1, |x_i|)`, the usual central
/// difference compromise between truncation and roundoff.
fn step(xi: f64) -> f64 {
    f64::EPSILON.cbrt() * xi.abs().max(1.0)
}

pub fn fd_gradient(p: &Problem, x: &DVector<f64>) -> DVector<f64> {
    let n = x.len();
    DVector::from_fn(n, |i, _| {
        let h = step(x[i]);
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;
        (p.objective(&xp) - p.objective(&xm)) / (2.0 * h)
    })
}

pub fn fd_jacobian(p: &Problem, x: &DVector<f64>) -> Result<DMatrix<f64>> {
    let n = x.len();
    let m = p.m();
    let mut jac = DMatrix::zeros(m, n);
    for i in 0..n {
        let h = step(x[i]);
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;
        let col = (p.constraints(&xp)? - p.constraints(&xm)?) / (2.0 * h);
        jac.set_column(i, &col);
    }
    Ok(jac)
}

/// Worst relative disagreement between analytic and finite-difference
/// derivatives at a point.
#[derive(Debug, Clone, Copy)]
pub struct DerivativeReport {
    pub gradient_error: f64,
    pub jacobian_error: f64,
}

pub fn check_derivatives(p: &Problem, x: &DVector<f64>) -> Result<DerivativeReport> {
    let g = p.gradient(x)?;
    let gfd = fd_gradient(p, x);
    let gradient_error = (&gfd - &g).amax() / g.amax().max(1.0);

    let jac = p.jacobian(x)?;
    let jfd = fd_jacobian(p, x)?;
    let jacobian_error = (&jfd - &jac).amax() / jac.amax().max(1.0);

    Ok(DerivativeReport { gradient_error, jacobian_error })
}
