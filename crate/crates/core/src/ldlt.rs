//! Dense symmetric indefinite factorization with Bunch-Kaufman pivoting.
//!
//! Factors P A P^T = L B L^T where L is unit lower triangular and B is block
//! diagonal with 1x1 and 2x2 blocks. The block structure exposes the inertia
//! of A (counts of positive, negative, and zero eigenvalues) as a byproduct,
//! which is what the saddle-point solver needs to decide whether a Hessian
//! shift is required. Unblocked elimination; intended for the small dense
//! systems this crate works with.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SolverError};

/// Eigenvalue sign counts of a symmetric matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Inertia {
    pub positive: usize,
    pub negative: usize,
    pub zero: usize,
}

/// Bunch-Kaufman factorization of a symmetric matrix.
///
/// Only the lower triangle of the input is referenced. Multipliers are stored
/// in the strict lower triangle of `a`, diagonal blocks on the (sub)diagonal.
#[derive(Debug, Clone)]
pub struct LdltFactor {
    a: DMatrix<f64>,
    /// Pivot record per column. `piv[k] = r >= 0`: 1x1 pivot, rows/cols k and
    /// r interchanged (r == k: none). `piv[k] = piv[k+1] = -r-1`: 2x2 pivot
    /// spanning columns k, k+1 with rows/cols k+1 and r interchanged.
    piv: Vec<isize>,
    singular: bool,
}

// Bunch-Kaufman pivot threshold, minimizes worst-case element growth.
const ALPHA: f64 = 0.6403882032022076; // (1 + sqrt(17)) / 8

impl LdltFactor {
    /// Factor a symmetric matrix given by its lower triangle.
    pub fn factor(mat: &DMatrix<f64>) -> Result<Self> {
        let n = mat.nrows();
        assert_eq!(n, mat.ncols(), "matrix must be square");
        let mut a = mat.clone();
        let mut piv = vec![0isize; n];
        let mut singular = false;

        let mut k = 0usize;
        while k < n {
            let absakk = a[(k, k)].abs();
            // largest off-diagonal magnitude in column k below the diagonal
            let (imax, colmax) = {
                let mut im = k;
                let mut cm = 0.0f64;
                for i in k + 1..n {
                    let v = a[(i, k)].abs();
                    if v > cm {
                        cm = v;
                        im = i;
                    }
                }
                (im, cm)
            };
            if !absakk.is_finite() || !colmax.is_finite() {
                return Err(SolverError::NonFinite {
                    context: format!("factorization input at column {k}"),
                });
            }

            let (kp, kstep);
            if absakk.max(colmax) == 0.0 {
                // whole column is zero: record a zero 1x1 pivot and move on
                piv[k] = k as isize;
                singular = true;
                k += 1;
                continue;
            } else if absakk >= ALPHA * colmax {
                kp = k;
                kstep = 1;
            } else {
                // magnitude profile of row imax in the active submatrix
                let mut rowmax = 0.0f64;
                for j in k..imax {
                    rowmax = rowmax.max(a[(imax, j)].abs());
                }
                for i in imax + 1..n {
                    rowmax = rowmax.max(a[(i, imax)].abs());
                }
                if absakk >= ALPHA * colmax * (colmax / rowmax) {
                    kp = k;
                    kstep = 1;
                } else if a[(imax, imax)].abs() >= ALPHA * rowmax {
                    kp = imax;
                    kstep = 1;
                } else {
                    kp = imax;
                    kstep = 2;
                }
            }

            // interchange rows/columns kk and kp in the trailing submatrix
            let kk = k + kstep - 1;
            if kp != kk {
                for i in kp + 1..n {
                    let t = a[(i, kk)];
                    a[(i, kk)] = a[(i, kp)];
                    a[(i, kp)] = t;
                }
                for i in kk + 1..kp {
                    let t = a[(i, kk)];
                    a[(i, kk)] = a[(kp, i)];
                    a[(kp, i)] = t;
                }
                let t = a[(kk, kk)];
                a[(kk, kk)] = a[(kp, kp)];
                a[(kp, kp)] = t;
                if kstep == 2 {
                    let t = a[(k + 1, k)];
                    a[(k + 1, k)] = a[(kp, k)];
                    a[(kp, k)] = t;
                }
            }

            if kstep == 1 {
                // rank-1 update of the trailing submatrix, then store multipliers
                let d11 = a[(k, k)];
                if d11 == 0.0 {
                    singular = true;
                } else {
                    for j in k + 1..n {
                        let t = a[(j, k)] / d11;
                        for i in j..n {
                            a[(i, j)] -= a[(i, k)] * t;
                        }
                    }
                    for i in k + 1..n {
                        a[(i, k)] /= d11;
                    }
                }
                piv[k] = kp as isize;
                k += 1;
            } else {
                // rank-2 update using the inverse of the 2x2 pivot block
                if k + 2 < n {
                    let d21 = a[(k + 1, k)];
                    let d11 = a[(k + 1, k + 1)] / d21;
                    let d22 = a[(k, k)] / d21;
                    let t = 1.0 / (d11 * d22 - 1.0);
                    let scale = t / d21;
                    for j in k + 2..n {
                        let wk = scale * (d11 * a[(j, k)] - a[(j, k + 1)]);
                        let wkp1 = scale * (d22 * a[(j, k + 1)] - a[(j, k)]);
                        for i in j..n {
                            a[(i, j)] -= a[(i, k)] * wk + a[(i, k + 1)] * wkp1;
                        }
                        a[(j, k)] = wk;
                        a[(j, k + 1)] = wkp1;
                    }
                }
                piv[k] = -(kp as isize) - 1;
                piv[k + 1] = piv[k];
                k += 2;
            }
        }

        Ok(LdltFactor { a, piv, singular })
    }

    pub fn is_singular(&self) -> bool {
        self.singular
    }

    /// Eigenvalue sign counts, read off the diagonal blocks.
    pub fn inertia(&self) -> Inertia {
        let n = self.piv.len();
        let mut out = Inertia { positive: 0, negative: 0, zero: 0 };
        let mut k = 0usize;
        while k < n {
            if self.piv[k] >= 0 {
                let d = self.a[(k, k)];
                if d > 0.0 {
                    out.positive += 1;
                } else if d < 0.0 {
                    out.negative += 1;
                } else {
                    out.zero += 1;
                }
                k += 1;
            } else {
                let d11 = self.a[(k, k)];
                let d22 = self.a[(k + 1, k + 1)];
                let d21 = self.a[(k + 1, k)];
                let det = d11 * d22 - d21 * d21;
                if det < 0.0 {
                    out.positive += 1;
                    out.negative += 1;
                } else if det > 0.0 {
                    // both eigenvalues share the sign of the diagonal
                    if d11 > 0.0 {
                        out.positive += 2;
                    } else {
                        out.negative += 2;
                    }
                } else {
                    let tr = d11 + d22;
                    if tr > 0.0 {
                        out.positive += 1;
                        out.zero += 1;
                    } else if tr < 0.0 {
                        out.negative += 1;
                        out.zero += 1;
                    } else {
                        out.zero += 2;
                    }
                }
                k += 2;
            }
        }
        out
    }

    /// Solve A x = b using the stored factorization.
    pub fn solve(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        let mut x = b.clone();
        self.solve_in_place(&mut x)?;
        Ok(x)
    }

    pub fn solve_in_place(&self, b: &mut DVector<f64>) -> Result<()> {
        let n = self.piv.len();
        assert_eq!(b.len(), n, "rhs dimension mismatch");
        let a = &self.a;

        // forward sweep: apply interchanges and unit lower triangular solves
        // in elimination order
        let mut k = 0usize;
        while k < n {
            if self.piv[k] >= 0 {
                let kp = self.piv[k] as usize;
                if kp != k {
                    b.swap_rows(k, kp);
                }
                for i in k + 1..n {
                    b[i] -= a[(i, k)] * b[k];
                }
                k += 1;
            } else {
                let kp = (-self.piv[k] - 1) as usize;
                if kp != k + 1 {
                    b.swap_rows(k + 1, kp);
                }
                for i in k + 2..n {
                    b[i] -= a[(i, k)] * b[k] + a[(i, k + 1)] * b[k + 1];
                }
                k += 2;
            }
        }

        // block diagonal solve
        k = 0;
        while k < n {
            if self.piv[k] >= 0 {
                let d = a[(k, k)];
                if d == 0.0 {
                    return Err(SolverError::SingularPivot { step: k });
                }
                b[k] /= d;
                k += 1;
            } else {
                let d11 = a[(k, k)];
                let d22 = a[(k + 1, k + 1)];
                let d21 = a[(k + 1, k)];
                let det = d11 * d22 - d21 * d21;
                if det == 0.0 {
                    return Err(SolverError::SingularPivot { step: k });
                }
                let (b1, b2) = (b[k], b[k + 1]);
                b[k] = (d22 * b1 - d21 * b2) / det;
                b[k + 1] = (d11 * b2 - d21 * b1) / det;
                k += 2;
            }
        }

        // backward sweep: transposed solves and interchanges in reverse order
        let mut starts = Vec::with_capacity(n);
        k = 0;
        while k < n {
            starts.push(k);
            k += if self.piv[k] >= 0 { 1 } else { 2 };
        }
        for &s in starts.iter().rev() {
            if self.piv[s] >= 0 {
                let mut acc = b[s];
                for i in s + 1..n {
                    acc -= a[(i, s)] * b[i];
                }
                b[s] = acc;
                let kp = self.piv[s] as usize;
                if kp != s {
                    b.swap_rows(s, kp);
                }
            } else {
                let (mut acc0, mut acc1) = (b[s], b[s + 1]);
                for i in s + 2..n {
                    acc0 -= a[(i, s)] * b[i];
                    acc1 -= a[(i, s + 1)] * b[i];
                }
                b[s] = acc0;
                b[s + 1] = acc1;
                let kp = (-self.piv[s] - 1) as usize;
                if kp != s + 1 {
                    b.swap_rows(s + 1, kp);
                }
            }
        }
        Ok(())
    }
}
