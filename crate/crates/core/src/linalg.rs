//! Small dense linear-algebra helpers for the low-dimensional parameter space.
//!
//! Parameter and data dimensions here are tiny (tens at most), so a plain
//! Cholesky factorization is all we need; pulling in a LAPACK binding would be
//! overkill and would hurt reproducibility across environments.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

/// Lower-triangular Cholesky factor `L` with `L L^T = a`.
///
/// Fails with [`Error::NotPositiveDefinite`] when a pivot is not strictly
/// positive. `context` names the caller in the error message.
pub fn cholesky(a: ArrayView2<f64>, context: &str) -> Result<Array2<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch {
            context: format!("cholesky ({context})"),
            expected: n,
            got: a.ncols(),
        });
    }
    let mut l = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return Err(Error::NotPositiveDefinite {
                        context: context.to_string(),
                    });
                }
                l[[i, i]] = s.sqrt();
            } else {
                l[[i, j]] = s / l[[j, j]];
            }
        }
    }
    Ok(l)
}

/// Solve `a x = b` for symmetric positive definite `a` via Cholesky.
pub fn solve_spd(a: ArrayView2<f64>, b: ArrayView1<f64>, context: &str) -> Result<Array1<f64>> {
    let l = cholesky(a, context)?;
    Ok(cholesky_solve(&l, b))
}

/// Solve `L L^T x = b` given the lower factor `L`.
pub fn cholesky_solve(l: &Array2<f64>, b: ArrayView1<f64>) -> Array1<f64> {
    let n = l.nrows();
    // forward substitution: L y = b
    let mut y = Array1::<f64>::zeros(n);
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[[i, k]] * y[k];
        }
        y[i] = s / l[[i, i]];
    }
    // back substitution: L^T x = y
    let mut x = Array1::<f64>::zeros(n);
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[[k, i]] * x[k];
        }
        x[i] = s / l[[i, i]];
    }
    x
}

/// Inverse of a symmetric positive definite matrix via Cholesky.
///
/// The result is symmetrized exactly (both triangles share the same stored
/// values) so downstream bitwise-symmetry checks hold.
pub fn spd_inverse(a: ArrayView2<f64>, context: &str) -> Result<Array2<f64>> {
    let n = a.nrows();
    let l = cholesky(a, context)?;
    let mut inv = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut e = Array1::<f64>::zeros(n);
        e[j] = 1.0;
        let col = cholesky_solve(&l, e.view());
        inv.column_mut(j).assign(&col);
    }
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (inv[[i, j]] + inv[[j, i]]);
            inv[[i, j]] = v;
            inv[[j, i]] = v;
        }
    }
    Ok(inv)
}

/// Log-determinant of a symmetric positive definite matrix.
pub fn spd_log_det(a: ArrayView2<f64>, context: &str) -> Result<f64> {
    let l = cholesky(a, context)?;
    let mut s = 0.0;
    for i in 0..l.nrows() {
        s += l[[i, i]].ln();
    }
    Ok(2.0 * s)
}
