//! Small dense linear-algebra helpers shared by the solvers.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative tolerance for symmetry checks.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Upper-triangular Cholesky factor `U` with `sigma = Uᵀ U`.
///
/// A pivot is rejected when it falls below `1e-12 · trace(sigma) / n`, which
/// makes the positive-definiteness test invariant to the overall scale.
pub fn cholesky_upper(sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = sigma.nrows();
    if sigma.ncols() != n {
        return Err(Error::dims("cholesky_upper", n, sigma.ncols()));
    }
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    check_symmetric(sigma)?;
    let trace: f64 = sigma.diagonal().iter().sum();
    let tol = 1e-12 * (trace / n as f64).abs();
    let mut u = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = sigma[(j, j)];
        for k in 0..j {
            d -= u[(k, j)] * u[(k, j)];
        }
        if !d.is_finite() || d <= tol {
            return Err(Error::NotPositiveDefinite { pivot: j, value: d });
        }
        let ujj = d.sqrt();
        u[(j, j)] = ujj;
        for i in (j + 1)..n {
            let mut s = sigma[(j, i)];
            for k in 0..j {
                s -= u[(k, j)] * u[(k, i)];
            }
            u[(j, i)] = s / ujj;
        }
    }
    Ok(u)
}

/// Largest absolute asymmetry `|A_ij - A_ji|`.
pub fn asymmetry(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

pub fn check_symmetric(a: &DMatrix<f64>) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::dims("symmetric matrix", a.nrows(), a.ncols()));
    }
    let scale = a.amax().max(1.0);
    let asym = asymmetry(a);
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::NotSymmetric(asym));
    }
    Ok(())
}

/// `(A + Aᵀ) / 2`.
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Smallest eigenvalue of a symmetric matrix (`+inf` for the empty matrix).
pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return f64::INFINITY;
    }
    symmetrize(a)
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// `xᵀ A x`.
pub fn quad_form(a: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    x.dot(&(a * x))
}

/// Infinity norm (max row sum) of a matrix.
pub fn norm_inf(a: &DMatrix<f64>) -> f64 {
    a.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn matrix_from_rows(rows: &[Vec<f64>], ncols: Option<usize>) -> Result<DMatrix<f64>> {
    let m = rows.len();
    let n = match (rows.first(), ncols) {
        (Some(r), _) => r.len(),
        (None, Some(n)) => n,
        (None, None) => 0,
    };
    if let Some(bad) = rows.iter().find(|r| r.len() != n) {
        return Err(Error::dims("matrix row", n, bad.len()));
    }
    Ok(DMatrix::from_fn(m, n, |i, j| rows[i][j]))
}

pub fn matrix_to_rows(a: &DMatrix<f64>) -> Vec<Vec<f64>> {
    a.row_iter().map(|r| r.iter().copied().collect()).collect()
}
