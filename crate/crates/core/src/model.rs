//! Shared pieces for assembling portfolio programs on the conic IR.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use crate::conic::{factored_quadratic_to_soc, mat_apply, ConicProgram, LinExpr, SolveReport};
use crate::market::FeasibleSet;

pub(crate) fn var_exprs(range: &Range<usize>) -> Vec<LinExpr> {
    range.clone().map(LinExpr::var).collect()
}

/// `vᵀ x[range]`.
pub(crate) fn dot(range: &Range<usize>, v: &DVector<f64>) -> LinExpr {
    LinExpr::dot(range.clone(), v.iter().copied())
}

/// Adds `x ∈ X` and returns the variable range of `x`.
pub(crate) fn add_portfolio(cp: &mut ConicProgram, x_set: &FeasibleSet) -> Range<usize> {
    let x = cp.add_vars(x_set.n());
    for i in 0..x_set.m_f() {
        cp.add_eq(dot(&x, &x_set.f_mat.row(i).transpose()).with_constant(-x_set.f_vec[i]));
    }
    for i in 0..x_set.m_g() {
        cp.add_nonneg(dot(&x, &(-x_set.g_mat.row(i).transpose())).with_constant(x_set.g_vec[i]));
    }
    x
}

/// Adds `(y, t)` with `F y = f t`, `G y ≤ g t`, `t ≥ 0`, the closed cone over `X`.
pub(crate) fn add_homogenized(cp: &mut ConicProgram, x_set: &FeasibleSet) -> (Range<usize>, usize) {
    let y = cp.add_vars(x_set.n());
    let t = cp.add_var();
    for i in 0..x_set.m_f() {
        cp.add_eq(dot(&y, &x_set.f_mat.row(i).transpose()).with_term(t, -x_set.f_vec[i]));
    }
    for i in 0..x_set.m_g() {
        cp.add_nonneg(dot(&y, &(-x_set.g_mat.row(i).transpose())).with_term(t, x_set.g_vec[i]));
    }
    cp.add_nonneg(LinExpr::var(t));
    (y, t)
}

/// Adds `s ≥ xᵀΣx` for `Σ = uᵀu` and returns `s`.
pub(crate) fn add_variance_epigraph(cp: &mut ConicProgram, u: &DMatrix<f64>, x: &Range<usize>) -> usize {
    let s = cp.add_var();
    cp.push(factored_quadratic_to_soc(u, &var_exprs(x), LinExpr::var(s)));
    s
}

/// Adds `‖u x‖ ≤ radius`.
pub(crate) fn add_norm_cap(cp: &mut ConicProgram, u: &DMatrix<f64>, x: &Range<usize>, radius: f64) {
    cp.add_soc(LinExpr::constant(radius), mat_apply(u, &var_exprs(x)));
}

pub(crate) fn extract(report: &SolveReport, range: &Range<usize>) -> DVector<f64> {
    DVector::from_column_slice(&report.primal[range.clone()])
}

/// Distinct covariance matrices, in first-appearance order, with the index map.
pub(crate) fn distinct_sigmas<'a>(
    sigmas: impl Iterator<Item = &'a DMatrix<f64>>,
) -> (Vec<&'a DMatrix<f64>>, Vec<usize>) {
    let mut distinct: Vec<&DMatrix<f64>> = Vec::new();
    let mut index = Vec::new();
    for s in sigmas {
        match distinct.iter().position(|d| *d == s) {
            Some(i) => index.push(i),
            None => {
                index.push(distinct.len());
                distinct.push(s);
            }
        }
    }
    (distinct, index)
}

/// Epigraph variables `s_j ≥ xᵀΣ_j x`, one per distinct covariance.
pub(crate) fn add_variance_epigraphs(cp: &mut ConicProgram, sigmas: &[&DMatrix<f64>], x: &Range<usize>) -> Vec<usize> {
    sigmas
        .iter()
        .map(|s| {
            let u = crate::linalg::cholesky_upper(s).expect("covariances are validated");
            add_variance_epigraph(cp, &u, x)
        })
        .collect()
}
