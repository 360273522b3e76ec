//! Minimum-regret risk-adjusted portfolios under ellipsoidal mean uncertainty:
//! the tractable inner approximation, a sampling evaluator, and a bracket on
//! the optimal maximum regret.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cones::{
    add_inner_membership, build_inner_generators, homogenize_reduced, lambda_reduce, InnerApproxCertificate,
};
use crate::conic::{affine_exprs, factored_quadratic_to_soc, solve_optimal, ConicProgram, LinExpr, SymAffine};
use crate::error::{Error, Result};
use crate::linalg::{cholesky_upper, quad_form};
use crate::market::FeasibleSet;
use crate::mvo::MvoVariant;
use crate::scenarios::{argmax_lowest, evaluate_regret, rr_risk_adjusted_with, ScenarioOptions};
use crate::serde_util;
use crate::uncertainty::{sample_sphere, EllipsoidalMu, UncertaintySet};

pub const DEFAULT_SAMPLE_COUNT: usize = 1000;

/// The part of the regret-bound matrix that does not depend on `x`, `γ`, or
/// the variance term: `[[0, −½Mᵀ, 0], [−½M, λΣ, −½μ̄], [0, −½μ̄ᵀ, 0]]`.
fn fixed_part(e: &EllipsoidalMu, lambda: f64) -> DMatrix<f64> {
    let (k, n) = (e.k(), e.n());
    let mut m = DMatrix::zeros(k + n + 1, k + n + 1);
    let half_mt = e.shape().transpose() * -0.5;
    m.view_mut((0, k), (k, n)).copy_from(&half_mt);
    m.view_mut((k, 0), (n, k)).copy_from(&half_mt.transpose());
    m.view_mut((k, k), (n, n)).copy_from(&(e.sigma() * lambda));
    let half_mu = e.mu_bar() * -0.5;
    m.view_mut((k, k + n), (n, 1)).copy_from(&half_mu);
    m.view_mut((k + n, k), (1, n)).copy_from(&half_mu.transpose());
    m
}

/// The part linear in `x`: `½Mᵀx` in the `u` column and `μ̄ᵀx` in the corner.
fn linear_part(e: &EllipsoidalMu, x: &DVector<f64>) -> DMatrix<f64> {
    let (k, n) = (e.k(), e.n());
    let mut m = DMatrix::zeros(k + n + 1, k + n + 1);
    let half = e.shape().transpose() * x * 0.5;
    m.view_mut((0, k + n), (k, 1)).copy_from(&half);
    m.view_mut((k + n, 0), (1, k)).copy_from(&half.transpose());
    m[(k + n, k + n)] = e.mu_bar().dot(x);
    m
}

fn corner(dim: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(dim, dim);
    m[(dim - 1, dim - 1)] = 1.0;
    m
}

/// Matrix of `q(u, y) = γ − f_μ(y) + f_μ(x)` at `μ = μ̄ + Mu`, in `(u, y, 1)`.
pub fn build_m_x_gamma(x: &DVector<f64>, gamma: f64, e: &EllipsoidalMu, lambda: f64) -> Result<DMatrix<f64>> {
    if x.len() != e.n() {
        return Err(Error::dims("portfolio", e.n(), x.len()));
    }
    let dim = e.k() + e.n() + 1;
    Ok(fixed_part(e, lambda) + linear_part(e, x) + corner(dim) * (gamma - lambda * quad_form(e.sigma(), x)))
}

/// The reduced regret-bound matrix as an affine function of `(w, γ, s)`,
/// with `s` standing in for `xᵀΣx`.
pub(crate) fn reduced_target(
    e: &EllipsoidalMu,
    x_set: &FeasibleSet,
    lambda: f64,
    w: &std::ops::Range<usize>,
    gamma: usize,
    s: usize,
) -> Result<SymAffine> {
    let k = e.k();
    let reduce = |m: &DMatrix<f64>| lambda_reduce(m, k, x_set);
    let dim = k + e.n() + 1;
    let mut target = SymAffine::constant(reduce(&(fixed_part(e, lambda) + linear_part(e, &x_set.x_p)))?);
    for (l, var) in w.clone().enumerate() {
        let dir = x_set.h.column(l).into_owned();
        target.add_term(var, reduce(&linear_part(e, &dir))?);
    }
    let c = reduce(&corner(dim))?;
    target.add_term(gamma, c.clone());
    target.add_term(s, c * -lambda);
    Ok(target)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrpSolution {
    #[serde(with = "serde_util::vector")]
    pub w: DVector<f64>,
    #[serde(with = "serde_util::vector")]
    pub x: DVector<f64>,
    /// Certified upper bound on the maximum regret of `x`.
    pub gamma: f64,
    /// Epigraph value of `xᵀΣx`.
    pub s: f64,
    pub certificate: InnerApproxCertificate,
    pub solve_seconds: f64,
}

/// Solves the inner approximation: minimizes `γ` over `x = x_p + Hw ∈ X`
/// subject to a certified decomposition of the regret-bound matrix.
pub fn solve_arrp(e: &EllipsoidalMu, x_set: &FeasibleSet, lambda: f64) -> Result<ArrpSolution> {
    MvoVariant::RiskAdjusted(lambda).validate()?;
    if e.n() != x_set.n() {
        return Err(Error::dims("feasible set vs ellipsoid", e.n(), x_set.n()));
    }
    let start = Instant::now();
    let mut cp = ConicProgram::new();
    let w = cp.add_vars(x_set.r());
    let gamma = cp.add_var();
    let s = cp.add_var();
    let gh = &x_set.g_mat * &x_set.h;
    let slack = &x_set.g_vec - &x_set.g_mat * &x_set.x_p;
    for i in 0..x_set.m_g() {
        cp.add_nonneg(LinExpr::dot(w.clone(), gh.row(i).iter().map(|v| -v)).with_constant(slack[i]));
    }
    let u = cholesky_upper(e.sigma())?;
    let x_exprs = affine_exprs(&x_set.x_p, &x_set.h, w.clone());
    cp.push(factored_quadratic_to_soc(&u, &x_exprs, LinExpr::var(s)));

    let target = reduced_target(e, x_set, lambda, &w, gamma, s)?;
    let gens = build_inner_generators(&homogenize_reduced(e.k(), x_set));
    let vars = add_inner_membership(&mut cp, &target, &gens, None);
    cp.minimize(LinExpr::var(gamma));

    let report = solve_optimal(&cp)?;
    let p = &report.primal;
    let wv = DVector::from_column_slice(&p[w]);
    let certificate = vars.certificate(p, &target.eval(p), &gens);
    Ok(ArrpSolution {
        x: x_set.point(&wv),
        w: wv,
        gamma: p[gamma].max(0.0),
        s: p[s],
        certificate,
        solve_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Maximum regret of `x` over `samples` boundary means of the ellipsoid,
/// each hindsight value an exact solve. A lower bound on the true maximum.
pub fn evaluate_max_regret_ellipsoidal(
    x: &DVector<f64>,
    e: &EllipsoidalMu,
    lambda: f64,
    x_set: &FeasibleSet,
    samples: usize,
    seed: u64,
) -> Result<(f64, DVector<f64>)> {
    evaluate_max_regret_sampled(x, e, MvoVariant::RiskAdjusted(lambda), x_set, samples, seed)
}

/// [`evaluate_max_regret_ellipsoidal`] for any model, with the benchmark
/// constrained by the sampled parameters alone.
pub fn evaluate_max_regret_sampled(
    x: &DVector<f64>,
    e: &EllipsoidalMu,
    v: MvoVariant,
    x_set: &FeasibleSet,
    samples: usize,
    seed: u64,
) -> Result<(f64, DVector<f64>)> {
    if samples == 0 {
        return Err(Error::InvalidInput("at least one sample is needed".into()));
    }
    v.validate()?;
    let points = sample_sphere(e.k(), samples, seed);
    let regrets = points
        .par_iter()
        .map(|u| evaluate_regret(x, &e.params_at(u), v, x_set))
        .collect::<Result<Vec<f64>>>()?;
    let i = argmax_lowest(&regrets);
    Ok((regrets[i], e.point(&points[i])))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BracketTimings {
    pub inner_seconds: f64,
    pub outer_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BracketReport {
    pub lower: f64,
    pub upper: f64,
    pub gap: f64,
    pub n: usize,
    pub k: usize,
    pub m_g: usize,
    pub sample_count: usize,
    pub timings: BracketTimings,
    /// Minimizer of the inner approximation.
    #[serde(with = "serde_util::vector")]
    pub x_inner: DVector<f64>,
    /// Minimizer over the sampled relaxation.
    #[serde(with = "serde_util::vector")]
    pub x_outer: DVector<f64>,
}

/// Brackets the optimal maximum regret between the sampled relaxation
/// (lower) and the inner approximation (upper).
pub fn bracket_regret(
    e: &EllipsoidalMu,
    x_set: &FeasibleSet,
    lambda: f64,
    sample_count: usize,
    seed: u64,
) -> Result<BracketReport> {
    check_sample_count(e, sample_count)?;
    let inner = solve_arrp(e, x_set, lambda)?;
    bracket_from(&inner, e, x_set, lambda, sample_count, seed)
}

fn check_sample_count(e: &EllipsoidalMu, sample_count: usize) -> Result<()> {
    if sample_count < e.k() + 1 {
        return Err(Error::InvalidInput(format!(
            "sample count {sample_count} is below k + 1 = {}",
            e.k() + 1
        )));
    }
    Ok(())
}

/// [`bracket_regret`] around an existing inner-approximation solution.
pub fn bracket_from(
    inner: &ArrpSolution,
    e: &EllipsoidalMu,
    x_set: &FeasibleSet,
    lambda: f64,
    sample_count: usize,
    seed: u64,
) -> Result<BracketReport> {
    check_sample_count(e, sample_count)?;
    let start = Instant::now();
    let scenarios = if e.is_degenerate() {
        vec![e.nominal().clone()]
    } else {
        sample_sphere(e.k(), sample_count, seed)
            .iter()
            .map(|u| e.params_at(u))
            .collect()
    };
    let relaxed = UncertaintySet::finite(scenarios)?;
    let opts = ScenarioOptions { hull_samples: 0, seed };
    let outer = rr_risk_adjusted_with(&relaxed, x_set, lambda, &opts)?;
    let lower = outer.bracket.lower;
    Ok(BracketReport {
        lower,
        upper: inner.gamma,
        gap: (inner.gamma - lower).max(0.0),
        n: e.n(),
        k: e.k(),
        m_g: x_set.m_g(),
        sample_count,
        timings: BracketTimings {
            inner_seconds: inner.solve_seconds,
            outer_seconds: start.elapsed().as_secs_f64(),
        },
        x_inner: inner.x.clone(),
        x_outer: outer.x,
    })
}
