//! Minimum-regret portfolios over finite and polytopic uncertainty sets, and
//! the regret oracles shared by every solver.

use std::time::Instant;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conic::{solve_optimal, ConicProgram, LinExpr};
use crate::error::{Error, Result};
use crate::linalg::{cholesky_upper, quad_form};
use crate::market::{FeasibleSet, MarketParams};
use crate::model::{
    add_homogenized, add_norm_cap, add_portfolio, add_variance_epigraphs, distinct_sigmas, dot, extract,
};
use crate::mvo::{sharpe_lift, solve_variant, value_function, MvoVariant, SHARPE_POSITIVITY_TOL};
use crate::serde_util;
use crate::uncertainty::UncertaintySet;

/// Scenario regrets closer than this count as ties.
pub const WITNESS_TIE_TOL: f64 = 1e-12;

/// Value-function magnitude below which scaled regret is undefined.
pub const SCALED_REGRET_FLOOR: f64 = 1e-12;

/// Which portfolios the hindsight benchmark may choose from in the
/// constrained models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Adversary {
    /// The benchmark knows the realized parameters and only has to satisfy
    /// the constraint under them.
    #[default]
    Omniscient,
    /// The benchmark must satisfy the constraint robustly, like the decision maker.
    Fortuitous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Witness {
    /// Index into the scenario or vertex list.
    Scenario(usize),
    /// An explicit mean vector (ellipsoid boundary or sampled hull point).
    Point(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bracket {
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub inner_seconds: f64,
    pub outer_seconds: f64,
    pub certify_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretCertificate {
    #[serde(with = "serde_util::vector")]
    pub x: DVector<f64>,
    /// Certified bound on the maximum regret of `x`.
    pub gamma: f64,
    pub witness: Witness,
    /// Bounds on the optimal maximum regret over the set.
    pub bracket: Bracket,
    /// Regret of `x` at each scenario or vertex.
    pub scenario_regrets: Vec<f64>,
    /// Hindsight optimal value at each scenario or vertex.
    pub hindsight_values: Vec<f64>,
    pub timings: Timings,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScenarioOptions {
    /// Sampled hull points used to confirm the upper bound on polytopic sets
    /// where vertex enumeration is not exact.
    pub hull_samples: usize,
    pub seed: u64,
}

impl Default for ScenarioOptions {
    fn default() -> Self {
        Self {
            hull_samples: 500,
            seed: 0,
        }
    }
}

/// Regret of `x` given the hindsight value `z` at `p`.
fn regret_from(z: f64, p: &MarketParams, v: MvoVariant, x: &DVector<f64>) -> f64 {
    let f = v.objective(p, x);
    if v.is_minimization() {
        f - z
    } else {
        z - f
    }
}

/// Hindsight value at `p`, with the constraint set of the chosen adversary.
fn hindsight_value(
    p: &MarketParams,
    all: &[MarketParams],
    v: MvoVariant,
    x_set: &FeasibleSet,
    adversary: Adversary,
) -> Result<f64> {
    match (v, adversary) {
        (MvoVariant::MinVariance(rho), Adversary::Fortuitous) if rho > f64::NEG_INFINITY => {
            let mut cp = ConicProgram::new();
            let y = add_portfolio(&mut cp, x_set);
            cp.add_quadratic_objective(&y, p.sigma());
            for q in all {
                cp.add_nonneg(dot(&y, q.mu()).with_constant(-rho));
            }
            let yv = extract(&solve_optimal(&cp)?, &y);
            Ok(quad_form(p.sigma(), &yv))
        }
        (MvoVariant::MaxReturn(sigma2), Adversary::Fortuitous) => {
            let mut cp = ConicProgram::new();
            let y = add_portfolio(&mut cp, x_set);
            let (distinct, _) = distinct_sigmas(all.iter().map(|q| q.sigma()));
            for s in distinct {
                add_norm_cap(&mut cp, &cholesky_upper(s)?, &y, sigma2.sqrt());
            }
            cp.minimize(dot(&y, &-p.mu()));
            let yv = extract(&solve_optimal(&cp)?, &y);
            Ok(p.mu().dot(&yv))
        }
        _ => value_function(p, x_set, v),
    }
}

fn hindsight_values(
    scen: &[MarketParams],
    v: MvoVariant,
    x_set: &FeasibleSet,
    adversary: Adversary,
) -> Result<Vec<f64>> {
    // Identical scenarios share one solve.
    let mut first = Vec::with_capacity(scen.len());
    for (i, p) in scen.iter().enumerate() {
        first.push(scen[..i].iter().position(|q| q == p).unwrap_or(i));
    }
    let unique: Vec<usize> = (0..scen.len()).filter(|&i| first[i] == i).collect();
    let solved: Vec<Result<f64>> = unique
        .par_iter()
        .map(|&i| {
            hindsight_value(&scen[i], scen, v, x_set, adversary).map_err(|e| match (e, adversary, v) {
                (Error::Infeasible, Adversary::Omniscient, MvoVariant::MinVariance(_) | MvoVariant::MaxReturn(_)) => {
                    Error::ScenarioInfeasible(i)
                }
                (e, _, _) => e,
            })
        })
        .collect();
    let mut values = vec![f64::NAN; scen.len()];
    for (&i, r) in unique.iter().zip(solved) {
        values[i] = r?;
    }
    for i in 0..scen.len() {
        values[i] = values[first[i]];
    }
    Ok(values)
}

/// Index of the largest value; near-ties go to the lowest index.
pub(crate) fn argmax_lowest(values: &[f64]) -> usize {
    let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    values.iter().position(|&v| v >= best - WITNESS_TIE_TOL).unwrap_or(0)
}

/// `z*(p) − f(x, p)` (or `f − z*` for the variance model), with the benchmark
/// constrained by `p` alone.
pub fn evaluate_regret(x: &DVector<f64>, p: &MarketParams, v: MvoVariant, x_set: &FeasibleSet) -> Result<f64> {
    let z = value_function(p, x_set, v)?;
    Ok(regret_from(z, p, v, x))
}

/// `(z*(p) − f(x, p)) / z*(p)`.
pub fn evaluate_scaled_regret(x: &DVector<f64>, p: &MarketParams, v: MvoVariant, x_set: &FeasibleSet) -> Result<f64> {
    let z = value_function(p, x_set, v)?;
    if z <= SCALED_REGRET_FLOOR {
        return Err(Error::NonpositiveValueFunction(z));
    }
    Ok(regret_from(z, p, v, x) / z)
}

fn scenario_list(u: &UncertaintySet) -> Result<&[MarketParams]> {
    u.validate()?;
    u.scenarios()
        .ok_or_else(|| Error::Unsupported("scenario methods need a finite or polytopic uncertainty set".into()))
}

/// Regret of `x` at every scenario (or vertex).
pub fn scenario_regrets(
    x: &DVector<f64>,
    u: &UncertaintySet,
    v: MvoVariant,
    x_set: &FeasibleSet,
    adversary: Adversary,
) -> Result<Vec<f64>> {
    let scen = scenario_list(u)?;
    let z = hindsight_values(scen, v, x_set, adversary)?;
    Ok(scen.iter().zip(&z).map(|(p, &zi)| regret_from(zi, p, v, x)).collect())
}

/// Maximum regret over the scenarios (or vertices) and the index attaining it.
pub fn evaluate_max_regret(
    x: &DVector<f64>,
    u: &UncertaintySet,
    v: MvoVariant,
    x_set: &FeasibleSet,
    adversary: Adversary,
) -> Result<(f64, usize)> {
    let regrets = scenario_regrets(x, u, v, x_set, adversary)?;
    let i = argmax_lowest(&regrets);
    Ok((regrets[i], i))
}

/// [`evaluate_max_regret`] that also samples the hull of a polytopic set
/// when its vertices alone may miss the maximum.
pub fn evaluate_set_regret(
    x: &DVector<f64>,
    u: &UncertaintySet,
    v: MvoVariant,
    x_set: &FeasibleSet,
    adversary: Adversary,
    opts: &ScenarioOptions,
) -> Result<(f64, Witness)> {
    let (mut best, i) = evaluate_max_regret(x, u, v, x_set, adversary)?;
    let mut witness = Witness::Scenario(i);
    if let UncertaintySet::Polytopic(vertices) = u {
        if !vertices_exact(v, adversary) && opts.hull_samples > 0 {
            let (hull, at) = evaluate_hull_regret(x, vertices, v, x_set, opts.hull_samples, opts.seed)?;
            if hull > best + WITNESS_TIE_TOL {
                best = hull;
                witness = Witness::Point(at.mu().iter().copied().collect());
            }
        }
    }
    Ok((best, witness))
}

/// Random convex combinations of `vertices` with uniform (flat Dirichlet) weights.
pub fn sample_hull(vertices: &[MarketParams], count: usize, seed: u64) -> Vec<MarketParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let refs: Vec<&MarketParams> = vertices.iter().collect();
    (0..count)
        .map(|_| {
            let w: Vec<f64> = (0..vertices.len()).map(|_| Exp1.sample(&mut rng)).collect();
            let s: f64 = w.iter().sum();
            let w: Vec<f64> = w.iter().map(|wi| wi / s).collect();
            MarketParams::convex_combination(&refs, &w).expect("convex combination of valid vertices")
        })
        .collect()
}

/// Maximum omniscient regret over `count` sampled hull points of a vertex list.
pub fn evaluate_hull_regret(
    x: &DVector<f64>,
    vertices: &[MarketParams],
    v: MvoVariant,
    x_set: &FeasibleSet,
    count: usize,
    seed: u64,
) -> Result<(f64, MarketParams)> {
    let pts = sample_hull(vertices, count, seed);
    let regrets = pts
        .par_iter()
        .map(|p| evaluate_regret(x, p, v, x_set))
        .collect::<Result<Vec<f64>>>()?;
    let i = argmax_lowest(&regrets);
    Ok((regrets[i], pts[i].clone()))
}

/// Vertex enumeration misses interior maxima only for the omniscient
/// constrained models.
pub fn vertices_exact(v: MvoVariant, adversary: Adversary) -> bool {
    !matches!(
        (v, adversary),
        (
            MvoVariant::MinVariance(_) | MvoVariant::MaxReturn(_),
            Adversary::Omniscient
        )
    )
}

#[allow(clippy::too_many_arguments)]
fn certify(
    u: &UncertaintySet,
    scen: &[MarketParams],
    z: Vec<f64>,
    x: DVector<f64>,
    solver_gamma: f64,
    v: MvoVariant,
    x_set: &FeasibleSet,
    adversary: Adversary,
    opts: &ScenarioOptions,
    mut timings: Timings,
) -> Result<RegretCertificate> {
    let start = Instant::now();
    let regrets: Vec<f64> = scen.iter().zip(&z).map(|(p, &zi)| regret_from(zi, p, v, &x)).collect();
    let i = argmax_lowest(&regrets);
    let mut achieved = regrets[i];
    let mut witness = Witness::Scenario(i);
    if matches!(u, UncertaintySet::Polytopic(_)) && !vertices_exact(v, adversary) && opts.hull_samples > 0 {
        let (hull, at) = evaluate_hull_regret(&x, scen, v, x_set, opts.hull_samples, opts.seed)?;
        if hull > achieved + WITNESS_TIE_TOL {
            achieved = hull;
            witness = Witness::Point(at.mu().iter().copied().collect());
        }
    }
    let gamma = achieved.max(solver_gamma).max(0.0);
    let bracket = Bracket {
        lower: solver_gamma.min(achieved).max(0.0),
        upper: gamma,
    };
    timings.certify_seconds = start.elapsed().as_secs_f64();
    Ok(RegretCertificate {
        x,
        gamma,
        witness,
        bracket,
        scenario_regrets: regrets,
        hindsight_values: z,
        timings,
    })
}

struct Outer {
    cp: ConicProgram,
    x: std::ops::Range<usize>,
    gamma: usize,
}

fn outer_program(x_set: &FeasibleSet) -> Outer {
    let mut cp = ConicProgram::new();
    let x = add_portfolio(&mut cp, x_set);
    let gamma = cp.add_var();
    cp.minimize(LinExpr::var(gamma));
    Outer { cp, x, gamma }
}

fn check_dims(u: &UncertaintySet, x_set: &FeasibleSet) -> Result<()> {
    if u.n() != x_set.n() {
        return Err(Error::dims("feasible set vs uncertainty set", u.n(), x_set.n()));
    }
    Ok(())
}

/// Minimizes the maximum regret of the risk-adjusted model.
pub fn rr_risk_adjusted(u: &UncertaintySet, x_set: &FeasibleSet, lambda: f64) -> Result<RegretCertificate> {
    rr_risk_adjusted_with(u, x_set, lambda, &ScenarioOptions::default())
}

pub fn rr_risk_adjusted_with(
    u: &UncertaintySet,
    x_set: &FeasibleSet,
    lambda: f64,
    opts: &ScenarioOptions,
) -> Result<RegretCertificate> {
    let v = MvoVariant::RiskAdjusted(lambda);
    v.validate()?;
    let scen = scenario_list(u)?;
    check_dims(u, x_set)?;
    let t0 = Instant::now();
    let z = hindsight_values(scen, v, x_set, Adversary::Omniscient)?;
    let t1 = Instant::now();
    let mut o = outer_program(x_set);
    let (distinct, index) = distinct_sigmas(scen.iter().map(|p| p.sigma()));
    // A shared covariance moves into the quadratic objective, which pins x
    // more tightly than an epigraph; the gamma variable then omits the variance.
    let shared = (distinct.len() == 1).then(|| distinct[0].clone());
    let epi = match &shared {
        Some(s) => {
            o.cp.add_quadratic_objective(&o.x, &(s * lambda));
            Vec::new()
        }
        None => add_variance_epigraphs(&mut o.cp, &distinct, &o.x),
    };
    for ((p, &j), &zi) in scen.iter().zip(&index).zip(&z) {
        let mut row = dot(&o.x, p.mu()).with_term(o.gamma, 1.0).with_constant(-zi);
        if shared.is_none() {
            row = row.with_term(epi[j], -lambda);
        }
        o.cp.add_nonneg(row);
    }
    let report = solve_optimal(&o.cp)?;
    let timings = Timings {
        inner_seconds: (t1 - t0).as_secs_f64(),
        outer_seconds: t1.elapsed().as_secs_f64(),
        certify_seconds: 0.0,
    };
    let xv = extract(&report, &o.x);
    let gamma = report.primal[o.gamma] + shared.map_or(0.0, |s| lambda * quad_form(&s, &xv));
    certify(u, scen, z, xv, gamma, v, x_set, Adversary::Omniscient, opts, timings)
}

/// Minimizes the maximum scaled regret `(z* − f)/z*` of the risk-adjusted model.
pub fn rr_risk_adjusted_scaled(u: &UncertaintySet, x_set: &FeasibleSet, lambda: f64) -> Result<RegretCertificate> {
    let v = MvoVariant::RiskAdjusted(lambda);
    v.validate()?;
    let scen = scenario_list(u)?;
    check_dims(u, x_set)?;
    let t0 = Instant::now();
    let z = hindsight_values(scen, v, x_set, Adversary::Omniscient)?;
    if let Some(&bad) = z.iter().find(|&&zi| zi <= SCALED_REGRET_FLOOR) {
        return Err(Error::NonpositiveValueFunction(bad));
    }
    let t1 = Instant::now();
    let mut o = outer_program(x_set);
    let (distinct, index) = distinct_sigmas(scen.iter().map(|p| p.sigma()));
    let epi = add_variance_epigraphs(&mut o.cp, &distinct, &o.x);
    for ((p, &j), &zi) in scen.iter().zip(&index).zip(&z) {
        // f(x, pᵢ) ≥ (1 − γ) zᵢ
        o.cp.add_nonneg(
            dot(&o.x, p.mu())
                .with_term(epi[j], -lambda)
                .with_term(o.gamma, zi)
                .with_constant(-zi),
        );
    }
    let report = solve_optimal(&o.cp)?;
    let xv = extract(&report, &o.x);
    let solver_gamma = report.primal[o.gamma];
    let outer = t1.elapsed().as_secs_f64();
    let scaled: Vec<f64> = scen
        .iter()
        .zip(&z)
        .map(|(p, &zi)| regret_from(zi, p, v, &xv) / zi)
        .collect();
    let i = argmax_lowest(&scaled);
    let gamma = scaled[i].max(solver_gamma).max(0.0);
    Ok(RegretCertificate {
        x: xv,
        gamma,
        witness: Witness::Scenario(i),
        bracket: Bracket {
            lower: solver_gamma.min(scaled[i]).max(0.0),
            upper: gamma,
        },
        scenario_regrets: scaled,
        hindsight_values: z,
        timings: Timings {
            inner_seconds: (t1 - t0).as_secs_f64(),
            outer_seconds: outer,
            certify_seconds: 0.0,
        },
    })
}

/// Minimizes the maximum excess variance over the hindsight minimum-variance
/// portfolio, subject to the return floor under every scenario.
pub fn rr_min_variance(
    u: &UncertaintySet,
    x_set: &FeasibleSet,
    rho: f64,
    adversary: Adversary,
) -> Result<RegretCertificate> {
    rr_min_variance_with(u, x_set, rho, adversary, &ScenarioOptions::default())
}

pub fn rr_min_variance_with(
    u: &UncertaintySet,
    x_set: &FeasibleSet,
    rho: f64,
    adversary: Adversary,
    opts: &ScenarioOptions,
) -> Result<RegretCertificate> {
    let v = MvoVariant::MinVariance(rho);
    v.validate()?;
    let scen = scenario_list(u)?;
    check_dims(u, x_set)?;
    let t0 = Instant::now();
    let z = hindsight_values(scen, v, x_set, adversary)?;
    let t1 = Instant::now();
    let mut o = outer_program(x_set);
    let (distinct, index) = distinct_sigmas(scen.iter().map(|p| p.sigma()));
    let epi = add_variance_epigraphs(&mut o.cp, &distinct, &o.x);
    for (&j, &zi) in index.iter().zip(&z) {
        o.cp.add_nonneg(LinExpr::var(o.gamma).with_term(epi[j], -1.0).with_constant(zi));
    }
    if rho > f64::NEG_INFINITY {
        for p in scen {
            o.cp.add_nonneg(dot(&o.x, p.mu()).with_constant(-rho));
        }
    }
    let report = solve_optimal(&o.cp)?;
    let timings = Timings {
        inner_seconds: (t1 - t0).as_secs_f64(),
        outer_seconds: t1.elapsed().as_secs_f64(),
        certify_seconds: 0.0,
    };
    let gamma = report.primal[o.gamma];
    certify(
        u,
        scen,
        z,
        extract(&report, &o.x),
        gamma,
        v,
        x_set,
        adversary,
        opts,
        timings,
    )
}

/// Minimizes the maximum return shortfall against the hindsight maximum-return
/// portfolio, subject to the variance cap under every scenario.
///
/// The benchmark's risk constraint is `yᵀΣy ≤ σ²`, matching the classical model.
pub fn rr_max_return(
    u: &UncertaintySet,
    x_set: &FeasibleSet,
    sigma2: f64,
    adversary: Adversary,
) -> Result<RegretCertificate> {
    rr_max_return_with(u, x_set, sigma2, adversary, &ScenarioOptions::default())
}

pub fn rr_max_return_with(
    u: &UncertaintySet,
    x_set: &FeasibleSet,
    sigma2: f64,
    adversary: Adversary,
    opts: &ScenarioOptions,
) -> Result<RegretCertificate> {
    let v = MvoVariant::MaxReturn(sigma2);
    v.validate()?;
    let scen = scenario_list(u)?;
    check_dims(u, x_set)?;
    let t0 = Instant::now();
    let z = hindsight_values(scen, v, x_set, adversary)?;
    let t1 = Instant::now();
    let mut o = outer_program(x_set);
    let (distinct, _) = distinct_sigmas(scen.iter().map(|p| p.sigma()));
    for s in distinct {
        add_norm_cap(&mut o.cp, &cholesky_upper(s)?, &o.x, sigma2.sqrt());
    }
    for (p, &zi) in scen.iter().zip(&z) {
        o.cp.add_nonneg(dot(&o.x, p.mu()).with_term(o.gamma, 1.0).with_constant(-zi));
    }
    let report = solve_optimal(&o.cp)?;
    let timings = Timings {
        inner_seconds: (t1 - t0).as_secs_f64(),
        outer_seconds: t1.elapsed().as_secs_f64(),
        certify_seconds: 0.0,
    };
    let gamma = report.primal[o.gamma];
    certify(
        u,
        scen,
        z,
        extract(&report, &o.x),
        gamma,
        v,
        x_set,
        adversary,
        opts,
        timings,
    )
}

/// Minimizes the maximum Sharpe-ratio regret for mean-only uncertainty.
///
/// Works in the homogenized space: `min γ` subject to
/// `(μᵢ − r_f e)ᵀy ≥ z*(μᵢ) − γ`, `y ∈ ℝ₊X`, `yᵀΣy ≤ 1`, and returns `y/(eᵀy)`.
pub fn rr_max_sharpe(u: &UncertaintySet, x_set: &FeasibleSet, rf: f64) -> Result<RegretCertificate> {
    let v = MvoVariant::MaxSharpe(rf);
    v.validate()?;
    let scen = scenario_list(u)?;
    check_dims(u, x_set)?;
    let sigma = u
        .fixed_sigma()
        .ok_or_else(|| Error::Unsupported("Sharpe-ratio regret needs a fixed covariance".into()))?
        .clone();
    let t0 = Instant::now();
    let z = hindsight_values(scen, v, x_set, Adversary::Omniscient)?;
    let t1 = Instant::now();
    let mut cp = ConicProgram::new();
    let (y, _) = add_homogenized(&mut cp, x_set);
    let gamma = cp.add_var();
    add_norm_cap(&mut cp, &cholesky_upper(&sigma)?, &y, 1.0);
    for (p, &zi) in scen.iter().zip(&z) {
        let excess = p.mu().add_scalar(-rf);
        cp.add_nonneg(dot(&y, &excess).with_term(gamma, 1.0).with_constant(-zi));
    }
    cp.minimize(LinExpr::var(gamma));
    let report = solve_optimal(&cp)?;
    let yv = extract(&report, &y);
    if yv.sum() <= SHARPE_POSITIVITY_TOL {
        return Err(Error::NotRationalToInvest);
    }
    let timings = Timings {
        inner_seconds: (t1 - t0).as_secs_f64(),
        outer_seconds: t1.elapsed().as_secs_f64(),
        certify_seconds: 0.0,
    };
    let xv = &yv / yv.sum();
    certify(
        u,
        scen,
        z,
        xv,
        report.primal[gamma],
        v,
        x_set,
        Adversary::Omniscient,
        &ScenarioOptions::default(),
        timings,
    )
}

/// Dispatches to the minimum-regret solver for `v`.
pub fn solve_relative(
    u: &UncertaintySet,
    x_set: &FeasibleSet,
    v: MvoVariant,
    adversary: Adversary,
    opts: &ScenarioOptions,
) -> Result<RegretCertificate> {
    match v {
        MvoVariant::MinVariance(rho) => rr_min_variance_with(u, x_set, rho, adversary, opts),
        MvoVariant::MaxReturn(s) => rr_max_return_with(u, x_set, s, adversary, opts),
        MvoVariant::RiskAdjusted(l) => rr_risk_adjusted_with(u, x_set, l, opts),
        MvoVariant::MaxSharpe(rf) => rr_max_sharpe(u, x_set, rf),
    }
}

/// The classical solution at `p`, used by tests and comparisons.
pub fn hindsight_portfolio(p: &MarketParams, x_set: &FeasibleSet, v: MvoVariant) -> Result<DVector<f64>> {
    match v {
        MvoVariant::MaxSharpe(rf) => sharpe_lift(p, x_set, rf).map(|l| l.portfolio()),
        _ => solve_variant(p, x_set, v).map(|s| s.x),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn p(mu: &[f64], sigma: DMatrix<f64>) -> MarketParams {
        MarketParams::new(DVector::from_row_slice(mu), sigma).unwrap()
    }

    fn sigma3() -> DMatrix<f64> {
        DMatrix::from_row_slice(3, 3, &[0.04, 0.01, 0.0, 0.01, 0.09, 0.02, 0.0, 0.02, 0.16])
    }

    #[test]
    fn optimal_choice_has_no_regret() {
        let base = p(&[0.05, 0.09, 0.12], sigma3());
        let x = FeasibleSet::simplex(3);
        for v in [
            MvoVariant::MinVariance(0.08),
            MvoVariant::MaxReturn(0.05),
            MvoVariant::RiskAdjusted(2.0),
            MvoVariant::MaxSharpe(0.01),
        ] {
            let xs = hindsight_portfolio(&base, &x, v).unwrap();
            let r = evaluate_regret(&xs, &base, v, &x).unwrap();
            assert!(r.abs() < 1e-7, "{v:?}: {r}");
        }
    }

    #[test]
    fn singleton_set_has_no_regret() {
        let x0 = DVector::from_vec(vec![0.2, 0.8]);
        let x = FeasibleSet::singleton(&x0);
        let r = evaluate_regret(
            &x0,
            &p(&[0.1, 0.3], DMatrix::identity(2, 2)),
            MvoVariant::RiskAdjusted(1.0),
            &x,
        )
        .unwrap();
        assert!(r.abs() < 1e-8);
    }

    #[test]
    fn scaled_regret_cases() {
        let base = p(&[0.1, 0.3], DMatrix::identity(2, 2) * 0.01);
        let x = FeasibleSet::simplex(2);
        let v = MvoVariant::RiskAdjusted(1.0);
        let xs = hindsight_portfolio(&base, &x, v).unwrap();
        assert!(evaluate_scaled_regret(&xs, &base, v, &x).unwrap().abs() < 1e-7);
        // f(x) = 0 at x = 0 on a set containing the origin.
        let x2 = FeasibleSet::from_rows(
            2,
            &[],
            &[],
            &[vec![-1.0, 0.0], vec![0.0, -1.0], vec![1.0, 1.0]],
            &[0.0, 0.0, 1.0],
        )
        .unwrap();
        let s = evaluate_scaled_regret(&DVector::zeros(2), &base, v, &x2).unwrap();
        assert!((s - 1.0).abs() < 1e-7);
        let losing = p(&[-0.1, -0.2], DMatrix::identity(2, 2));
        assert!(matches!(
            evaluate_scaled_regret(&xs, &losing, v, &x),
            Err(Error::NonpositiveValueFunction(_))
        ));
    }

    #[test]
    fn single_scenario_certificate() {
        let base = p(&[0.05, 0.09, 0.12], sigma3());
        let u = UncertaintySet::finite(vec![base.clone()]).unwrap();
        let x = FeasibleSet::simplex(3);
        let c = rr_risk_adjusted(&u, &x, 2.0).unwrap();
        assert!(c.gamma < 1e-7);
        let xs = hindsight_portfolio(&base, &x, MvoVariant::RiskAdjusted(2.0)).unwrap();
        assert!((&c.x - xs).amax() < 1e-4);
        for adv in [Adversary::Omniscient, Adversary::Fortuitous] {
            assert!(rr_min_variance(&u, &x, 0.08, adv).unwrap().gamma < 1e-7);
            assert!(rr_max_return(&u, &x, 0.05, adv).unwrap().gamma < 1e-7);
        }
        assert!(rr_max_sharpe(&u, &x, 0.01).unwrap().gamma < 1e-7);
    }

    #[test]
    fn symmetric_pair() {
        let s1 = p(&[0.1, 0.2], DMatrix::identity(2, 2));
        let s2 = p(&[0.2, 0.1], DMatrix::identity(2, 2));
        let u = UncertaintySet::finite(vec![s1.clone(), s2]).unwrap();
        let x = FeasibleSet::simplex(2);
        let c = rr_risk_adjusted(&u, &x, 1.0).unwrap();
        assert!((c.x[0] - 0.5).abs() < 1e-6, "{}", c.x);
        let r = evaluate_regret(
            &DVector::from_vec(vec![0.5, 0.5]),
            &s1,
            MvoVariant::RiskAdjusted(1.0),
            &x,
        )
        .unwrap();
        assert!((c.gamma - r).abs() < 1e-7);
        // Sharpe with swapped assets is symmetric too.
        let c = rr_max_sharpe(&u, &x, 0.0).unwrap();
        assert!((c.x[0] - 0.5).abs() < 1e-6, "{}", c.x);
    }

    #[test]
    fn fortuitous_is_weaker() {
        let s1 = p(&[0.05, 0.09, 0.12], sigma3());
        let s2 = p(&[0.10, 0.07, 0.06], sigma3() * 1.3);
        let u = UncertaintySet::finite(vec![s1, s2]).unwrap();
        let x = FeasibleSet::simplex(3);
        let o = rr_min_variance(&u, &x, 0.075, Adversary::Omniscient).unwrap();
        let f = rr_min_variance(&u, &x, 0.075, Adversary::Fortuitous).unwrap();
        assert!(f.gamma <= o.gamma + 1e-7);
        let o = rr_max_return(&u, &x, 0.06, Adversary::Omniscient).unwrap();
        let f = rr_max_return(&u, &x, 0.06, Adversary::Fortuitous).unwrap();
        assert!(f.gamma <= o.gamma + 1e-7);
    }

    #[test]
    fn scaled_covariance_witness() {
        let s1 = p(&[0.05, 0.09, 0.12], sigma3());
        let s2 = p(&[0.05, 0.09, 0.12], sigma3() * 2.0);
        let u = UncertaintySet::finite(vec![s1, s2]).unwrap();
        let x = FeasibleSet::simplex(3);
        let off = DVector::from_vec(vec![0.1, 0.3, 0.6]);
        let (r, i) = evaluate_max_regret(&off, &u, MvoVariant::MinVariance(0.08), &x, Adversary::Fortuitous).unwrap();
        assert_eq!(i, 1);
        assert!(r > 0.0);
    }

    #[test]
    fn omniscient_infeasible_scenario() {
        let s1 = p(&[0.05, 0.09], DMatrix::identity(2, 2));
        let s2 = p(&[0.01, 0.02], DMatrix::identity(2, 2));
        let u = UncertaintySet::finite(vec![s1, s2]).unwrap();
        assert_eq!(
            rr_min_variance(&u, &FeasibleSet::simplex(2), 0.04, Adversary::Omniscient),
            Err(Error::ScenarioInfeasible(1))
        );
    }

    #[test]
    fn certificates_are_sound() {
        let s1 = p(&[0.05, 0.09, 0.12], sigma3());
        let s2 = p(&[0.10, 0.07, 0.06], sigma3() * 1.3);
        let s3 = p(&[0.08, 0.11, 0.02], sigma3() * 0.8);
        let u = UncertaintySet::finite(vec![s1, s2, s3]).unwrap();
        let x = FeasibleSet::simplex(3);
        for v in [
            MvoVariant::RiskAdjusted(2.0),
            MvoVariant::MinVariance(0.07),
            MvoVariant::MaxReturn(0.06),
        ] {
            let c = solve_relative(&u, &x, v, Adversary::Omniscient, &ScenarioOptions::default()).unwrap();
            let (r, _) = evaluate_max_regret(&c.x, &u, v, &x, Adversary::Omniscient).unwrap();
            assert!(r <= c.gamma + 1e-6);
            assert!(c.bracket.lower <= c.bracket.upper);
            assert!(x.contains(&c.x, 1e-7));
        }
    }

    #[test]
    fn sharpe_gamma_bounded_by_nominal_choice() {
        let sigma = sigma3();
        let s1 = p(&[0.05, 0.09, 0.12], sigma.clone());
        let s2 = p(&[0.10, 0.07, 0.06], sigma.clone());
        let u = UncertaintySet::finite(vec![s1, s2]).unwrap();
        let x = FeasibleSet::simplex(3);
        let c = rr_max_sharpe(&u, &x, 0.01).unwrap();
        let nominal = hindsight_portfolio(&u.centroid(), &x, MvoVariant::MaxSharpe(0.01)).unwrap();
        let (r, _) = evaluate_max_regret(&nominal, &u, MvoVariant::MaxSharpe(0.01), &x, Adversary::Omniscient).unwrap();
        assert!(c.gamma >= 0.0 && c.gamma <= r + 1e-7);
    }
}
