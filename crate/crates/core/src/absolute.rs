//! Worst-case (absolute robust) counterparts of the classical models.

use nalgebra::DVector;

use crate::conic::{mat_apply, solve_optimal, ConicProgram, LinExpr};
use crate::error::{Error, Result};
use crate::linalg::quad_form;
use crate::market::FeasibleSet;
use crate::model::{
    add_homogenized, add_norm_cap, add_portfolio, add_variance_epigraphs, distinct_sigmas, dot, extract, var_exprs,
};
use crate::mvo::{ensure_nonempty, MvoVariant, PortfolioSolution, SHARPE_POSITIVITY_TOL};
use crate::uncertainty::UncertaintySet;

fn check(u: &UncertaintySet, x_set: &FeasibleSet) -> Result<()> {
    u.validate()?;
    if u.n() != x_set.n() {
        return Err(Error::dims("feasible set vs uncertainty set", u.n(), x_set.n()));
    }
    Ok(())
}

/// Returns an expression `e` with `e ≤ (μ − shift)ᵀx` for every `μ ∈ U_μ`,
/// tight at the optimum when `e` is maximized.
///
/// For scenario sets `e` is a fresh variable bounded by each scenario; for the
/// ellipsoid it is `(μ̄ − shift)ᵀx − τ` with `τ ≥ ‖Mᵀx‖`.
fn add_worst_mean(
    cp: &mut ConicProgram,
    u: &UncertaintySet,
    x: &std::ops::Range<usize>,
    shift: &DVector<f64>,
) -> LinExpr {
    match u {
        UncertaintySet::Finite(s) | UncertaintySet::Polytopic(s) => {
            let t = cp.add_var();
            for p in s {
                cp.add_nonneg(dot(x, &(p.mu() - shift)).with_term(t, -1.0));
            }
            LinExpr::var(t)
        }
        UncertaintySet::EllipsoidalMu(e) => {
            let tau = cp.add_var();
            cp.add_soc(LinExpr::var(tau), mat_apply(&e.shape().transpose(), &var_exprs(x)));
            dot(x, &(e.mu_bar() - shift)).with_term(tau, -1.0)
        }
    }
}

/// Minimizes the worst-case variance subject to a worst-case return floor.
pub fn ar_min_variance(u: &UncertaintySet, x_set: &FeasibleSet, rho: f64) -> Result<PortfolioSolution> {
    let v = MvoVariant::MinVariance(rho);
    v.validate()?;
    check(u, x_set)?;
    let mut cp = ConicProgram::new();
    let x = add_portfolio(&mut cp, x_set);
    let sigmas = u.project_sigma();
    let (distinct, _) = distinct_sigmas(sigmas.iter());
    if distinct.len() == 1 {
        cp.add_quadratic_objective(&x, distinct[0]);
    } else {
        let s = cp.add_var();
        for sj in add_variance_epigraphs(&mut cp, &distinct, &x) {
            cp.add_nonneg(LinExpr::var(s).with_term(sj, -1.0));
        }
        cp.minimize(LinExpr::var(s));
    }
    if rho > f64::NEG_INFINITY {
        let worst = add_worst_mean(&mut cp, u, &x, &DVector::zeros(u.n()));
        cp.add_nonneg(worst.with_constant(-rho));
    }
    let xv = extract(&solve_optimal(&cp)?, &x);
    Ok(PortfolioSolution::optimal(xv.clone(), u.worst_case_variance(&xv).0, v))
}

/// Maximizes the worst-case return subject to a worst-case variance cap.
pub fn ar_max_return(u: &UncertaintySet, x_set: &FeasibleSet, sigma2: f64) -> Result<PortfolioSolution> {
    let v = MvoVariant::MaxReturn(sigma2);
    v.validate()?;
    check(u, x_set)?;
    let mut cp = ConicProgram::new();
    let x = add_portfolio(&mut cp, x_set);
    let sigmas = u.project_sigma();
    let (distinct, _) = distinct_sigmas(sigmas.iter());
    for s in distinct {
        let f = crate::linalg::cholesky_upper(s)?;
        add_norm_cap(&mut cp, &f, &x, sigma2.sqrt());
    }
    let worst = add_worst_mean(&mut cp, u, &x, &DVector::zeros(u.n()));
    cp.minimize(worst.scale(-1.0));
    let xv = extract(&solve_optimal(&cp)?, &x);
    Ok(PortfolioSolution::optimal(xv.clone(), u.worst_case_mean(&xv).0, v))
}

/// Maximizes the worst-case risk-adjusted return. Scenario sets are treated jointly.
pub fn ar_risk_adjusted(u: &UncertaintySet, x_set: &FeasibleSet, lambda: f64) -> Result<PortfolioSolution> {
    let v = MvoVariant::RiskAdjusted(lambda);
    v.validate()?;
    check(u, x_set)?;
    let mut cp = ConicProgram::new();
    let x = add_portfolio(&mut cp, x_set);
    match u {
        UncertaintySet::Finite(s) | UncertaintySet::Polytopic(s) => {
            let (distinct, index) = distinct_sigmas(s.iter().map(|p| p.sigma()));
            let t = cp.add_var();
            if distinct.len() == 1 {
                // Quadratic objective instead of an epigraph: tighter weights.
                cp.add_quadratic_objective(&x, &(distinct[0] * lambda));
                for p in s {
                    cp.add_nonneg(dot(&x, p.mu()).with_term(t, -1.0));
                }
            } else {
                let epi = add_variance_epigraphs(&mut cp, &distinct, &x);
                for (p, &j) in s.iter().zip(&index) {
                    cp.add_nonneg(dot(&x, p.mu()).with_term(epi[j], -lambda).with_term(t, -1.0));
                }
            }
            cp.minimize(LinExpr::term(t, -1.0));
        }
        UncertaintySet::EllipsoidalMu(e) => {
            let worst = add_worst_mean(&mut cp, u, &x, &DVector::zeros(u.n()));
            cp.add_quadratic_objective(&x, &(e.sigma() * lambda));
            cp.minimize(worst.scale(-1.0));
        }
    }
    let xv = extract(&solve_optimal(&cp)?, &x);
    Ok(PortfolioSolution::optimal(
        xv.clone(),
        worst_case_objective(u, v, &xv),
        v,
    ))
}

/// Maximizes the worst-case Sharpe ratio. Requires one covariance shared by the whole set.
pub fn ar_max_sharpe(u: &UncertaintySet, x_set: &FeasibleSet, rf: f64) -> Result<PortfolioSolution> {
    let v = MvoVariant::MaxSharpe(rf);
    v.validate()?;
    check(u, x_set)?;
    let sigma = u
        .fixed_sigma()
        .ok_or_else(|| Error::Unsupported("worst-case Sharpe ratio needs a fixed covariance".into()))?
        .clone();
    if !x_set.has_budget_row() {
        return Err(Error::Unsupported(
            "maximum Sharpe ratio needs the budget row eᵀx = 1 in the feasible set".into(),
        ));
    }
    let mut cp = ConicProgram::new();
    let (y, _) = add_homogenized(&mut cp, x_set);
    add_norm_cap(&mut cp, &crate::linalg::cholesky_upper(&sigma)?, &y, 1.0);
    let worst = add_worst_mean(&mut cp, u, &y, &DVector::from_element(u.n(), rf));
    cp.minimize(worst.clone().scale(-1.0));
    let report = solve_optimal(&cp)?;
    if worst.eval(&report.primal) <= SHARPE_POSITIVITY_TOL {
        ensure_nonempty(x_set)?;
        return Err(Error::NotRationalToInvest);
    }
    let yv = extract(&report, &y);
    let xv = &yv / yv.sum();
    Ok(PortfolioSolution::optimal(
        xv.clone(),
        worst_case_objective(u, v, &xv),
        v,
    ))
}

/// Dispatches to the absolute-robust solver for `v`.
pub fn solve_absolute(u: &UncertaintySet, x_set: &FeasibleSet, v: MvoVariant) -> Result<PortfolioSolution> {
    match v {
        MvoVariant::MinVariance(rho) => ar_min_variance(u, x_set, rho),
        MvoVariant::MaxReturn(s) => ar_max_return(u, x_set, s),
        MvoVariant::RiskAdjusted(l) => ar_risk_adjusted(u, x_set, l),
        MvoVariant::MaxSharpe(rf) => ar_max_sharpe(u, x_set, rf),
    }
}

/// Worst value of the model objective at `x` over `U`, in the model's orientation.
///
/// Scenario sets are evaluated jointly; for the ellipsoid the closed-form
/// worst-case mean is used.
pub fn worst_case_objective(u: &UncertaintySet, v: MvoVariant, x: &DVector<f64>) -> f64 {
    match v {
        MvoVariant::MinVariance(_) => u.worst_case_variance(x).0,
        MvoVariant::MaxReturn(_) => u.worst_case_mean(x).0,
        MvoVariant::RiskAdjusted(_) | MvoVariant::MaxSharpe(_) => match u {
            UncertaintySet::Finite(s) | UncertaintySet::Polytopic(s) => {
                s.iter().map(|p| v.objective(p, x)).fold(f64::INFINITY, f64::min)
            }
            UncertaintySet::EllipsoidalMu(e) => {
                let (mean, _) = e.worst_case_mean(x);
                let var = quad_form(e.sigma(), x);
                match v {
                    MvoVariant::RiskAdjusted(l) => mean - l * var,
                    MvoVariant::MaxSharpe(rf) => (mean - rf) / var.sqrt(),
                    _ => unreachable!(),
                }
            }
        },
    }
}
