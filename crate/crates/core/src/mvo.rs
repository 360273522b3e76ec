//! Classical mean-variance models and their value functions.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conic::{solve, solve_optimal, ConicProgram, SolveOptions, SolveStatus};
use crate::error::{Error, Result};
use crate::linalg::quad_form;
use crate::market::{FeasibleSet, MarketParams};
use crate::model::{add_homogenized, add_norm_cap, add_portfolio, dot, extract};
use crate::serde_util;

/// Below this excess return the Sharpe lift is treated as nonpositive.
pub const SHARPE_POSITIVITY_TOL: f64 = 1e-9;

/// Model family with its scalar parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MvoVariant {
    /// Minimize variance subject to `μᵀx ≥ ρ`; `ρ = −∞` drops the return constraint.
    MinVariance(f64),
    /// Maximize `μᵀx` subject to `xᵀΣx ≤ σ²`.
    MaxReturn(f64),
    /// Maximize `μᵀx − λ xᵀΣx`.
    RiskAdjusted(f64),
    /// Maximize `(μᵀx − r_f) / √(xᵀΣx)`.
    MaxSharpe(f64),
}

impl MvoVariant {
    pub fn validate(&self) -> Result<()> {
        match *self {
            MvoVariant::RiskAdjusted(l) if !(l > 0.0 && l.is_finite()) => {
                Err(Error::InvalidInput(format!("risk aversion must be positive, got {l}")))
            }
            MvoVariant::MaxReturn(s) if !(s > 0.0 && s.is_finite()) => {
                Err(Error::InvalidInput(format!("risk cap must be positive, got {s}")))
            }
            MvoVariant::MinVariance(r) if r.is_nan() || r == f64::INFINITY => {
                Err(Error::InvalidInput(format!("invalid target return {r}")))
            }
            MvoVariant::MaxSharpe(r) if !r.is_finite() => {
                Err(Error::InvalidInput(format!("invalid risk-free rate {r}")))
            }
            _ => Ok(()),
        }
    }

    /// `true` for the variance-minimizing model, whose objective is minimized.
    pub fn is_minimization(&self) -> bool {
        matches!(self, MvoVariant::MinVariance(_))
    }

    pub fn name(&self) -> &'static str {
        match self {
            MvoVariant::MinVariance(_) => "min_variance",
            MvoVariant::MaxReturn(_) => "max_return",
            MvoVariant::RiskAdjusted(_) => "risk_adjusted",
            MvoVariant::MaxSharpe(_) => "max_sharpe",
        }
    }

    /// Objective of `x` under `p`, in the model's own orientation.
    pub fn objective(&self, p: &MarketParams, x: &DVector<f64>) -> f64 {
        let ret = p.mu().dot(x);
        let var = quad_form(p.sigma(), x);
        match *self {
            MvoVariant::MinVariance(_) => var,
            MvoVariant::MaxReturn(_) => ret,
            MvoVariant::RiskAdjusted(l) => ret - l * var,
            MvoVariant::MaxSharpe(rf) => (ret - rf) / var.sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PortfolioStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioSolution {
    #[serde(with = "serde_util::vector")]
    pub x: DVector<f64>,
    pub objective: f64,
    pub variant: MvoVariant,
    pub status: PortfolioStatus,
}

impl PortfolioSolution {
    pub(crate) fn optimal(x: DVector<f64>, objective: f64, variant: MvoVariant) -> Self {
        Self {
            x,
            objective,
            variant,
            status: PortfolioStatus::Optimal,
        }
    }

    pub fn unsolved(n: usize, variant: MvoVariant, status: PortfolioStatus) -> Self {
        Self {
            x: DVector::from_element(n, f64::NAN),
            objective: f64::NAN,
            variant,
            status,
        }
    }
}

fn check_dims(params: &MarketParams, x_set: &FeasibleSet) -> Result<()> {
    if params.n() != x_set.n() {
        return Err(Error::dims("feasible set vs market", params.n(), x_set.n()));
    }
    Ok(())
}

/// Solves one of the three quadratic models. `MaxSharpe` is delegated to [`solve_max_sharpe`].
pub fn solve_variant(params: &MarketParams, x_set: &FeasibleSet, v: MvoVariant) -> Result<PortfolioSolution> {
    v.validate()?;
    check_dims(params, x_set)?;
    let u = params.factor();
    let mut cp = ConicProgram::new();
    let x = add_portfolio(&mut cp, x_set);
    match v {
        MvoVariant::MinVariance(rho) => {
            cp.add_quadratic_objective(&x, params.sigma());
            if rho > f64::NEG_INFINITY {
                cp.add_nonneg(dot(&x, params.mu()).with_constant(-rho));
            }
        }
        MvoVariant::MaxReturn(sigma2) => {
            add_norm_cap(&mut cp, &u, &x, sigma2.sqrt());
            cp.minimize(dot(&x, &-params.mu()));
        }
        MvoVariant::RiskAdjusted(lambda) => {
            cp.add_quadratic_objective(&x, &(params.sigma() * lambda));
            cp.minimize(dot(&x, &-params.mu()));
        }
        MvoVariant::MaxSharpe(rf) => return solve_max_sharpe(params, x_set, rf),
    }
    let report = solve_optimal(&cp)?;
    let xv = extract(&report, &x);
    Ok(PortfolioSolution::optimal(xv.clone(), v.objective(params, &xv), v))
}

/// Optimum of the lifted Sharpe program.
#[derive(Debug, Clone, PartialEq)]
pub struct SharpeLift {
    pub y: DVector<f64>,
    pub t: f64,
    /// Optimal excess return `(μ − r_f e)ᵀ y`.
    pub value: f64,
}

impl SharpeLift {
    /// The portfolio `y / (eᵀy)`.
    pub fn portfolio(&self) -> DVector<f64> {
        &self.y / self.y.sum()
    }
}

/// `max (μ − r_f e)ᵀy` over the homogenized cone of `X` intersected with `yᵀΣy ≤ 1`.
pub fn sharpe_lift(params: &MarketParams, x_set: &FeasibleSet, rf: f64) -> Result<SharpeLift> {
    check_dims(params, x_set)?;
    if !x_set.has_budget_row() {
        return Err(Error::Unsupported(
            "maximum Sharpe ratio needs the budget row eᵀx = 1 in the feasible set".into(),
        ));
    }
    let excess = params.mu().map(|m| m - rf);
    let mut cp = ConicProgram::new();
    let (y, t) = add_homogenized(&mut cp, x_set);
    add_norm_cap(&mut cp, &params.factor(), &y, 1.0);
    cp.minimize(dot(&y, &-&excess));
    let report = solve_optimal(&cp)?;
    let yv = extract(&report, &y);
    let value = excess.dot(&yv);
    if value <= SHARPE_POSITIVITY_TOL {
        ensure_nonempty(x_set)?;
        return Err(Error::NotRationalToInvest);
    }
    Ok(SharpeLift {
        t: report.primal[t],
        y: yv,
        value,
    })
}

/// Maximum Sharpe ratio portfolio via the homogenized lift.
pub fn solve_max_sharpe(params: &MarketParams, x_set: &FeasibleSet, rf: f64) -> Result<PortfolioSolution> {
    let v = MvoVariant::MaxSharpe(rf);
    v.validate()?;
    let lift = sharpe_lift(params, x_set, rf)?;
    let x = lift.portfolio();
    Ok(PortfolioSolution::optimal(x.clone(), v.objective(params, &x), v))
}

/// Optimal value `z*(p)` of the model.
pub fn value_function(params: &MarketParams, x_set: &FeasibleSet, v: MvoVariant) -> Result<f64> {
    match v {
        // The lift value equals the optimal Sharpe ratio and is more accurate than re-evaluating.
        MvoVariant::MaxSharpe(rf) => sharpe_lift(params, x_set, rf).map(|l| l.value),
        _ => solve_variant(params, x_set, v).map(|s| s.objective),
    }
}

/// `Err(Infeasible)` when `X` is empty.
pub fn ensure_nonempty(x_set: &FeasibleSet) -> Result<()> {
    let mut cp = ConicProgram::new();
    add_portfolio(&mut cp, x_set);
    match solve(&cp, &SolveOptions::default())?.status {
        SolveStatus::Infeasible => Err(Error::Infeasible),
        _ => Ok(()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub rho: f64,
    pub risk: f64,
    #[serde(rename = "return")]
    pub ret: f64,
    pub status: PortfolioStatus,
}

/// Minimum-variance portfolios along an ascending grid of target returns.
///
/// Infeasible targets are reported with `NaN` risk and return.
pub fn efficient_frontier(params: &MarketParams, x_set: &FeasibleSet, grid: &[f64]) -> Result<Vec<FrontierPoint>> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("empty target-return grid".into()));
    }
    if grid.iter().any(|r| !r.is_finite()) || grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidInput(
            "target-return grid must be finite and ascending".into(),
        ));
    }
    check_dims(params, x_set)?;
    grid.par_iter()
        .map(
            |&rho| match solve_variant(params, x_set, MvoVariant::MinVariance(rho)) {
                Ok(s) => Ok(FrontierPoint {
                    rho,
                    risk: s.objective.max(0.0).sqrt(),
                    ret: params.mu().dot(&s.x),
                    status: PortfolioStatus::Optimal,
                }),
                Err(e @ (Error::Infeasible | Error::Unbounded)) => Ok(FrontierPoint {
                    rho,
                    risk: f64::NAN,
                    ret: f64::NAN,
                    status: if e == Error::Infeasible {
                        PortfolioStatus::Infeasible
                    } else {
                        PortfolioStatus::Unbounded
                    },
                }),
                Err(e) => Err(e),
            },
        )
        .collect()
}
