//! Solver-neutral conic programs and the backend that solves them.

mod backend;
mod cbf;
mod ir;
mod quadratic;

pub use backend::{solve, Residuals, SolveOptions, SolveReport, SolveStatus, PRIMAL_RESIDUAL_TOL, RELATIVE_GAP_TOL};
pub use cbf::to_cbf;
pub use ir::{psd_index, unpack_lower, Cone, ConeConstraint, ConicProgram, LinExpr, SymAffine};
pub use quadratic::{affine_exprs, factored_quadratic_to_soc, mat_apply, quadratic_to_soc, squared_norm_epigraph};

/// Solves with default options and converts non-optimal outcomes into errors.
pub fn solve_optimal(cp: &ConicProgram) -> crate::Result<SolveReport> {
    solve(cp, &SolveOptions::default())?.into_optimal()
}
