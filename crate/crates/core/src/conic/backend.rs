//! Interior-point backend for [`ConicProgram`], backed by Clarabel.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};
use serde::Serialize;

use super::ir::{psd_index, Cone, ConicProgram};
use crate::error::{Error, Result};

const SQRT2: f64 = std::f64::consts::SQRT_2;

/// Acceptance thresholds for an `Optimal` report.
pub const PRIMAL_RESIDUAL_TOL: f64 = 1e-7;
pub const RELATIVE_GAP_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    SolverFailure,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub tol_gap_abs: f64,
    pub tol_gap_rel: f64,
    pub tol_feas: f64,
    pub max_iter: u32,
    pub verbose: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol_gap_abs: 1e-9,
            tol_gap_rel: 1e-9,
            tol_feas: 1e-9,
            max_iter: 400,
            verbose: false,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Residuals {
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub primal: Vec<f64>,
    /// Multipliers of the equality rows.
    pub eq_duals: Vec<f64>,
    /// One dual vector per cone constraint, in the constraint's own row layout.
    pub cone_duals: Vec<Vec<f64>>,
    pub objective: f64,
    pub dual_objective: f64,
    pub residuals: Residuals,
    pub iterations: u32,
    pub message: String,
}

impl SolveReport {
    /// The primal point, or the matching error when the solve did not reach optimality.
    pub fn into_optimal(self) -> Result<Self> {
        match self.status {
            SolveStatus::Optimal => Ok(self),
            SolveStatus::Infeasible => Err(Error::Infeasible),
            SolveStatus::Unbounded => Err(Error::Unbounded),
            SolveStatus::SolverFailure => Err(Error::SolverFailure(self.message)),
        }
    }
}

struct Assembled {
    a_rows: Vec<usize>,
    a_cols: Vec<usize>,
    a_vals: Vec<f64>,
    b: Vec<f64>,
    cones: Vec<SupportedConeT<f64>>,
    // Offset of each cone block in the stacked row order.
    offsets: Vec<usize>,
    m: usize,
}

impl Assembled {
    fn push(&mut self, row: usize, expr: &super::LinExpr, scale: f64, sign: f64) {
        for &(j, c) in &expr.terms {
            self.a_rows.push(row);
            self.a_cols.push(j);
            self.a_vals.push(sign * scale * c);
        }
    }
}

fn assemble(cp: &ConicProgram) -> Assembled {
    let mut asm = Assembled {
        a_rows: Vec::new(),
        a_cols: Vec::new(),
        a_vals: Vec::new(),
        b: Vec::new(),
        cones: Vec::new(),
        offsets: Vec::new(),
        m: 0,
    };
    // Zero cone: a·v + c = 0  ->  A = a, b = -c.
    for e in &cp.equalities {
        asm.push(asm.m, e, 1.0, 1.0);
        asm.b.push(-e.constant);
        asm.m += 1;
    }
    if !cp.equalities.is_empty() {
        asm.cones.push(SupportedConeT::ZeroConeT(cp.equalities.len()));
    }
    // Cone rows: s = c + a·v  ->  A = -a, b = c.
    for con in &cp.cones {
        asm.offsets.push(asm.m);
        let base = asm.m;
        match con.cone {
            Cone::Nonneg(d) | Cone::SecondOrder(d) => {
                for (r, e) in con.rows.iter().enumerate() {
                    asm.push(base + r, e, 1.0, -1.0);
                    asm.b.push(e.constant);
                }
                asm.cones.push(match con.cone {
                    Cone::Nonneg(_) => SupportedConeT::NonnegativeConeT(d),
                    _ => SupportedConeT::SecondOrderConeT(d),
                });
            }
            Cone::RotatedSecondOrder(d) => {
                let (a, b) = (&con.rows[0], &con.rows[1]);
                let head = a.clone().scale(1.0 / SQRT2).plus(&b.clone().scale(1.0 / SQRT2));
                let diff = a.clone().scale(1.0 / SQRT2).plus(&b.clone().scale(-1.0 / SQRT2));
                for (r, e) in [head, diff].iter().chain(con.rows[2..].iter()).enumerate() {
                    asm.push(base + r, e, 1.0, -1.0);
                    asm.b.push(e.constant);
                }
                asm.cones.push(SupportedConeT::SecondOrderConeT(d));
            }
            Cone::Psd(d) => {
                let rows = d * (d + 1) / 2;
                asm.b.resize(base + rows, 0.0);
                for j in 0..d {
                    for i in 0..=j {
                        let target = base + j * (j + 1) / 2 + i;
                        let e = &con.rows[psd_index(d, j, i)];
                        let scale = if i == j { 1.0 } else { SQRT2 };
                        asm.push(target, e, scale, -1.0);
                        asm.b[target] = scale * e.constant;
                    }
                }
                asm.cones.push(SupportedConeT::PSDTriangleConeT(d));
            }
        }
        asm.m += con.cone.rows();
    }
    asm
}

fn unpack_duals(cp: &ConicProgram, asm: &Assembled, z: &[f64]) -> Vec<Vec<f64>> {
    cp.cones
        .iter()
        .zip(&asm.offsets)
        .map(|(con, &base)| match con.cone {
            Cone::Nonneg(d) | Cone::SecondOrder(d) => z[base..base + d].to_vec(),
            Cone::RotatedSecondOrder(d) => {
                let (h, t) = (z[base], z[base + 1]);
                let mut out = vec![(h + t) / SQRT2, (h - t) / SQRT2];
                out.extend_from_slice(&z[base + 2..base + d]);
                out
            }
            Cone::Psd(d) => {
                let mut out = vec![0.0; d * (d + 1) / 2];
                for j in 0..d {
                    for i in 0..=j {
                        let v = z[base + j * (j + 1) / 2 + i];
                        out[psd_index(d, j, i)] = if i == j { v } else { v / SQRT2 };
                    }
                }
                out
            }
        })
        .collect()
}

/// Solves `cp` to the IR-level tolerances.
pub fn solve(cp: &ConicProgram, opts: &SolveOptions) -> Result<SolveReport> {
    cp.validate()?;
    let n = cp.num_vars();
    let asm = assemble(cp);
    let a = CscMatrix::new_from_triplets(asm.m, n, asm.a_rows.clone(), asm.a_cols.clone(), asm.a_vals.clone());
    let (pi, pj, pv): (Vec<usize>, Vec<usize>, Vec<f64>) =
        cp.quadratic
            .iter()
            .map(|&(i, j, v)| (i, j, 2.0 * v))
            .fold((vec![], vec![], vec![]), |mut acc, (i, j, v)| {
                acc.0.push(i);
                acc.1.push(j);
                acc.2.push(v);
                acc
            });
    let p = CscMatrix::new_from_triplets(n, n, pi, pj, pv);
    let mut q = vec![0.0; n];
    for &(j, c) in &cp.objective.terms {
        q[j] += c;
    }
    let settings = DefaultSettingsBuilder::default()
        .verbose(opts.verbose)
        .max_iter(opts.max_iter)
        .tol_gap_abs(opts.tol_gap_abs)
        .tol_gap_rel(opts.tol_gap_rel)
        .tol_feas(opts.tol_feas)
        .max_threads(1)
        .build()
        .map_err(|e| Error::SolverFailure(format!("settings: {e:?}")))?;
    let mut solver = DefaultSolver::new(&p, &q, &a, &asm.b, &asm.cones, settings)
        .map_err(|e| Error::SolverFailure(format!("setup: {e}")))?;
    solver.solve();
    let sol = &solver.solution;

    let primal = sol.x.clone();
    let objective = cp.objective_value(&primal);
    let dual_objective = sol.obj_val_dual + cp.objective.constant;
    let primal_res = cp.primal_residual(&primal);
    let gap = (objective - dual_objective).abs() / objective.abs().max(1.0);
    let residuals = Residuals {
        primal: primal_res,
        dual: sol.r_dual,
        gap,
    };
    let accurate = primal_res <= PRIMAL_RESIDUAL_TOL && gap <= RELATIVE_GAP_TOL;
    let status = match sol.status {
        SolverStatus::Solved if primal_res <= PRIMAL_RESIDUAL_TOL => SolveStatus::Optimal,
        SolverStatus::Solved
        | SolverStatus::AlmostSolved
        | SolverStatus::MaxIterations
        | SolverStatus::MaxTime
        | SolverStatus::InsufficientProgress
        | SolverStatus::NumericalError
            if accurate =>
        {
            SolveStatus::Optimal
        }
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => SolveStatus::Infeasible,
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => SolveStatus::Unbounded,
        _ => SolveStatus::SolverFailure,
    };
    let message = format!(
        "{:?} after {} iterations (primal residual {:.2e}, gap {:.2e})",
        sol.status, sol.iterations, primal_res, gap
    );
    let eq_count = cp.equalities.len();
    Ok(SolveReport {
        status,
        eq_duals: sol.z[..eq_count].to_vec(),
        cone_duals: unpack_duals(cp, &asm, &sol.z),
        primal,
        objective,
        dual_objective,
        residuals,
        iterations: sol.iterations,
        message,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::{LinExpr, SymAffine};
    use nalgebra::DMatrix;

    fn opts() -> SolveOptions {
        SolveOptions::default()
    }

    #[test]
    fn lower_bound_lp() {
        let mut cp = ConicProgram::new();
        let x = cp.add_var();
        cp.add_nonneg(LinExpr::var(x).with_constant(-1.0));
        cp.minimize(LinExpr::var(x));
        let r = solve(&cp, &opts()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.primal[x] - 1.0).abs() < 1e-7);
        assert!(r.dual_objective <= r.objective + 1e-6);
    }

    #[test]
    fn soc_norm() {
        let mut cp = ConicProgram::new();
        let t = cp.add_var();
        cp.add_soc(LinExpr::var(t), vec![LinExpr::constant(1.0), LinExpr::constant(1.0)]);
        cp.minimize(LinExpr::var(t));
        let r = solve(&cp, &opts()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.objective - 2f64.sqrt()).abs() < 1e-7);
    }

    #[test]
    fn rotated_soc() {
        // min s s.t. 2·(1/2)·s ≥ 3²
        let mut cp = ConicProgram::new();
        let s = cp.add_var();
        cp.add_cone(
            Cone::RotatedSecondOrder(3),
            vec![LinExpr::constant(0.5), LinExpr::var(s), LinExpr::constant(3.0)],
        );
        cp.minimize(LinExpr::var(s));
        let r = solve(&cp, &opts()).unwrap();
        assert!((r.objective - 9.0).abs() < 1e-6);
    }

    #[test]
    fn psd_trace_corner() {
        // X = [[1, a], [a, b]], min 1 + b  s.t. X ⪰ 0
        let mut cp = ConicProgram::new();
        let a = cp.add_var();
        let b = cp.add_var();
        let mut m = SymAffine::constant(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]));
        m.add_term(a, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
        m.add_term(b, DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]));
        cp.add_psd(&m);
        cp.minimize(LinExpr::var(b).with_constant(1.0));
        let r = solve(&cp, &opts()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.objective - 1.0).abs() < 1e-6);
    }

    #[test]
    fn psd_off_diagonal_scaling() {
        // [[1, a], [a, 1]] ⪰ 0 with max a gives a = 1.
        let mut cp = ConicProgram::new();
        let a = cp.add_var();
        let mut m = SymAffine::constant(DMatrix::identity(2, 2));
        m.add_term(a, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
        cp.add_psd(&m);
        cp.minimize(LinExpr::term(a, -1.0));
        let r = solve(&cp, &opts()).unwrap();
        assert!((r.primal[a] - 1.0).abs() < 1e-6);
        // Stationarity in a: -1 - <Z, E01 + E10> = 0, and <Z, I> = 1 by strong duality.
        let dual = crate::conic::unpack_lower(2, &r.cone_duals[0]);
        assert!((dual[(0, 1)] + 0.5).abs() < 1e-6, "{dual}");
        assert!((dual.trace() - 1.0).abs() < 1e-6, "{dual}");
    }

    #[test]
    fn quadratic_objective_and_epigraph_agree() {
        // min (x - 1)² + (y + 2)² + xy  as  x² + xy + y² - 2x + 4y + 5
        let mut cp = ConicProgram::new();
        let v = cp.add_vars(2);
        cp.add_quadratic_objective(&v, &DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]));
        cp.minimize(LinExpr::dot(v.clone(), [-2.0, 4.0]).with_constant(5.0));
        let direct = solve(&cp, &opts()).unwrap();
        let lifted = solve(&cp.epigraph_form().unwrap(), &opts()).unwrap();
        // Stationarity: 2x + y = 2, x + 2y = -4.
        assert!((direct.primal[0] - 8.0 / 3.0).abs() < 1e-7);
        assert!((direct.primal[1] + 10.0 / 3.0).abs() < 1e-7);
        assert!((direct.objective - lifted.objective).abs() < 1e-7);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut cp = ConicProgram::new();
        let x = cp.add_var();
        cp.add_nonneg(LinExpr::var(x).with_constant(-1.0));
        cp.add_nonneg(LinExpr::term(x, -1.0));
        cp.minimize(LinExpr::var(x));
        assert_eq!(solve(&cp, &opts()).unwrap().status, SolveStatus::Infeasible);

        let mut cp = ConicProgram::new();
        let x = cp.add_var();
        cp.minimize(LinExpr::var(x));
        assert_eq!(solve(&cp, &opts()).unwrap().status, SolveStatus::Unbounded);
    }

    #[test]
    fn equality_rows_and_determinism() {
        let mut cp = ConicProgram::new();
        let v = cp.add_vars(2);
        cp.add_eq(LinExpr::dot(v.clone(), [1.0, 1.0]).with_constant(-1.0));
        cp.add_soc(
            LinExpr::constant(1.0),
            vec![LinExpr::var(v.start), LinExpr::var(v.start + 1)],
        );
        cp.minimize(LinExpr::dot(v.clone(), [1.0, 2.0]));
        let r1 = solve(&cp, &opts()).unwrap();
        let r2 = solve(&cp, &opts()).unwrap();
        assert_eq!(r1.status, SolveStatus::Optimal);
        assert_eq!(r1.primal, r2.primal);
        assert!((r1.primal[0] - 1.0).abs() < 1e-6);
    }
}
