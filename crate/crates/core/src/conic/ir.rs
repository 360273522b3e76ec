use std::ops::Range;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Sparse affine expression `Σ coef·v[idx] + constant` over the flat variable vector.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn var(idx: usize) -> Self {
        Self::term(idx, 1.0)
    }

    pub fn term(idx: usize, coef: f64) -> Self {
        Self {
            terms: vec![(idx, coef)],
            constant: 0.0,
        }
    }

    /// `Σ coefs[i]·v[vars[i]]`.
    pub fn dot<I>(vars: Range<usize>, coefs: I) -> Self
    where
        I: IntoIterator<Item = f64>,
    {
        Self {
            terms: vars.zip(coefs).filter(|(_, c)| *c != 0.0).collect(),
            constant: 0.0,
        }
    }

    pub fn with_term(mut self, idx: usize, coef: f64) -> Self {
        self.terms.push((idx, coef));
        self
    }

    pub fn with_constant(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    pub fn plus(mut self, other: &LinExpr) -> Self {
        self.terms.extend_from_slice(&other.terms);
        self.constant += other.constant;
        self
    }

    pub fn scale(mut self, factor: f64) -> Self {
        for t in &mut self.terms {
            t.1 *= factor;
        }
        self.constant *= factor;
        self
    }

    pub fn eval(&self, values: &[f64]) -> f64 {
        self.terms.iter().map(|&(i, c)| c * values[i]).sum::<f64>() + self.constant
    }

    pub fn max_var(&self) -> Option<usize> {
        self.terms.iter().map(|t| t.0).max()
    }
}

/// Cone tags. The payload is the cone's matrix or vector dimension.
///
/// `SecondOrder(d)`: `(t, z) ∈ ℝ × ℝ^{d-1}`, `‖z‖ ≤ t`.
/// `RotatedSecondOrder(d)`: `(a, b, z)`, `2ab ≥ ‖z‖²`, `a, b ≥ 0`.
/// `Psd(d)`: `d×d` symmetric matrices, given by the lower triangle in column-major order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cone {
    Nonneg(usize),
    SecondOrder(usize),
    RotatedSecondOrder(usize),
    Psd(usize),
}

impl Cone {
    /// Number of scalar rows in the affine image.
    pub fn rows(&self) -> usize {
        match *self {
            Cone::Nonneg(d) | Cone::SecondOrder(d) | Cone::RotatedSecondOrder(d) => d,
            Cone::Psd(d) => d * (d + 1) / 2,
        }
    }
}

/// Position of entry `(i, j)`, `i ≥ j`, in the packed lower triangle of a `d×d` matrix.
pub fn psd_index(d: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i >= j { (i, j) } else { (j, i) };
    j * d - j * j.saturating_sub(1) / 2 + (i - j)
}

/// Affine image constrained to lie in a cone.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeConstraint {
    pub cone: Cone,
    pub rows: Vec<LinExpr>,
}

impl ConeConstraint {
    /// How far the image at `values` lies outside the cone (0 when inside).
    pub fn violation(&self, values: &[f64]) -> f64 {
        let v: Vec<f64> = self.rows.iter().map(|r| r.eval(values)).collect();
        cone_violation(self.cone, &v)
    }

    pub fn contains(&self, values: &[f64], tol: f64) -> bool {
        self.violation(values) <= tol
    }
}

pub(crate) fn cone_violation(cone: Cone, v: &[f64]) -> f64 {
    match cone {
        Cone::Nonneg(_) => v.iter().fold(0.0f64, |acc, x| acc.max(-x)),
        Cone::SecondOrder(_) => {
            let norm = v[1..].iter().map(|x| x * x).sum::<f64>().sqrt();
            (norm - v[0]).max(0.0)
        }
        Cone::RotatedSecondOrder(_) => {
            let (a, b) = (v[0], v[1]);
            let t = (a + b) / std::f64::consts::SQRT_2;
            let d = (a - b) / std::f64::consts::SQRT_2;
            let norm = (d * d + v[2..].iter().map(|x| x * x).sum::<f64>()).sqrt();
            (norm - t).max(0.0)
        }
        Cone::Psd(d) => {
            let m = unpack_lower(d, v);
            (-crate::linalg::min_eigenvalue(&m)).max(0.0)
        }
    }
}

pub fn unpack_lower(d: usize, packed: &[f64]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(d, d);
    for j in 0..d {
        for i in j..d {
            let v = packed[psd_index(d, i, j)];
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// Symmetric-matrix-valued affine map `C₀ + Σ v[idx]·C_idx`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymAffine {
    pub constant: DMatrix<f64>,
    pub terms: Vec<(usize, DMatrix<f64>)>,
}

impl SymAffine {
    pub fn constant(c: DMatrix<f64>) -> Self {
        Self {
            constant: c,
            terms: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.constant.nrows()
    }

    pub fn add_term(&mut self, idx: usize, coef: DMatrix<f64>) {
        debug_assert_eq!(coef.shape(), self.constant.shape());
        self.terms.push((idx, coef));
    }

    pub fn eval(&self, values: &[f64]) -> DMatrix<f64> {
        let mut m = self.constant.clone();
        for (idx, c) in &self.terms {
            m += c * values[*idx];
        }
        m
    }

    /// Packed lower-triangle rows, ready for a `Cone::Psd` constraint.
    pub fn to_rows(&self) -> Vec<LinExpr> {
        let d = self.dim();
        let mut rows = Vec::with_capacity(d * (d + 1) / 2);
        for j in 0..d {
            for i in j..d {
                let mut e = LinExpr::constant(self.constant[(i, j)]);
                for (idx, c) in &self.terms {
                    if c[(i, j)] != 0.0 {
                        e.terms.push((*idx, c[(i, j)]));
                    }
                }
                rows.push(e);
            }
        }
        rows
    }
}

/// Solver-neutral conic program: minimize a linear objective, plus an optional
/// convex quadratic `vᵀQv`, over the flat variable vector subject to `expr = 0`
/// rows and cone memberships of affine images. Variables are free unless a
/// cone constrains them.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConicProgram {
    num_vars: usize,
    pub objective: LinExpr,
    /// Upper-triangle entries `(i, j, Q_ij)`, `i ≤ j`, of the PSD matrix `Q`.
    pub quadratic: Vec<(usize, usize, f64)>,
    pub equalities: Vec<LinExpr>,
    pub cones: Vec<ConeConstraint>,
}

impl ConicProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn add_var(&mut self) -> usize {
        self.num_vars += 1;
        self.num_vars - 1
    }

    pub fn add_vars(&mut self, count: usize) -> Range<usize> {
        let start = self.num_vars;
        self.num_vars += count;
        start..self.num_vars
    }

    pub fn minimize(&mut self, objective: LinExpr) {
        self.objective = objective;
    }

    /// Adds `xᵀ q x` to the objective, where `x` is the variable block `vars`.
    pub fn add_quadratic_objective(&mut self, vars: &Range<usize>, q: &DMatrix<f64>) {
        assert_eq!(q.nrows(), vars.len());
        for (a, i) in vars.clone().enumerate() {
            for (b, j) in vars.clone().enumerate().skip(a) {
                let v = if a == b {
                    q[(a, a)]
                } else {
                    0.5 * (q[(a, b)] + q[(b, a)])
                };
                if v != 0.0 {
                    self.quadratic.push((i, j, v));
                }
            }
        }
    }

    /// Full objective value at `values`.
    pub fn objective_value(&self, values: &[f64]) -> f64 {
        let quad: f64 = self
            .quadratic
            .iter()
            .map(|&(i, j, q)| {
                if i == j {
                    q * values[i] * values[i]
                } else {
                    2.0 * q * values[i] * values[j]
                }
            })
            .sum();
        self.objective.eval(values) + quad
    }

    /// Equivalent program with the quadratic objective moved into a rotated-cone epigraph.
    pub fn epigraph_form(&self) -> Result<ConicProgram> {
        let mut out = self.clone();
        if self.quadratic.is_empty() {
            return Ok(out);
        }
        out.quadratic.clear();
        let mut vars: Vec<usize> = self.quadratic.iter().flat_map(|&(i, j, _)| [i, j]).collect();
        vars.sort_unstable();
        vars.dedup();
        let pos = |v: usize| vars.binary_search(&v).expect("collected above");
        let mut q = DMatrix::<f64>::zeros(vars.len(), vars.len());
        for &(i, j, v) in &self.quadratic {
            q[(pos(i), pos(j))] += v;
            if i != j {
                q[(pos(j), pos(i))] += v;
            }
        }
        let eig = q.symmetric_eigen();
        let scale = eig.eigenvalues.amax().max(f64::MIN_POSITIVE);
        if eig.eigenvalues.iter().any(|&l| l < -1e-12 * scale) {
            return Err(Error::InvalidInput("quadratic objective is not convex".into()));
        }
        let mut z = Vec::new();
        for (k, &l) in eig.eigenvalues.iter().enumerate() {
            if l > 1e-14 * scale {
                let c = l.sqrt();
                let terms = vars
                    .iter()
                    .enumerate()
                    .map(|(a, &v)| (v, c * eig.eigenvectors[(a, k)]))
                    .filter(|t| t.1 != 0.0)
                    .collect();
                z.push(LinExpr { terms, constant: 0.0 });
            }
        }
        let t = out.add_var();
        out.objective.terms.push((t, 1.0));
        let mut rows = vec![LinExpr::constant(0.5), LinExpr::var(t)];
        rows.extend(z);
        out.add_cone(Cone::RotatedSecondOrder(rows.len()), rows);
        Ok(out)
    }

    pub fn add_eq(&mut self, expr: LinExpr) {
        self.equalities.push(expr);
    }

    pub fn add_cone(&mut self, cone: Cone, rows: Vec<LinExpr>) {
        self.cones.push(ConeConstraint { cone, rows });
    }

    pub fn push(&mut self, c: ConeConstraint) {
        self.cones.push(c);
    }

    /// `expr ≥ 0`.
    pub fn add_nonneg(&mut self, expr: LinExpr) {
        self.add_cone(Cone::Nonneg(1), vec![expr]);
    }

    /// `‖rest‖ ≤ head`.
    pub fn add_soc(&mut self, head: LinExpr, rest: Vec<LinExpr>) {
        let mut rows = Vec::with_capacity(rest.len() + 1);
        rows.push(head);
        rows.extend(rest);
        self.add_cone(Cone::SecondOrder(rows.len()), rows);
    }

    pub fn add_psd(&mut self, m: &SymAffine) {
        self.add_cone(Cone::Psd(m.dim()), m.to_rows());
    }

    pub fn validate(&self) -> Result<()> {
        let check = |e: &LinExpr| match e.max_var() {
            Some(i) if i >= self.num_vars => Err(Error::InvalidInput(format!(
                "expression references variable {i} but program has {}",
                self.num_vars
            ))),
            _ => Ok(()),
        };
        check(&self.objective)?;
        if let Some(&(i, j, _)) = self.quadratic.iter().find(|&&(i, j, _)| i > j || j >= self.num_vars) {
            return Err(Error::InvalidInput(format!("bad quadratic objective entry ({i}, {j})")));
        }
        for e in &self.equalities {
            check(e)?;
        }
        for c in &self.cones {
            if c.rows.len() != c.cone.rows() {
                return Err(Error::dims("cone rows", c.cone.rows(), c.rows.len()));
            }
            match c.cone {
                Cone::SecondOrder(0) | Cone::RotatedSecondOrder(0 | 1) | Cone::Psd(0) => {
                    return Err(Error::InvalidInput(format!("degenerate cone {:?}", c.cone)))
                }
                _ => {}
            }
            for e in &c.rows {
                check(e)?;
            }
        }
        Ok(())
    }

    /// Largest violation of any constraint at `values`.
    pub fn primal_residual(&self, values: &[f64]) -> f64 {
        let eq = self.equalities.iter().map(|e| e.eval(values).abs()).fold(0.0, f64::max);
        self.cones.iter().map(|c| c.violation(values)).fold(eq, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn packed_lower_indexing() {
        let d = 3;
        let order: Vec<(usize, usize)> = (0..d).flat_map(|j| (j..d).map(move |i| (i, j))).collect();
        for (k, &(i, j)) in order.iter().enumerate() {
            assert_eq!(psd_index(d, i, j), k);
            assert_eq!(psd_index(d, j, i), k);
        }
    }

    #[test]
    fn sym_affine_rows_round_trip() {
        let mut a = SymAffine::constant(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 3.0]));
        a.add_term(0, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
        let values = [0.5];
        let rows: Vec<f64> = a.to_rows().iter().map(|r| r.eval(&values)).collect();
        assert_eq!(unpack_lower(2, &rows), a.eval(&values));
    }

    #[test]
    fn violations() {
        assert_eq!(cone_violation(Cone::Nonneg(2), &[1.0, -0.5]), 0.5);
        assert_eq!(cone_violation(Cone::SecondOrder(3), &[5.0, 3.0, 4.0]), 0.0);
        assert!((cone_violation(Cone::SecondOrder(3), &[4.0, 3.0, 4.0]) - 1.0).abs() < 1e-15);
        // 2·(1/2)·1 = 1 ≥ 1²
        assert!(cone_violation(Cone::RotatedSecondOrder(3), &[0.5, 1.0, 1.0]) < 1e-15);
        assert!(cone_violation(Cone::RotatedSecondOrder(3), &[0.5, 0.9, 1.0]) > 0.0);
        assert!((cone_violation(Cone::Psd(2), &[1.0, 0.0, -2.0]) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn validate_catches_bad_indices() {
        let mut cp = ConicProgram::new();
        let x = cp.add_var();
        cp.add_nonneg(LinExpr::var(x + 1));
        assert!(cp.validate().is_err());
    }
}
