//! Homogenization, matrix representations of quadratics, the subspace
//! reduction onto `{Fy = f}`, and inner-approximation certificates for the
//! cone of quadratics that are nonnegative on a homogenized set.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::conic::{solve_optimal, ConicProgram, LinExpr, SymAffine};
use crate::error::{Error, Result};
use crate::linalg::{asymmetry, min_eigenvalue};
use crate::market::FeasibleSet;
use crate::serde_util;

/// Certification threshold on the scaled PSD margin.
pub const CERTIFY_TOL: f64 = 1e-8;

/// `q(x) = xᵀAx + 2bᵀx + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticForm {
    a: DMatrix<f64>,
    b: DVector<f64>,
    c: f64,
}

impl QuadraticForm {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>, c: f64) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::dims("quadratic form A columns", a.nrows(), a.ncols()));
        }
        if b.len() != a.nrows() {
            return Err(Error::dims("quadratic form b", a.nrows(), b.len()));
        }
        let skew = asymmetry(&a);
        if skew > 1e-12 {
            return Err(Error::NotSymmetric(skew));
        }
        Ok(Self { a, b, c })
    }

    pub fn zero(n: usize) -> Self {
        Self {
            a: DMatrix::zeros(n, n),
            b: DVector::zeros(n),
            c: 0.0,
        }
    }

    pub fn n(&self) -> usize {
        self.b.len()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn eval(&self, x: &DVector<f64>) -> f64 {
        x.dot(&(&self.a * x)) + 2.0 * self.b.dot(x) + self.c
    }
}

/// `[[A, b], [bᵀ, c]]`, so that `q(x) = [x; 1]ᵀ 𝓜 [x; 1]`.
pub fn matrix_rep(q: &QuadraticForm) -> DMatrix<f64> {
    let n = q.n();
    let mut m = DMatrix::zeros(n + 1, n + 1);
    m.view_mut((0, 0), (n, n)).copy_from(&q.a);
    m.view_mut((0, n), (n, 1)).copy_from(&q.b);
    m.view_mut((n, 0), (1, n)).copy_from(&q.b.transpose());
    m[(n, n)] = q.c;
    m
}

/// `[z; 1]ᵀ M [z; 1]`.
pub fn eval_homogeneous(m: &DMatrix<f64>, z: &DVector<f64>) -> f64 {
    let mut h = DVector::from_element(z.len() + 1, 1.0);
    h.rows_mut(0, z.len()).copy_from(z);
    h.dot(&(m * &h))
}

/// A homogenized set `{z : zᵀQz ≥ 0, pᵢᵀz ≥ 0, eⱼᵀz = 0}` whose points are
/// `(u, y, τ)` with a `k`-dimensional ball block `u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomogenizedSet {
    pub k: usize,
    /// Length of the middle block.
    pub r: usize,
    #[serde(with = "serde_util::matrix_list")]
    pub quadratic: Vec<DMatrix<f64>>,
    /// `rays[0]` selects the homogenizing coordinate.
    #[serde(with = "serde_util::vector_list")]
    pub rays: Vec<DVector<f64>>,
    #[serde(with = "serde_util::vector_list")]
    pub equalities: Vec<DVector<f64>>,
}

impl HomogenizedSet {
    pub fn dim(&self) -> usize {
        self.k + self.r + 1
    }

    /// Number of inequality rays besides the homogenizing one.
    pub fn m_g(&self) -> usize {
        self.rays.len() - 1
    }

    /// Largest constraint violation at `z`.
    pub fn violation(&self, z: &DVector<f64>) -> f64 {
        let mut v: f64 = 0.0;
        for q in &self.quadratic {
            v = v.max(-z.dot(&(q * z)));
        }
        for p in &self.rays {
            v = v.max(-p.dot(z));
        }
        for e in &self.equalities {
            v = v.max(e.dot(z).abs());
        }
        v
    }

    pub fn contains(&self, z: &DVector<f64>, tol: f64) -> bool {
        self.violation(z) <= tol
    }
}

/// `diag(−I_k, 0_r, 1)`, the matrix of `1 − uᵀu`.
pub fn ball_block(k: usize, r: usize) -> DMatrix<f64> {
    let mut d = DVector::zeros(k + r + 1);
    d.rows_mut(0, k).fill(-1.0);
    d[k + r] = 1.0;
    DMatrix::from_diagonal(&d)
}

fn last_selector(dim: usize) -> DVector<f64> {
    let mut p = DVector::zeros(dim);
    p[dim - 1] = 1.0;
    p
}

/// Homogenization of `{(u, y) : uᵀu ≤ 1, Fy = f, Gy ≤ g}` in `ℝ^{k+n+1}`.
pub fn homogenize(k: usize, x_set: &FeasibleSet) -> HomogenizedSet {
    let n = x_set.n();
    let dim = k + n + 1;
    let row = |a: nalgebra::RowDVector<f64>, c: f64| {
        let mut p = DVector::zeros(dim);
        p.rows_mut(k, n).copy_from(&(-a.transpose()));
        p[dim - 1] = c;
        p
    };
    let mut rays = vec![last_selector(dim)];
    rays.extend((0..x_set.m_g()).map(|i| row(x_set.g_mat.row(i).into_owned(), x_set.g_vec[i])));
    HomogenizedSet {
        k,
        r: n,
        quadratic: vec![ball_block(k, n)],
        rays,
        equalities: (0..x_set.m_f())
            .map(|i| row(x_set.f_mat.row(i).into_owned(), x_set.f_vec[i]))
            .collect(),
    }
}

/// Homogenization of the reduced set `{(u, w) : uᵀu ≤ 1, G(x_p + Hw) ≤ g}`
/// in `ℝ^{k+r+1}`; the equalities are absorbed by the parametrization.
pub fn homogenize_reduced(k: usize, x_set: &FeasibleSet) -> HomogenizedSet {
    let r = x_set.r();
    let dim = k + r + 1;
    let gh = &x_set.g_mat * &x_set.h;
    let slack = &x_set.g_vec - &x_set.g_mat * &x_set.x_p;
    let mut rays = vec![last_selector(dim)];
    for i in 0..x_set.m_g() {
        let mut p = DVector::zeros(dim);
        p.rows_mut(k, r).copy_from(&(-gh.row(i).transpose()));
        p[dim - 1] = slack[i];
        rays.push(p);
    }
    HomogenizedSet {
        k,
        r,
        quadratic: vec![ball_block(k, r)],
        rays,
        equalities: Vec::new(),
    }
}

/// `T` with `T [u; w; 1] = [u; x_p + Hw; 1]`.
fn reduction_map(k: usize, x_set: &FeasibleSet) -> DMatrix<f64> {
    let (n, r) = (x_set.n(), x_set.r());
    let mut t = DMatrix::zeros(k + n + 1, k + r + 1);
    t.view_mut((0, 0), (k, k)).fill_with_identity();
    t.view_mut((k, k), (n, r)).copy_from(&x_set.h);
    t.view_mut((k, k + r), (n, 1)).copy_from(&x_set.x_p);
    t[(k + n, k + r)] = 1.0;
    t
}

/// Restricts the matrix of a quadratic in `(u, y)` to `y = x_p + Hw`.
pub fn lambda_reduce(m: &DMatrix<f64>, k: usize, x_set: &FeasibleSet) -> Result<DMatrix<f64>> {
    let dim = k + x_set.n() + 1;
    if m.shape() != (dim, dim) {
        return Err(Error::dims("matrix to reduce", dim, m.nrows()));
    }
    let t = reduction_map(k, x_set);
    Ok(t.transpose() * m * t)
}

/// Generators of the inner approximation: the PSD cone, the ray on the
/// ball block, pair terms `pᵢpⱼᵀ + pⱼpᵢᵀ`, and per-ray second-order terms
/// `pᵢvᵀ + vpᵢᵀ` with `v = [u; 0; τ]`, `‖u‖ ≤ τ`.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerGenerators {
    pub k: usize,
    pub r: usize,
    pub ball: DMatrix<f64>,
    pub rays: Vec<DVector<f64>>,
}

impl InnerGenerators {
    pub fn dim(&self) -> usize {
        self.k + self.r + 1
    }

    /// Unordered pairs `i < j` of ray indices.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let m = self.rays.len();
        (0..m).flat_map(|i| (i + 1..m).map(move |j| (i, j))).collect()
    }

    pub fn pair(&self, i: usize, j: usize) -> DMatrix<f64> {
        sym_outer(&self.rays[i], &self.rays[j])
    }

    fn soc_vector(&self, tau: f64, u: &DVector<f64>) -> DVector<f64> {
        let mut v = DVector::zeros(self.dim());
        v.rows_mut(0, self.k).copy_from(u);
        v[self.dim() - 1] = tau;
        v
    }

    pub fn soc_term(&self, i: usize, tau: f64, u: &DVector<f64>) -> DMatrix<f64> {
        sym_outer(&self.rays[i], &self.soc_vector(tau, u))
    }
}

/// `abᵀ + baᵀ`.
fn sym_outer(a: &DVector<f64>, b: &DVector<f64>) -> DMatrix<f64> {
    let ab = a * b.transpose();
    &ab + ab.transpose()
}

pub fn build_inner_generators(hd: &HomogenizedSet) -> InnerGenerators {
    InnerGenerators {
        k: hd.k,
        r: hd.r,
        ball: ball_block(hd.k, hd.r),
        rays: hd.rays.clone(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairWeight {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SocTerm {
    pub tau: f64,
    #[serde(with = "serde_util::vector")]
    pub u: DVector<f64>,
}

/// A decomposition `M = psd_part + η·ball + Σ ξᵢⱼ(pᵢpⱼᵀ + pⱼpᵢᵀ) + Σ (pᵢvᵢᵀ + vᵢpᵢᵀ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnerApproxCertificate {
    #[serde(with = "serde_util::matrix")]
    pub psd_part: DMatrix<f64>,
    pub eta: f64,
    pub xi: Vec<PairWeight>,
    pub soc_terms: Vec<SocTerm>,
}

impl InnerApproxCertificate {
    fn trivial(psd_part: DMatrix<f64>, gens: &InnerGenerators) -> Self {
        Self {
            psd_part,
            eta: 0.0,
            xi: gens
                .pairs()
                .into_iter()
                .map(|(i, j)| PairWeight { i, j, weight: 0.0 })
                .collect(),
            soc_terms: gens
                .rays
                .iter()
                .map(|_| SocTerm {
                    tau: 0.0,
                    u: DVector::zeros(gens.k),
                })
                .collect(),
        }
    }

    /// Sum of the non-PSD generator terms.
    pub fn generator_sum(&self, gens: &InnerGenerators) -> DMatrix<f64> {
        let mut s = &gens.ball * self.eta;
        for p in &self.xi {
            s += gens.pair(p.i, p.j) * p.weight;
        }
        for (i, t) in self.soc_terms.iter().enumerate() {
            s += gens.soc_term(i, t.tau, &t.u);
        }
        s
    }

    pub fn recombine(&self, gens: &InnerGenerators) -> DMatrix<f64> {
        &self.psd_part + self.generator_sum(gens)
    }

    /// Smallest eigenvalue of the PSD part.
    pub fn psd_margin(&self) -> f64 {
        min_eigenvalue(&self.psd_part)
    }

    /// Largest violation of the sign constraints on `η`, `ξ` and `(τ, u)`.
    pub fn multiplier_violation(&self) -> f64 {
        let mut v = (-self.eta).max(0.0);
        for p in &self.xi {
            v = v.max(-p.weight);
        }
        for t in &self.soc_terms {
            v = v.max(t.u.norm() - t.tau);
        }
        v
    }
}

/// Variable layout of the generator multipliers inside a program.
#[derive(Debug, Clone)]
pub(crate) struct MultiplierVars {
    eta: usize,
    xi: Vec<((usize, usize), usize)>,
    soc: Vec<(usize, Range<usize>)>,
}

impl MultiplierVars {
    /// Reads multipliers from a primal vector, projects them onto their cones
    /// and puts the remainder of `target` into the PSD part.
    pub(crate) fn certificate(
        &self,
        primal: &[f64],
        target: &DMatrix<f64>,
        gens: &InnerGenerators,
    ) -> InnerApproxCertificate {
        let mut cert = InnerApproxCertificate {
            psd_part: DMatrix::zeros(0, 0),
            eta: primal[self.eta].max(0.0),
            xi: self
                .xi
                .iter()
                .map(|&((i, j), v)| PairWeight {
                    i,
                    j,
                    weight: primal[v].max(0.0),
                })
                .collect(),
            soc_terms: self
                .soc
                .iter()
                .map(|(t, u)| {
                    let u = DVector::from_column_slice(&primal[u.clone()]);
                    SocTerm {
                        tau: primal[*t].max(u.norm()),
                        u,
                    }
                })
                .collect(),
        };
        cert.psd_part = target - cert.generator_sum(gens);
        cert
    }
}

/// Adds multipliers and the constraint `target − generators − slack·I ⪰ 0`.
pub(crate) fn add_inner_membership(
    cp: &mut ConicProgram,
    target: &SymAffine,
    gens: &InnerGenerators,
    slack: Option<usize>,
) -> MultiplierVars {
    let d = gens.dim();
    let mut lmi = target.clone();
    let eta = cp.add_var();
    cp.add_nonneg(LinExpr::var(eta));
    lmi.add_term(eta, -&gens.ball);
    let mut xi = Vec::new();
    for (i, j) in gens.pairs() {
        let v = cp.add_var();
        cp.add_nonneg(LinExpr::var(v));
        lmi.add_term(v, -gens.pair(i, j));
        xi.push(((i, j), v));
    }
    let mut soc = Vec::new();
    for p in &gens.rays {
        let tau = cp.add_var();
        let u = cp.add_vars(gens.k);
        cp.add_soc(LinExpr::var(tau), u.clone().map(LinExpr::var).collect());
        lmi.add_term(tau, -sym_outer(p, &last_selector(d)));
        for (l, var) in u.clone().enumerate() {
            let mut e = DVector::zeros(d);
            e[l] = 1.0;
            lmi.add_term(var, -sym_outer(p, &e));
        }
        soc.push((tau, u));
    }
    if let Some(t) = slack {
        lmi.add_term(t, -DMatrix::identity(d, d));
    }
    cp.add_psd(&lmi);
    MultiplierVars { eta, xi, soc }
}

/// Tries to certify `zᵀMz ≥ 0` on the homogenized set by decomposing `M`
/// over the inner-approximation generators.
///
/// Maximizes the PSD margin `t` of `M − generators ⪰ tI` (with `M` scaled to
/// unit Frobenius norm) and certifies when `t ≥ −CERTIFY_TOL`.
pub fn certify_copositive(m: &DMatrix<f64>, hd: &HomogenizedSet) -> Result<InnerApproxCertificate> {
    let gens = build_inner_generators(hd);
    let d = gens.dim();
    if m.shape() != (d, d) {
        return Err(Error::dims("matrix to certify", d, m.nrows()));
    }
    if !hd.equalities.is_empty() {
        return Err(Error::Unsupported(
            "reduce equality constraints before certifying".into(),
        ));
    }
    let scale = m.norm();
    if scale == 0.0 || min_eigenvalue(m) >= -1e-12 * scale {
        return Ok(InnerApproxCertificate::trivial(m.clone(), &gens));
    }
    let target = m / scale;
    let mut cp = ConicProgram::new();
    let t = cp.add_var();
    cp.add_nonneg(LinExpr::constant(1.0).with_term(t, -1.0));
    let vars = add_inner_membership(&mut cp, &SymAffine::constant(target.clone()), &gens, Some(t));
    cp.minimize(LinExpr::term(t, -1.0));
    let report = match solve_optimal(&cp) {
        Ok(r) => r,
        Err(Error::Infeasible | Error::SolverFailure(_)) => return Err(Error::NotCertified),
        Err(e) => return Err(e),
    };
    if report.primal[t] < -CERTIFY_TOL {
        return Err(Error::NotCertified);
    }
    let primal: Vec<f64> = report.primal.iter().map(|v| v * scale).collect();
    Ok(vars.certificate(&primal, m, &gens))
}

/// Points of a homogenized set without equalities: `τ·[u; w; 1]` with `u` in
/// the ball (half of them on the sphere) and `w` drawn by a hit-and-run walk
/// over `{w : pᵢᵀ[0; w; 1] ≥ 0}` that lands on the boundary a quarter of the time.
pub fn sample_homogenized(hd: &HomogenizedSet, count: usize, seed: u64) -> Result<Vec<DVector<f64>>> {
    if !hd.equalities.is_empty() {
        return Err(Error::Unsupported("sampling needs a set without equalities".into()));
    }
    let (k, r) = (hd.k, hd.r);
    // Rows a·w ≤ b from pᵢ = [0; −a; b].
    let a = DMatrix::from_fn(hd.m_g(), r, |i, j| -hd.rays[i + 1][k + j]);
    let b = DVector::from_fn(hd.m_g(), |i, _| hd.rays[i + 1][k + r]);
    let mut w = interior_point(&a, &b)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cap: f64 = 10.0;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut w_out = w.clone();
        if r > 0 {
            let dir = random_unit(r, &mut rng);
            let (mut lo, mut hi) = (-cap, cap);
            for i in 0..a.nrows() {
                let ad = a.row(i).transpose().dot(&dir);
                let room = b[i] - a.row(i).transpose().dot(&w);
                if ad > 1e-14 {
                    hi = hi.min(room / ad);
                } else if ad < -1e-14 {
                    lo = lo.max(room / ad);
                }
            }
            let (lo, hi) = (lo.min(0.0), hi.max(0.0));
            let step = match rng.random_range(0..8) {
                0 => lo,
                1 => hi,
                _ => rng.random_range(lo..=hi),
            };
            w_out = &w + dir * step;
            if step != lo && step != hi {
                w = w_out.clone();
            }
        }
        let u = if k == 0 {
            DVector::zeros(0)
        } else {
            let s = random_unit(k, &mut rng);
            if rng.random_bool(0.5) {
                s
            } else {
                s * rng.random::<f64>().powf(1.0 / k as f64)
            }
        };
        let tau = rng.random_range(0.1..2.0);
        let mut z = DVector::zeros(k + r + 1);
        z.rows_mut(0, k).copy_from(&(u * tau));
        z.rows_mut(k, r).copy_from(&(w_out * tau));
        z[k + r] = tau;
        out.push(z);
    }
    Ok(out)
}

fn random_unit(dim: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

/// A point of `{w : Aw ≤ b}` maximizing the normalized slack (capped at 1).
fn interior_point(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let r = a.ncols();
    if a.nrows() == 0 {
        return Ok(DVector::zeros(r));
    }
    let mut cp = ConicProgram::new();
    let w = cp.add_vars(r);
    let s = cp.add_var();
    for i in 0..a.nrows() {
        let row = a.row(i);
        cp.add_nonneg(
            LinExpr::dot(w.clone(), row.iter().map(|v| -v))
                .with_term(s, -row.norm().max(1e-12))
                .with_constant(b[i]),
        );
    }
    cp.add_nonneg(LinExpr::constant(1.0).with_term(s, -1.0));
    for j in w.clone() {
        cp.add_nonneg(LinExpr::constant(1e3).with_term(j, -1.0));
        cp.add_nonneg(LinExpr::constant(1e3).with_term(j, 1.0));
    }
    cp.minimize(LinExpr::term(s, -1.0));
    let report = solve_optimal(&cp)?;
    if report.primal[s] < -1e-9 {
        return Err(Error::Infeasible);
    }
    Ok(DVector::from_column_slice(&report.primal[w]))
}
