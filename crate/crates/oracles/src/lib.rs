//! Brute-force reference solutions on the probability simplex.
//!
//! Everything here avoids the conic solver: small convex QPs are solved by
//! enumerating active sets of the KKT system, the max-return problem by a
//! closed form on each face, and min-max problems by exhaustive grids.

use nalgebra::{DMatrix, DVector};

/// Feasibility and sign slack for KKT candidates.
const KKT_TOL: f64 = 1e-10;

/// Minimizes `½yᵀPy + qᵀy` subject to `Ay ≤ b`, `Ey = e` for strictly convex
/// `P` by trying every active set. Exponential in the row count of `A`.
pub fn qp_active_set(
    p: &DMatrix<f64>,
    q: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    e_mat: &DMatrix<f64>,
    e_vec: &DVector<f64>,
) -> Option<(DVector<f64>, f64)> {
    let n = q.len();
    let m = a.nrows();
    assert!(m < 20, "active-set enumeration is exponential");
    let me = e_mat.nrows();
    let mut best: Option<(DVector<f64>, f64)> = None;
    for mask in 0u32..(1 << m) {
        let active: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        let rows = me + active.len();
        if rows > n {
            continue;
        }
        let dim = n + rows;
        let mut kkt = DMatrix::zeros(dim, dim);
        let mut rhs = DVector::zeros(dim);
        kkt.view_mut((0, 0), (n, n)).copy_from(p);
        rhs.rows_mut(0, n).copy_from(&-q);
        let constraint_rows = (0..me)
            .map(|i| (e_mat.row(i).into_owned(), e_vec[i]))
            .chain(active.iter().map(|&i| (a.row(i).into_owned(), b[i])));
        for (r, (row, val)) in constraint_rows.enumerate() {
            kkt.view_mut((n + r, 0), (1, n)).copy_from(&row);
            kkt.view_mut((0, n + r), (n, 1)).copy_from(&row.transpose());
            rhs[n + r] = val;
        }
        let Some(sol) = kkt.clone().lu().solve(&rhs) else {
            continue;
        };
        if (&kkt * &sol - &rhs).amax() > 1e-8 * (1.0 + rhs.amax()) {
            continue;
        }
        let y = sol.rows(0, n).into_owned();
        // Stationarity reads Py + q + Eᵀν + Aᵀλ = 0, so active rows need λ ≥ 0.
        let dual_ok = (0..active.len()).all(|j| sol[n + me + j] >= -KKT_TOL);
        let primal_ok = (0..m).all(|i| a.row(i).dot(&y.transpose()) <= b[i] + KKT_TOL);
        if dual_ok && primal_ok {
            let val = 0.5 * y.dot(&(p * &y)) + q.dot(&y);
            if best.as_ref().is_none_or(|(_, v)| val < *v) {
                best = Some((y, val));
            }
        }
    }
    best
}

fn simplex_rows(n: usize) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>, DVector<f64>) {
    (
        -DMatrix::identity(n, n),
        DVector::zeros(n),
        DMatrix::from_element(1, n, 1.0),
        DVector::from_element(1, 1.0),
    )
}

/// `max μᵀy − λyᵀΣy` over the simplex.
pub fn risk_adjusted_value(mu: &DVector<f64>, sigma: &DMatrix<f64>, lambda: f64) -> Option<(DVector<f64>, f64)> {
    let (a, b, e, ev) = simplex_rows(mu.len());
    qp_active_set(&(sigma * (2.0 * lambda)), &-mu, &a, &b, &e, &ev).map(|(y, v)| (y, -v))
}

/// `min yᵀΣy` over the simplex subject to `μⱼᵀy ≥ ρ` for every listed mean.
pub fn min_variance_value(means: &[&DVector<f64>], sigma: &DMatrix<f64>, rho: f64) -> Option<(DVector<f64>, f64)> {
    let n = sigma.nrows();
    let (mut a, mut b, e, ev) = simplex_rows(n);
    for mu in means {
        let r = a.nrows();
        a = a.insert_row(r, 0.0);
        a.row_mut(r).copy_from(&(-mu.transpose()));
        b = b.push(-rho);
    }
    qp_active_set(&(sigma * 2.0), &DVector::zeros(n), &a, &b, &e, &ev)
}

/// `max μᵀy` over the simplex subject to `yᵀΣy ≤ σ²`.
///
/// On each face the optimum with the risk constraint active lies on the ray
/// from the face's minimum-variance point along `Σ⁻¹(μ − c·e)`; inactive
/// optima are vertices.
pub fn max_return_value(mu: &DVector<f64>, sigma: &DMatrix<f64>, sigma2: f64) -> Option<(DVector<f64>, f64)> {
    let n = mu.len();
    let mut best: Option<(DVector<f64>, f64)> = None;
    let mut offer = |y: DVector<f64>| {
        let v = mu.dot(&y);
        if best.as_ref().is_none_or(|(_, b)| v > *b) {
            best = Some((y, v));
        }
    };
    for i in 0..n {
        if sigma[(i, i)] <= sigma2 {
            let mut y = DVector::zeros(n);
            y[i] = 1.0;
            offer(y);
        }
    }
    for mask in 1u32..(1 << n) {
        let face: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        if face.len() < 2 {
            continue;
        }
        let s = sigma.select_rows(&face).select_columns(&face);
        let m = mu.select_rows(&face);
        let Some(inv) = s.clone().try_inverse() else { continue };
        let ones = DVector::from_element(face.len(), 1.0);
        let si_e = &inv * &ones;
        let denom = ones.dot(&si_e);
        let base = &si_e / denom;
        let v0 = 1.0 / denom;
        if v0 > sigma2 {
            continue;
        }
        let c = ones.dot(&(&inv * &m)) / denom;
        let d = &inv * (&m - &ones * c);
        let dvar = d.dot(&(&s * &d));
        if dvar <= 1e-300 {
            continue;
        }
        let t = ((sigma2 - v0) / dvar).sqrt();
        let yf = base + d * t;
        if yf.iter().all(|&v| v >= -1e-12) {
            let mut y = DVector::zeros(n);
            for (j, &i) in face.iter().enumerate() {
                y[i] = yf[j].max(0.0);
            }
            offer(y);
        }
    }
    best
}

/// Maximum Sharpe ratio over the simplex, from `min yᵀΣy` subject to
/// `(μ − r_f)ᵀy = 1`, `y ≥ 0`. `None` when no asset beats the risk-free rate.
pub fn max_sharpe_value(mu: &DVector<f64>, sigma: &DMatrix<f64>, rf: f64) -> Option<(DVector<f64>, f64)> {
    let n = mu.len();
    let excess = mu.add_scalar(-rf);
    let e = DMatrix::from_row_slice(1, n, excess.as_slice());
    let (y, var) = qp_active_set(
        &(sigma * 2.0),
        &DVector::zeros(n),
        &-DMatrix::identity(n, n),
        &DVector::zeros(n),
        &e,
        &DVector::from_element(1, 1.0),
    )?;
    let x = &y / y.sum();
    Some((x, 1.0 / var.sqrt()))
}

/// Sharpe ratio `(μᵀx − r_f)/√(xᵀΣx)`.
pub fn sharpe_ratio(mu: &DVector<f64>, sigma: &DMatrix<f64>, rf: f64, x: &DVector<f64>) -> f64 {
    (mu.dot(x) - rf) / x.dot(&(sigma * x)).sqrt()
}

/// Every point of the simplex in `ℝⁿ` whose coordinates are multiples of `1/steps`.
pub fn simplex_grid(n: usize, steps: usize) -> Vec<DVector<f64>> {
    fn fill(prefix: &mut Vec<usize>, n: usize, left: usize, steps: usize, out: &mut Vec<DVector<f64>>) {
        if prefix.len() == n - 1 {
            let mut v: Vec<f64> = prefix.iter().map(|&c| c as f64 / steps as f64).collect();
            v.push(left as f64 / steps as f64);
            out.push(DVector::from_vec(v));
            return;
        }
        for c in 0..=left {
            prefix.push(c);
            fill(prefix, n, left - c, steps, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    fill(&mut Vec::new(), n, steps, steps, &mut out);
    out
}

/// Smallest value of `max_i regret_i(x)` over `points`, skipping infeasible ones.
pub fn grid_min_max<F, G>(points: &[DVector<f64>], feasible: F, regret: G) -> Option<(DVector<f64>, f64)>
where
    F: Fn(&DVector<f64>) -> bool,
    G: Fn(&DVector<f64>) -> f64,
{
    points
        .iter()
        .filter(|x| feasible(x))
        .map(|x| (x.clone(), regret(x)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
}

/// Model family on the simplex, mirrored here so the oracles stay independent
/// of the library under test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Model {
    MinVariance(f64),
    MaxReturn(f64),
    RiskAdjusted(f64),
    MaxSharpe(f64),
}

impl Model {
    pub fn objective(self, mu: &DVector<f64>, sigma: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
        match self {
            Model::MinVariance(_) => x.dot(&(sigma * x)),
            Model::MaxReturn(_) => mu.dot(x),
            Model::RiskAdjusted(l) => mu.dot(x) - l * x.dot(&(sigma * x)),
            Model::MaxSharpe(rf) => sharpe_ratio(mu, sigma, rf, x),
        }
    }

    /// Best objective with hindsight at `(μ, Σ)`, constrained by that scenario alone.
    pub fn hindsight(self, mu: &DVector<f64>, sigma: &DMatrix<f64>) -> Option<f64> {
        match self {
            Model::MinVariance(rho) => min_variance_value(&[mu], sigma, rho).map(|r| r.1),
            Model::MaxReturn(s2) => max_return_value(mu, sigma, s2).map(|r| r.1),
            Model::RiskAdjusted(l) => risk_adjusted_value(mu, sigma, l).map(|r| r.1),
            Model::MaxSharpe(rf) => max_sharpe_value(mu, sigma, rf).map(|r| r.1),
        }
    }

    /// Whether `x` satisfies the model's side constraint under every scenario.
    pub fn robust_feasible(self, scenarios: &[(DVector<f64>, DMatrix<f64>)], x: &DVector<f64>) -> bool {
        match self {
            Model::MinVariance(rho) => scenarios.iter().all(|(mu, _)| mu.dot(x) >= rho),
            Model::MaxReturn(s2) => scenarios.iter().all(|(_, s)| x.dot(&(s * x)) <= s2),
            _ => true,
        }
    }

    fn minimizes(self) -> bool {
        matches!(self, Model::MinVariance(_))
    }

    /// Regret of `x` at one scenario given its hindsight value.
    pub fn regret(self, z: f64, mu: &DVector<f64>, sigma: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
        let f = self.objective(mu, sigma, x);
        if self.minimizes() {
            f - z
        } else {
            z - f
        }
    }
}

/// Hindsight values per scenario and the smallest max-regret over the robustly
/// feasible points of the `steps` grid. `None` if a hindsight problem or the
/// whole grid is infeasible.
pub fn grid_min_max_regret(
    model: Model,
    scenarios: &[(DVector<f64>, DMatrix<f64>)],
    steps: usize,
) -> Option<(Vec<f64>, DVector<f64>, f64)> {
    let n = scenarios.first()?.0.len();
    let z: Option<Vec<f64>> = scenarios.iter().map(|(mu, s)| model.hindsight(mu, s)).collect();
    let z = z?;
    let pts = simplex_grid(n, steps);
    let (x, r) = grid_min_max(
        &pts,
        |x| model.robust_feasible(scenarios, x),
        |x| {
            scenarios
                .iter()
                .zip(&z)
                .map(|((mu, s), &zi)| model.regret(zi, mu, s, x))
                .fold(f64::NEG_INFINITY, f64::max)
        },
    )?;
    Some((z, x, r))
}

/// Minimum of `zᵀMz / ‖z‖²` over the given points.
pub fn min_rayleigh(m: &DMatrix<f64>, points: &[DVector<f64>]) -> f64 {
    points
        .iter()
        .map(|z| z.dot(&(m * z)) / z.norm_squared())
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sigma() -> DMatrix<f64> {
        DMatrix::from_row_slice(3, 3, &[0.04, 0.01, 0.0, 0.01, 0.09, 0.02, 0.0, 0.02, 0.16])
    }

    fn grid_best(f: impl Fn(&DVector<f64>) -> f64) -> f64 {
        simplex_grid(3, 400).iter().map(f).fold(f64::NEG_INFINITY, f64::max)
    }

    #[test]
    fn grid_counts() {
        assert_eq!(simplex_grid(3, 100).len(), 5151);
        assert_eq!(simplex_grid(1, 7).len(), 1);
        assert!(simplex_grid(4, 10).iter().all(|x| (x.sum() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn risk_adjusted_matches_grid() {
        let mu = DVector::from_vec(vec![0.05, 0.09, 0.12]);
        let (y, v) = risk_adjusted_value(&mu, &sigma(), 2.0).unwrap();
        let g = grid_best(|x| mu.dot(x) - 2.0 * x.dot(&(sigma() * x)));
        assert!(v >= g - 1e-12 && v - g < 1e-4);
        assert!((y.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn min_variance_matches_grid() {
        let mu = DVector::from_vec(vec![0.05, 0.09, 0.12]);
        let (_, v) = min_variance_value(&[&mu], &sigma(), 0.1).unwrap();
        let g = -grid_best(|x| {
            if mu.dot(x) >= 0.1 {
                -x.dot(&(sigma() * x))
            } else {
                f64::NEG_INFINITY
            }
        });
        assert!(v <= g + 1e-12 && g - v < 1e-3, "{v} vs {g}");
        assert!(min_variance_value(&[&mu], &sigma(), 0.2).is_none());
    }

    #[test]
    fn max_return_matches_grid() {
        let mu = DVector::from_vec(vec![0.05, 0.09, 0.12]);
        for s2 in [0.03, 0.05, 0.2] {
            let (y, v) = max_return_value(&mu, &sigma(), s2).unwrap();
            assert!(y.dot(&(sigma() * &y)) <= s2 + 1e-12);
            let g = grid_best(|x| {
                if x.dot(&(sigma() * x)) <= s2 {
                    mu.dot(x)
                } else {
                    f64::NEG_INFINITY
                }
            });
            assert!(v >= g - 1e-12 && v - g < 1e-3, "{s2}: {v} vs {g}");
        }
        assert!(max_return_value(&mu, &sigma(), 0.001).is_none());
    }

    #[test]
    fn max_sharpe_matches_grid() {
        let mu = DVector::from_vec(vec![0.05, 0.09, 0.12]);
        let (x, v) = max_sharpe_value(&mu, &sigma(), 0.01).unwrap();
        assert!((sharpe_ratio(&mu, &sigma(), 0.01, &x) - v).abs() < 1e-10);
        let g = grid_best(|x| sharpe_ratio(&mu, &sigma(), 0.01, x));
        assert!(v >= g - 1e-12 && v - g < 1e-4);
        assert!(max_sharpe_value(&mu, &sigma(), 0.5).is_none());
    }
}
