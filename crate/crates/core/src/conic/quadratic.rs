use nalgebra::{DMatrix, DVector};

use super::ir::{Cone, ConeConstraint, LinExpr};
use crate::error::{Error, Result};
use crate::linalg::cholesky_upper;

/// Rows `Σ_j a_ij · exprs[j]` for every row `i` of `a`.
pub fn mat_apply(a: &DMatrix<f64>, exprs: &[LinExpr]) -> Vec<LinExpr> {
    assert_eq!(a.ncols(), exprs.len());
    (0..a.nrows())
        .map(|i| {
            let mut out = LinExpr::zero();
            for (j, e) in exprs.iter().enumerate() {
                let c = a[(i, j)];
                if c != 0.0 {
                    out = out.plus(&e.clone().scale(c));
                }
            }
            out
        })
        .collect()
}

/// Affine expressions `offset + basis · v[vars]`, one per row of `basis`.
pub fn affine_exprs(offset: &DVector<f64>, basis: &DMatrix<f64>, vars: std::ops::Range<usize>) -> Vec<LinExpr> {
    assert_eq!(basis.ncols(), vars.len());
    (0..basis.nrows())
        .map(|i| LinExpr::dot(vars.clone(), basis.row(i).iter().copied()).with_constant(offset[i]))
        .collect()
}

/// `bound ≥ ‖z‖²` as the rotated cone row `(½, bound, z)`.
pub fn squared_norm_epigraph(bound: LinExpr, z: Vec<LinExpr>) -> ConeConstraint {
    let mut rows = Vec::with_capacity(z.len() + 2);
    rows.push(LinExpr::constant(0.5));
    rows.push(bound);
    rows.extend(z);
    ConeConstraint {
        cone: Cone::RotatedSecondOrder(rows.len()),
        rows,
    }
}

/// `bound ≥ xᵀ Q x` given the upper factor `u` with `Q = uᵀu`.
pub fn factored_quadratic_to_soc(u: &DMatrix<f64>, x: &[LinExpr], bound: LinExpr) -> ConeConstraint {
    squared_norm_epigraph(bound, mat_apply(u, x))
}

/// `bound ≥ xᵀ Q x`; factors `q` first.
pub fn quadratic_to_soc(q: &DMatrix<f64>, x: &[LinExpr], bound: LinExpr) -> Result<ConeConstraint> {
    if q.nrows() != x.len() {
        return Err(Error::dims("quadratic_to_soc", q.nrows(), x.len()));
    }
    let u = cholesky_upper(q)?;
    Ok(factored_quadratic_to_soc(&u, x, bound))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn vars(n: usize) -> Vec<LinExpr> {
        (0..n).map(LinExpr::var).collect()
    }

    #[test]
    fn unit_ball_row() {
        let c = quadratic_to_soc(&DMatrix::identity(2, 2), &vars(2), LinExpr::constant(1.0)).unwrap();
        assert!(c.contains(&[0.6, 0.8], 1e-12));
        assert!(!c.contains(&[0.6, 0.81], 1e-9));
    }

    #[test]
    fn scalar_quadratic() {
        // s ≥ 4x² at x = 0.5
        let c = quadratic_to_soc(&DMatrix::from_element(1, 1, 4.0), &vars(1), LinExpr::var(1)).unwrap();
        assert!(c.contains(&[0.5, 1.0], 1e-12));
        assert!(!c.contains(&[0.5, 0.999], 1e-6));
    }

    #[test]
    fn random_spd_membership_matches_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = DMatrix::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0));
        let q = &b * b.transpose() + DMatrix::identity(4, 4) * 0.05;
        let c = quadratic_to_soc(&q, &vars(4), LinExpr::var(4)).unwrap();
        for _ in 0..200 {
            let x = DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
            let val = x.dot(&(&q * &x));
            let s = val * rng.random_range(0.5..1.5);
            let mut point: Vec<f64> = x.iter().copied().collect();
            point.push(s);
            let inside = c.violation(&point) <= 1e-9;
            if (s - val).abs() > 1e-8 {
                assert_eq!(inside, s >= val, "s={s}, xᵀQx={val}");
            }
        }
    }

    #[test]
    fn rejects_indefinite() {
        let q = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(
            quadratic_to_soc(&q, &vars(2), LinExpr::var(2)),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }
}
