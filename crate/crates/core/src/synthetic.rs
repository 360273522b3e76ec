//! Seeded random instances for demos, tests and benchmarks.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::market::{FeasibleSet, MarketParams};
use crate::uncertainty::{EllipsoidalMu, UncertaintySet};

fn normal_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Covariance with volatilities in `[0.1, 0.4]` and a random, well-conditioned
/// correlation structure.
pub fn covariance(n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let a = normal_matrix(n, n, rng);
    let s = &a * a.transpose() / n as f64 + DMatrix::identity(n, n) * 0.5;
    let vols = DVector::from_fn(n, |_, _| rng.random_range(0.1..0.4));
    DMatrix::from_fn(n, n, |i, j| {
        s[(i, j)] / (s[(i, i)] * s[(j, j)]).sqrt() * vols[i] * vols[j]
    })
}

/// Expected returns in `[0.02, 0.15]`.
pub fn mean(n: usize, rng: &mut impl Rng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(0.02..0.15))
}

pub fn params(n: usize, rng: &mut impl Rng) -> MarketParams {
    MarketParams::new(mean(n, rng), covariance(n, rng)).expect("generated covariance is positive definite")
}

/// `count` scenarios; with `shared_sigma` they differ only in the mean.
pub fn scenarios(n: usize, count: usize, shared_sigma: bool, rng: &mut impl Rng) -> Vec<MarketParams> {
    let sigma = covariance(n, rng);
    (0..count)
        .map(|_| {
            let s = if shared_sigma {
                sigma.clone()
            } else {
                covariance(n, rng)
            };
            MarketParams::new(mean(n, rng), s).expect("generated covariance is positive definite")
        })
        .collect()
}

pub fn finite_set(n: usize, count: usize, shared_sigma: bool, rng: &mut impl Rng) -> UncertaintySet {
    UncertaintySet::finite(scenarios(n, count, shared_sigma, rng)).expect("consistent scenarios")
}

pub fn polytopic_set(n: usize, count: usize, shared_sigma: bool, rng: &mut impl Rng) -> UncertaintySet {
    UncertaintySet::polytopic(scenarios(n, count, shared_sigma, rng)).expect("consistent vertices")
}

/// Ellipsoid around a random mean with shape entries of size about `radius`.
pub fn ellipsoid(n: usize, k: usize, radius: f64, rng: &mut impl Rng) -> EllipsoidalMu {
    loop {
        let m = normal_matrix(n, k, rng) * radius;
        if let Ok(e) = EllipsoidalMu::new(mean(n, rng), m, covariance(n, rng)) {
            return e;
        }
    }
}

/// Budget constraint plus `m_g` random inequalities that leave the
/// equal-weight portfolio strictly feasible.
pub fn feasible_set(n: usize, m_g: usize, rng: &mut impl Rng) -> FeasibleSet {
    let g = normal_matrix(m_g, n, rng);
    let x0 = DVector::from_element(n, 1.0 / n as f64);
    let gv = &g * &x0 + DVector::from_fn(m_g, |_, _| rng.random_range(0.1..1.0));
    FeasibleSet::budget(n)
        .with_inequalities(&g, &gv)
        .expect("equal weights are feasible")
}
