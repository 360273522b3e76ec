//! Classical solvers against the active-set and closed-form oracles.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use relrobust::market::FeasibleSet;
use relrobust::mvo::{efficient_frontier, sharpe_lift, solve_variant, value_function, MvoVariant};
use relrobust::synthetic;
use relrobust_oracles as oracle;

const TOL: f64 = 1e-6;

#[test]
fn risk_adjusted_matches_active_set() {
    for seed in 0..25 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 2 + (seed as usize % 4);
        let p = synthetic::params(n, &mut rng);
        let lambda = 0.5 + seed as f64 * 0.3;
        let s = solve_variant(&p, &FeasibleSet::simplex(n), MvoVariant::RiskAdjusted(lambda)).unwrap();
        let (_, want) = oracle::risk_adjusted_value(p.mu(), p.sigma(), lambda).unwrap();
        assert!(
            (s.objective - want).abs() < TOL,
            "seed {seed}: {} vs {want}",
            s.objective
        );
    }
}

#[test]
fn min_variance_matches_active_set() {
    for seed in 0..25 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let n = 2 + (seed as usize % 4);
        let p = synthetic::params(n, &mut rng);
        let (lo, hi) = (p.mu().min(), p.mu().max());
        let rho = lo + (hi - lo) * (seed as f64 % 5.0) / 5.0;
        let s = solve_variant(&p, &FeasibleSet::simplex(n), MvoVariant::MinVariance(rho)).unwrap();
        let (_, want) = oracle::min_variance_value(&[p.mu()], p.sigma(), rho).unwrap();
        assert!(
            (s.objective - want).abs() < TOL,
            "seed {seed}: {} vs {want}",
            s.objective
        );
    }
}

#[test]
fn max_return_matches_face_enumeration() {
    for seed in 0..25 {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
        let n = 2 + (seed as usize % 3);
        let p = synthetic::params(n, &mut rng);
        let min_var = oracle::min_variance_value(&[], p.sigma(), f64::NEG_INFINITY).unwrap().1;
        let sigma2 = min_var * (1.1 + seed as f64 * 0.2);
        let s = solve_variant(&p, &FeasibleSet::simplex(n), MvoVariant::MaxReturn(sigma2)).unwrap();
        let (_, want) = oracle::max_return_value(p.mu(), p.sigma(), sigma2).unwrap();
        assert!(
            (s.objective - want).abs() < TOL,
            "seed {seed}: {} vs {want}",
            s.objective
        );
        assert!(s.x.dot(&(p.sigma() * &s.x)) <= sigma2 + TOL);
    }
}

#[test]
fn max_sharpe_matches_oracle_and_lift() {
    for seed in 0..25 {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + seed);
        let n = 2 + (seed as usize % 4);
        let p = synthetic::params(n, &mut rng);
        let rf = 0.01;
        let x_set = FeasibleSet::simplex(n);
        let (_, want) = oracle::max_sharpe_value(p.mu(), p.sigma(), rf).unwrap();
        let lift = sharpe_lift(&p, &x_set, rf).unwrap();
        assert!((lift.value - want).abs() < TOL, "seed {seed}: {} vs {want}", lift.value);
        let got = oracle::sharpe_ratio(p.mu(), p.sigma(), rf, &lift.portfolio());
        assert!((got - want).abs() < TOL);
        assert!((value_function(&p, &x_set, MvoVariant::MaxSharpe(rf)).unwrap() - want).abs() < TOL);
    }
}

#[test]
fn grid_never_beats_the_solver() {
    let grid = oracle::simplex_grid(3, 50);
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(400 + seed);
        let p = synthetic::params(3, &mut rng);
        let v = MvoVariant::RiskAdjusted(2.0);
        let s = solve_variant(&p, &FeasibleSet::simplex(3), v).unwrap();
        let best = grid
            .iter()
            .map(|x| v.objective(&p, x))
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(best <= s.objective + 1e-9);
    }
}

#[test]
fn frontier_risk_is_nondecreasing_above_the_minimum_variance_return() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let p = synthetic::params(4, &mut rng);
    let x_set = FeasibleSet::simplex(4);
    let (y0, _) = oracle::min_variance_value(&[], p.sigma(), f64::NEG_INFINITY).unwrap();
    let start = p.mu().dot(&y0);
    let grid: Vec<f64> = (0..=10)
        .map(|i| start + (p.mu().max() - start) * i as f64 / 10.0)
        .collect();
    let pts = efficient_frontier(&p, &x_set, &grid).unwrap();
    for w in pts.windows(2) {
        assert!(w[1].risk >= w[0].risk - 1e-7, "{:?}", w);
    }
    for (pt, rho) in pts.iter().zip(&grid) {
        let (_, var) = oracle::min_variance_value(&[p.mu()], p.sigma(), *rho).unwrap();
        assert!(
            (pt.risk - var.sqrt()).abs() < 1e-5,
            "rho {rho}: {} vs {}",
            pt.risk,
            var.sqrt()
        );
    }
}

#[test]
fn solutions_respect_random_inequalities() {
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
        let n = 4;
        let p = synthetic::params(n, &mut rng);
        let x_set = synthetic::feasible_set(n, 2, &mut rng);
        let s = solve_variant(&p, &x_set, MvoVariant::RiskAdjusted(1.0)).unwrap();
        assert!(x_set.violation(&s.x) < 1e-7);
    }
}
