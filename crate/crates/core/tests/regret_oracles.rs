//! Scenario and polytope regret solvers against brute-force grids.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relrobust::absolute::{solve_absolute, worst_case_objective};
use relrobust::market::{FeasibleSet, MarketParams};
use relrobust::mvo::{value_function, MvoVariant};
use relrobust::scenarios::{evaluate_hull_regret, evaluate_max_regret, solve_relative, Adversary, ScenarioOptions};
use relrobust::synthetic;
use relrobust::uncertainty::UncertaintySet;
use relrobust_oracles::{self as oracle, Model};

fn pairs(scen: &[MarketParams]) -> Vec<(DVector<f64>, DMatrix<f64>)> {
    scen.iter().map(|p| (p.mu().clone(), p.sigma().clone())).collect()
}

/// A variant whose side constraint is satisfiable by equal weights under every scenario.
fn variant_for(kind: usize, scen: &[MarketParams]) -> (MvoVariant, Model) {
    let n = scen[0].n();
    let eq = DVector::from_element(n, 1.0 / n as f64);
    match kind {
        0 => {
            let rho = scen.iter().map(|p| p.mu().dot(&eq)).fold(f64::INFINITY, f64::min) - 0.005;
            (MvoVariant::MinVariance(rho), Model::MinVariance(rho))
        }
        1 => {
            let s2 = scen.iter().map(|p| eq.dot(&(p.sigma() * &eq))).fold(0.0, f64::max) * 1.2;
            (MvoVariant::MaxReturn(s2), Model::MaxReturn(s2))
        }
        2 => (MvoVariant::RiskAdjusted(2.0), Model::RiskAdjusted(2.0)),
        _ => (MvoVariant::MaxSharpe(0.0), Model::MaxSharpe(0.0)),
    }
}

#[test]
fn no_grid_portfolio_beats_the_certificate() {
    for seed in 0..12 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let kind = seed as usize % 4;
        let n = 2 + (seed as usize / 4) % 2;
        let k = rng.random_range(2..=4);
        let scen = synthetic::scenarios(n, k, kind == 3, &mut rng);
        let u = UncertaintySet::finite(scen.clone()).unwrap();
        let (v, model) = variant_for(kind, &scen);
        let cert = solve_relative(
            &u,
            &FeasibleSet::simplex(n),
            v,
            Adversary::Omniscient,
            &ScenarioOptions::default(),
        )
        .unwrap();
        let (z, _, best) = oracle::grid_min_max_regret(model, &pairs(&scen), 100).unwrap();
        for (a, b) in cert.hindsight_values.iter().zip(&z) {
            assert!((a - b).abs() < 1e-6, "seed {seed}: hindsight {a} vs {b}");
        }
        assert!(
            best >= cert.gamma - 1e-3,
            "seed {seed}: grid {best} below gamma {}",
            cert.gamma
        );
        assert!(
            cert.gamma <= best + 1e-6,
            "seed {seed}: gamma {} above grid {best}",
            cert.gamma
        );
    }
}

#[test]
fn vertex_regret_dominates_hull_samples() {
    for seed in 0..6 {
        let mut rng = ChaCha8Rng::seed_from_u64(50 + seed);
        let n = 3;
        let u = synthetic::polytopic_set(n, 3, seed % 2 == 0, &mut rng);
        let x_set = FeasibleSet::simplex(n);
        let v = MvoVariant::RiskAdjusted(1.5);
        let vertices = u.scenarios().unwrap();
        for x in [
            DVector::from_element(n, 1.0 / 3.0),
            DVector::from_vec(vec![0.7, 0.2, 0.1]),
        ] {
            let (at_vertices, _) = evaluate_max_regret(&x, &u, v, &x_set, Adversary::Omniscient).unwrap();
            let (in_hull, _) = evaluate_hull_regret(&x, vertices, v, &x_set, 200, seed).unwrap();
            assert!(in_hull <= at_vertices + 1e-6, "seed {seed}: {in_hull} > {at_vertices}");
        }
    }
}

#[test]
fn polytope_certificate_covers_hull_for_constrained_models() {
    for seed in 0..4 {
        let mut rng = ChaCha8Rng::seed_from_u64(70 + seed);
        let scen = synthetic::scenarios(3, 3, false, &mut rng);
        let u = UncertaintySet::polytopic(scen.clone()).unwrap();
        let (v, _) = variant_for(seed as usize % 2, &scen);
        let x_set = FeasibleSet::simplex(3);
        let opts = ScenarioOptions {
            hull_samples: 200,
            seed,
        };
        let cert = solve_relative(&u, &x_set, v, Adversary::Omniscient, &opts).unwrap();
        let (in_hull, _) = evaluate_hull_regret(&cert.x, &scen, v, &x_set, 300, seed + 1000).unwrap();
        assert!(in_hull <= cert.gamma + 1e-6, "seed {seed}: {in_hull} > {}", cert.gamma);
    }
}

#[test]
fn value_function_is_convex_along_segments() {
    let x_set = FeasibleSet::simplex(3);
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let shared = seed % 2 == 1;
        let scen = synthetic::scenarios(3, 2, shared, &mut rng);
        let a: f64 = rng.random_range(0.0..1.0);
        let mid = MarketParams::convex_combination(&[&scen[0], &scen[1]], &[a, 1.0 - a]).unwrap();
        let mut variants = vec![MvoVariant::RiskAdjusted(1.0 + seed as f64 * 0.2)];
        if shared {
            // Feasible: the lowest-variance single asset fits under the cap.
            variants.push(MvoVariant::MaxReturn(scen[0].sigma().diagonal().min() * 1.5));
            variants.push(MvoVariant::MaxSharpe(0.01));
        }
        for v in variants {
            let z = |p: &MarketParams| value_function(p, &x_set, v).unwrap();
            let lhs = z(&mid);
            let rhs = a * z(&scen[0]) + (1.0 - a) * z(&scen[1]);
            assert!(lhs <= rhs + 1e-7, "seed {seed} {v:?}: {lhs} > {rhs}");
        }
    }
}

#[test]
fn absolute_solution_maximizes_worst_case_on_grid() {
    let grid = oracle::simplex_grid(3, 100);
    for seed in 0..6 {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
        let scen = synthetic::scenarios(3, 3, false, &mut rng);
        let u = UncertaintySet::finite(scen.clone()).unwrap();
        let v = MvoVariant::RiskAdjusted(1.0);
        let model = Model::RiskAdjusted(1.0);
        let s = solve_absolute(&u, &FeasibleSet::simplex(3), v).unwrap();
        let ps = pairs(&scen);
        let grid_best = grid
            .iter()
            .map(|x| {
                ps.iter()
                    .map(|(m, c)| model.objective(m, c, x))
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(f64::NEG_INFINITY, f64::max);
        let got = worst_case_objective(&u, v, &s.x);
        assert!(got >= grid_best - 1e-7, "seed {seed}: {got} < {grid_best}");
        assert!(got <= grid_best + 1e-3);
    }
}

#[test]
fn fortuitous_regret_never_exceeds_omniscient() {
    for seed in 0..6 {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + seed);
        let scen = synthetic::scenarios(3, 3, false, &mut rng);
        let u = UncertaintySet::finite(scen.clone()).unwrap();
        let (v, _) = variant_for(seed as usize % 2, &scen);
        let x_set = FeasibleSet::simplex(3);
        let opts = ScenarioOptions::default();
        let omni = solve_relative(&u, &x_set, v, Adversary::Omniscient, &opts).unwrap();
        let fort = solve_relative(&u, &x_set, v, Adversary::Fortuitous, &opts).unwrap();
        assert!(
            fort.gamma <= omni.gamma + 1e-7,
            "seed {seed}: {} > {}",
            fort.gamma,
            omni.gamma
        );
    }
}
