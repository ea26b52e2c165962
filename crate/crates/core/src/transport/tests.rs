use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::grid::{build_domain, DomainSpec, Fixture, GridDomain};
use crate::heat::{build_neumann_operator, cheeger_energy, evolve, NeumannOperator};
use crate::trajectory::rotation_trajectory;

fn two_nodes() -> CostMatrix {
    CostMatrix::from_squared(2, vec![0.0, 1.0, 1.0, 0.0]).unwrap()
}

fn square(h: f64) -> (GridDomain, NeumannOperator, CostMatrix) {
    let d = build_domain(&DomainSpec::new(Fixture::Square, h)).unwrap();
    let op = build_neumann_operator(&d).unwrap();
    let c = CostMatrix::induced(&d, op.nodes()).unwrap();
    (d, op, c)
}

fn bump(d: &GridDomain, op: &NeumannOperator, c: [f64; 2], s: f64, floor: f64) -> DiscreteMeasure {
    let f: Vec<f64> = op.nodes().iter().map(|&i| {
        let p = d.point(i);
        floor + (-((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)) / (2.0 * s * s)).exp()
    }).collect();
    DiscreteMeasure::from_density(&f, op.measure()).unwrap()
}

fn random_measure(rng: &mut ChaCha8Rng, measure: &[f64], sparsity: f64) -> DiscreteMeasure {
    loop {
        let w: Vec<f64> = measure.iter().map(|_| if rng.gen::<f64>() < sparsity { 0.0 } else { rng.gen::<f64>() }).collect();
        if w.iter().any(|x| *x > 0.0) {
            return DiscreteMeasure::normalized(w, measure.to_vec()).unwrap();
        }
    }
}

/// Checks dual feasibility, strong duality and primal feasibility.
fn assert_optimal(mu: &DiscreteMeasure, nu: &DiscreteMeasure, cost: &CostMatrix, plan: &TransportPlan) {
    let (u, v) = plan.potentials.clone().unwrap();
    for i in mu.support() {
        for j in nu.support() {
            assert!(u[i] + v[j] <= cost.get(i, j) + 1e-10);
        }
    }
    assert!((plan.dual_value.unwrap() - plan.cost).abs() <= 1e-10 * (1.0 + plan.cost));
    let mut rows = vec![0.0; cost.len()];
    let mut cols = vec![0.0; cost.len()];
    for &(i, j, m) in &plan.coupling {
        assert!(m > 0.0);
        rows[i] += m;
        cols[j] += m;
    }
    for k in 0..cost.len() {
        assert_abs_diff_eq!(rows[k], mu.mass()[k], epsilon = 1e-12);
        assert_abs_diff_eq!(cols[k], nu.mass()[k], epsilon = 1e-12);
    }
}

#[test]
fn exact_examples() {
    let c = two_nodes();
    let m = vec![1.0, 1.0];
    let mu = DiscreteMeasure::new(vec![0.5, 0.5], m.clone()).unwrap();
    let same = wasserstein2(&mu, &mu, &c, Method::ExactLp).unwrap();
    assert_eq!(same.cost, 0.0);
    assert_eq!(same.coupling, vec![(0, 0, 0.5), (1, 1, 0.5)]);
    let nu = DiscreteMeasure::new(vec![1.0, 0.0], m.clone()).unwrap();
    let plan = wasserstein2(&mu, &nu, &c, Method::ExactLp).unwrap();
    assert_abs_diff_eq!(plan.distance, 0.5f64.sqrt(), epsilon = 1e-15);
    assert_eq!(plan.coupling, vec![(0, 0, 0.5), (1, 0, 0.5)]);

    let (d, op, cost) = square(0.25);
    let x = DiscreteMeasure::point_mass(op.measure(), 0).unwrap();
    let y = DiscreteMeasure::point_mass(op.measure(), 18).unwrap();
    let plan = wasserstein2(&x, &y, &cost, Method::ExactLp).unwrap();
    let dist = crate::grid::graph_distance(&d, crate::grid::Weighting::Unit, op.nodes()[0], true).unwrap().dist[op.nodes()[18]];
    assert_abs_diff_eq!(plan.distance, dist, epsilon = 1e-14);
    assert_eq!(plan.coupling, vec![(0, 18, 1.0)]);
}

#[test]
fn exact_solutions_are_certified_optimal() {
    let (_, op, cost) = square(1.0 / 8.0);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for sparsity in [0.0, 0.5, 0.9] {
        let mu = random_measure(&mut rng, op.measure(), sparsity);
        let nu = random_measure(&mut rng, op.measure(), sparsity);
        let plan = solve_exact(&mu, &nu, &cost).unwrap();
        assert_optimal(&mu, &nu, &cost, &plan);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]
    #[test]
    fn exact_matches_duality_on_random_costs(seed in 0u64..10_000, n in 2usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<[f64; 2]> = (0..n).map(|_| [rng.gen(), rng.gen()]).collect();
        let vals: Vec<f64> = (0..n * n).map(|k| {
            let (a, b) = (pts[k / n], pts[k % n]);
            (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
        }).collect();
        let mut vals = vals;
        for i in 0..n { for j in 0..i { vals[i * n + j] = vals[j * n + i]; } }
        let cost = CostMatrix::from_squared(n, vals).unwrap();
        let m = vec![1.0; n];
        let mu = random_measure(&mut rng, &m, 0.3);
        let nu = random_measure(&mut rng, &m, 0.3);
        let plan = solve_exact(&mu, &nu, &cost).unwrap();
        assert_optimal(&mu, &nu, &cost, &plan);
    }
}

#[test]
fn wasserstein_metric_axioms_on_random_triples() {
    let (_, op, cost) = square(1.0 / 8.0);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let m: Vec<DiscreteMeasure> = (0..3).map(|_| random_measure(&mut rng, op.measure(), 0.6)).collect();
        let w = |a: usize, b: usize| solve_exact(&m[a], &m[b], &cost).unwrap().distance;
        assert_abs_diff_eq!(w(0, 1), w(1, 0), epsilon = 1e-12);
        assert!(w(0, 2) <= w(0, 1) + w(1, 2) + 1e-9);
        assert_eq!(w(0, 0), 0.0);
    }
}

#[test]
fn exact_rejects_oversized_supports() {
    let n = EXACT_SUPPORT_LIMIT + 1;
    let cost = CostMatrix::from_squared(n, vec![0.0; n * n]).unwrap();
    let mu = DiscreteMeasure::uniform(&vec![1.0; n]).unwrap();
    assert!(matches!(solve_exact(&mu, &mu, &cost), Err(crate::Error::SizeLimit { .. })));
}

#[test]
fn sinkhorn_marginals_and_bias_bound() {
    let (_, op, cost) = square(1.0 / 8.0);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for eps in [1e-1, 1e-2] {
        let mu = random_measure(&mut rng, op.measure(), 0.2);
        let nu = random_measure(&mut rng, op.measure(), 0.2);
        let exact = solve_exact(&mu, &nu, &cost).unwrap();
        let ent = wasserstein2(&mu, &nu, &cost, Method::Sinkhorn { epsilon: eps }).unwrap();
        assert!(ent.approximate);
        let mut rows = vec![0.0; cost.len()];
        let mut cols = vec![0.0; cost.len()];
        for &(i, j, m) in &ent.coupling {
            rows[i] += m;
            cols[j] += m;
        }
        let err: f64 = rows.iter().zip(mu.mass()).chain(cols.iter().zip(nu.mass())).map(|(a, b)| (a - b).abs()).sum();
        assert!(err < 2e-9);
        let support = mu.support().len().max(nu.support().len()) as f64;
        assert!(ent.distance >= exact.distance - eps * support.ln());
        assert!(ent.cost >= exact.cost - 1e-9);
        assert!(ent.regularized_value.unwrap() >= exact.cost - 1e-9);
    }
}

#[test]
fn sinkhorn_approaches_exact_as_epsilon_shrinks() {
    let (_, op, cost) = square(0.25);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mu = random_measure(&mut rng, op.measure(), 0.0);
    let nu = random_measure(&mut rng, op.measure(), 0.0);
    let exact = solve_exact(&mu, &nu, &cost).unwrap().cost;
    let gaps: Vec<f64> = [1e-1, 1e-2, 1e-3]
        .iter()
        .map(|&e| {
            let mut o = SinkhornOptions::new(e);
            o.epsilon_start = Some(1.0);
            solve_sinkhorn(&mu, &nu, &cost, &o).unwrap().cost - exact
        })
        .collect();
    assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2] && gaps[2] >= -1e-9, "{gaps:?}");
}

#[test]
fn jko_two_node_oracle() {
    let c = two_nodes();
    let m = vec![1.0, 1.0];
    let mu = DiscreteMeasure::new(vec![1.0, 0.0], m).unwrap();
    for tau in [0.25f64, 0.5, 2.0] {
        let a = 1.0 / (1.0 + (1.0 / (2.0 * tau)).exp());
        let step = jko_step(&mu, tau, &c, JkoSolver::MirrorDescent(MirrorOptions::default())).unwrap();
        assert_abs_diff_eq!(step.measure.mass()[1], a, epsilon = 1e-6);
    }
    for solver in [JkoSolver::MirrorDescent(MirrorOptions::default()), JkoSolver::default()] {
        let step = jko_step(&mu, 1e3, &c, solver).unwrap();
        assert!(step.measure.l1_distance(&DiscreteMeasure::uniform(&[1.0, 1.0]).unwrap()) < 1e-3);
    }
}

#[test]
fn jko_uniform_is_a_fixed_point() {
    let (_, op, cost) = square(1.0 / 8.0);
    let u = DiscreteMeasure::uniform(op.measure()).unwrap();
    for solver in [JkoSolver::default(), JkoSolver::MirrorDescent(MirrorOptions::default())] {
        let step = jko_step(&u, 1e-2, &cost, solver).unwrap();
        assert!(step.measure.l1_distance(&u) < 1e-8, "{solver:?}: {}", step.measure.l1_distance(&u));
    }
}

fn sharp(tau: f64, divisor: f64) -> JkoSolver {
    JkoSolver::EntropicProximal(EntropicOptions { epsilon: Some(tau / divisor), ..Default::default() })
}

#[test]
fn jko_objective_decreases() {
    let (d, op, cost) = square(1.0 / 8.0);
    let mu = bump(&d, &op, [0.3, 0.4], 0.15, 0.05);
    let tau = 0.05;
    for solver in [sharp(tau, 10.0), JkoSolver::MirrorDescent(MirrorOptions::default())] {
        let step = jko_step(&mu, tau, &cost, solver).unwrap();
        let w2 = solve_exact(&step.measure, &mu, &cost).unwrap().cost;
        assert!(step.measure.entropy() + w2 / (2.0 * tau) < mu.entropy(), "{solver:?}");
        assert!(step.objective < mu.entropy());
    }
}

#[test]
fn entropic_steps_approach_the_exact_step() {
    let (d, op, cost) = square(1.0 / 8.0);
    let mu = bump(&d, &op, [0.3, 0.4], 0.15, 0.05);
    let tau = 0.05;
    let exact = jko_step(&mu, tau, &cost, JkoSolver::MirrorDescent(MirrorOptions::default())).unwrap().measure;
    let gaps: Vec<f64> = [4.0, 16.0, 64.0].iter().map(|&k| jko_step(&mu, tau, &cost, sharp(tau, k)).unwrap().measure.l1_distance(&exact)).collect();
    assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2] && gaps[2] < 0.02, "{gaps:?}");
}

#[test]
fn fisher_information_examples() {
    let chain = build_domain(&DomainSpec::new(Fixture::Mask { rows: vec!["###".into()] }, 1.0)).unwrap();
    let op = build_neumann_operator(&chain).unwrap();
    let mu = DiscreteMeasure::normalized(vec![2.0, 1.0, 1.0], vec![1.0; 3]).unwrap();
    assert_abs_diff_eq!(fisher_information(&op, &mu), 4.0 * (0.5f64.sqrt() - 0.5).powi(2), epsilon = 1e-15);
    let mirror = DiscreteMeasure::normalized(vec![1.0, 1.0, 2.0], vec![1.0; 3]).unwrap();
    assert_abs_diff_eq!(fisher_information(&op, &mu), fisher_information(&op, &mirror), epsilon = 1e-15);
    assert_eq!(fisher_information(&op, &DiscreteMeasure::uniform(op.measure()).unwrap()), 0.0);

    let (d, op, _) = square(1.0 / 8.0);
    let mu = bump(&d, &op, [0.2, 0.7], 0.2, 0.1);
    let root: Vec<f64> = mu.density().iter().map(|r| r.sqrt()).collect();
    assert_abs_diff_eq!(fisher_information(&op, &mu), 8.0 * cheeger_energy(&op, &root), epsilon = 1e-12);
    assert!(fisher_information(&op, &mu) <= entropy_dissipation(&op, &mu));
}

#[test]
fn tangent_norm_of_heat_velocity_is_dissipation() {
    let (d, op, _) = square(1.0 / 8.0);
    let mu = bump(&d, &op, [0.3, 0.6], 0.2, 0.1);
    let rho = mu.density();
    let rate: Vec<f64> = op.apply(&rho).iter().zip(op.measure()).map(|(l, m)| l * m).collect();
    let norm = tangent_norm(&op, &rho, &rate).unwrap();
    assert_abs_diff_eq!(norm * norm, entropy_dissipation(&op, &mu), epsilon = 1e-8 * entropy_dissipation(&op, &mu));
}

#[test]
fn slope_estimates_stay_below_fisher_and_approach_it() {
    let (d, op, _) = square(1.0 / 16.0);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let u = DiscreteMeasure::uniform(op.measure()).unwrap();
    assert_eq!(descending_slope_estimate(&op, &u, SpeedEstimator::Tangent, 0.05, 20, &mut rng).unwrap().estimate, 0.0);
    let mu = bump(&d, &op, [0.4, 0.5], 0.2, 0.2);
    let fi = fisher_information(&op, &mu);
    let est = descending_slope_estimate(&op, &mu, SpeedEstimator::Tangent, 0.02, 40, &mut rng).unwrap();
    assert!(est.estimate.powi(2) <= 1.05 * fi, "{} vs {fi}", est.estimate.powi(2));
    let (ratios, extrapolated) = slope_extrapolation(&op, &mu, SpeedEstimator::Tangent, &[0.04, 0.02, 0.01]).unwrap();
    assert!(ratios.windows(2).all(|w| w[1] >= w[0]));
    assert!(extrapolated >= 0.8 * fi.sqrt(), "{extrapolated} vs {}", fi.sqrt());
}

#[test]
fn ede_residual_is_small_for_heat_and_large_for_rotation() {
    let spec = DomainSpec::new(Fixture::Disc { center: [0.5, 0.5], radius: 0.5 }, 1.0 / 16.0);
    let d = build_domain(&spec).unwrap();
    let op = build_neumann_operator(&d).unwrap();
    let times: Vec<f64> = (0..=20).map(|k| k as f64 * 1e-3).collect();
    let u = vec![1.0 / op.total_measure(); op.dimension()];
    let flat = evolve(&op, &u, &times, 1e-3).unwrap();
    let rep = ede_residual(&flat, &op, SpeedEstimator::Tangent).unwrap();
    assert!(rep.residual.iter().all(|r| r.abs() < 1e-12));

    let mu = bump(&d, &op, [0.4, 0.45], 0.12, 0.2);
    let traj = evolve(&op, &mu.density(), &times, 2.5e-4).unwrap();
    let rep = ede_residual(&traj, &op, SpeedEstimator::Tangent).unwrap();
    assert!(rep.worst_relative() < 0.1, "{}", rep.worst_relative());

    let rot = rotation_trajectory(&d, &op, [0.5, 0.5], 0.2, 0.0, 20.0, 0.08, 0.2, &times);
    let rep = ede_residual(&rot, &op, SpeedEstimator::Tangent).unwrap();
    let last = rep.residual.len() - 1;
    assert!(rep.residual[last] > 5.0 * 0.1 * (rep.entropy[0] - rep.entropy[last]).abs());
    assert!(rep.residual[last] > 0.0);
}

#[test]
fn convexity_probe_on_flat_square() {
    let (d, op, cost) = square(1.0 / 8.0);
    let mu0 = bump(&d, &op, [0.25, 0.3], 0.1, 0.0);
    let same = entropy_convexity_probe(&d, &mu0, &mu0, &cost, 4, 0.0, 0.05).unwrap();
    assert!(same.margins.iter().all(|m| m.abs() < 1e-12));
    let mu1 = bump(&d, &op, [0.7, 0.65], 0.12, 0.0);
    let probe = entropy_convexity_probe(&d, &mu0, &mu1, &cost, 8, 0.0, 0.05).unwrap();
    assert!(probe.pass, "{}", probe.worst_margin);
    assert_eq!(probe.ambient_mass, 0.0);
}

