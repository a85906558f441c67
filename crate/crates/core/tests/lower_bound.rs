use conntree::generate::{gen_degree_sequence, gen_random_flow, gen_rank_one};
use conntree::graph::{enumerate_trees, tree_cost, DegreeSequence, FlowMatrix, LabeledTree};
use conntree::huffman::{greedy_tree, huffman_tree, TieBreakPolicy};
use conntree::lb::{
    adjust_mu, lb_value, maximize_lb, solve_linearized, solve_relaxed, SolverConfig,
};
use conntree::spectral::{in_xa_direct, initial_point, min_eigenvalue};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn bmi_min_eigenvalue(alpha: &[f64], mu: &[f64], a: &FlowMatrix) -> f64 {
    let m = DVector::from_column_slice(mu);
    let mut x = &m * m.transpose() - a.matrix();
    for (i, v) in alpha.iter().enumerate() {
        x[(i, i)] += v;
    }
    min_eigenvalue(&x)
}

fn a_alpha(a: &FlowMatrix, alpha: &[f64]) -> DMatrix<f64> {
    let mut m = a.matrix().clone();
    for (i, v) in alpha.iter().enumerate() {
        m[(i, i)] -= v;
    }
    m
}

fn rank_one(n: usize, seed: u64) -> (FlowMatrix, DegreeSequence, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = gen_degree_sequence(n, &mut rng);
    let (a, nu) = gen_rank_one(&d, 1.0, &mut rng).unwrap();
    (a, d, nu)
}

#[test]
fn adjustment_at_the_tight_alpha_recovers_nu() {
    let (a, d, nu) = rank_one(12, 3);
    let alpha: Vec<f64> = nu.iter().map(|v| -v * v).collect();
    let h = vec![huffman_tree(&nu, &d, &TieBreakPolicy::LowestIndex).unwrap()];
    let (mu, _) = adjust_mu(&h, &alpha, &a, &d, &SolverConfig::default()).unwrap();
    for (m, v) in mu.iter().zip(&nu) {
        assert!((m - v).abs() <= 1e-4, "{mu:?} vs {nu:?}");
    }
}

#[test]
fn adjusted_weights_lie_in_the_feasible_set() {
    // path on three vertices: the middle vertex has degree 2
    let d = DegreeSequence::new(vec![1, 2, 1]).unwrap();
    let a = FlowMatrix::new(DMatrix::from_row_slice(
        3,
        3,
        &[0.0, 2.0, 1.0, 2.0, 0.0, 3.0, 1.0, 3.0, 0.0],
    ))
    .unwrap();
    let alpha: Vec<f64> = initial_point(&a).0.iter().map(|v| v + 0.1).collect();
    let m = a_alpha(&a, &alpha);
    let mut values: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    values.sort_by(|x, y| y.total_cmp(x));
    assert!(values[0] > 0.0 && values[1] <= 0.0, "{values:?}");

    let (mu, phi) =
        adjust_mu(&[greedy_tree(&d)], &alpha, &a, &d, &SolverConfig::default()).unwrap();
    assert!(
        in_xa_direct(&DVector::from_column_slice(&mu), &m).unwrap(),
        "{mu:?}"
    );
    assert!(mu.iter().all(|&v| v >= -1e-9));
    assert!(phi.is_finite());
}

#[test]
fn two_positive_eigenvalues_are_rejected() {
    let d = DegreeSequence::new(vec![1, 2, 1]).unwrap();
    let a = FlowMatrix::new(DMatrix::from_row_slice(
        3,
        3,
        &[0.0, 1.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0],
    ))
    .unwrap();
    // A + 2I has eigenvalues 4, 1, 1
    let err = adjust_mu(
        &[greedy_tree(&d)],
        &[-2.0; 3],
        &a,
        &d,
        &SolverConfig::default(),
    );
    assert!(
        matches!(err, Err(conntree::Error::InfeasibleParams(_))),
        "{err:?}"
    );
}

#[test]
fn linearized_step_from_the_spectral_start_is_feasible() {
    let (a, d, _) = rank_one(15, 8);
    let (alpha0, mu0) = initial_point(&a);
    let c = 7.0;
    let h = vec![greedy_tree(&d)];
    let phi0 = h
        .iter()
        .map(|t| conntree::graph::p_quadratic_form(mu0.as_slice(), t).unwrap())
        .fold(0.0, f64::max);
    let start_objective = phi0 + c * alpha0.sum();

    let p = solve_linearized(&h, mu0.as_slice(), &a, &d, &SolverConfig::default()).unwrap();
    let objective = p.phi + c * p.alpha.iter().sum::<f64>();
    assert!(
        objective <= start_objective + 1e-6 * start_objective.abs(),
        "{objective} vs {start_objective}"
    );
    assert!(bmi_min_eigenvalue(&p.alpha, &p.mu, &a) >= -1e-9 * (1.0 + a.matrix().norm()));
}

#[test]
fn two_vertex_instance() {
    let d = DegreeSequence::new(vec![1, 1]).unwrap();
    let a = FlowMatrix::new(DMatrix::from_row_slice(2, 2, &[0.0, 2.5, 2.5, 0.0])).unwrap();
    let cert = maximize_lb(&a, &d, &SolverConfig::default()).unwrap();
    assert!(cert.lb <= 5.0 + 1e-9);
    assert!(
        cert.lb >= 5.0 - 1e-3,
        "the single edge is optimal and the bound is tight: {}",
        cert.lb
    );
    assert!(
        bmi_min_eigenvalue(&cert.params.alpha, &cert.params.mu, &a)
            >= -1e-9 * (1.0 + a.matrix().norm())
    );
}

#[test]
fn relaxed_solve_on_rank_one_recovers_the_generating_weights() {
    let (a, d, nu) = rank_one(14, 21);
    let h = vec![huffman_tree(&nu, &d, &TieBreakPolicy::LowestIndex).unwrap()];
    let r = solve_relaxed(&h, &a, &d, &SolverConfig::default()).unwrap();
    for w in r.objectives.windows(2) {
        assert!(
            w[1] <= w[0] + 1e-7 * w[0].abs().max(1.0),
            "{:?}",
            r.objectives
        );
    }
    let scale = nu.iter().fold(0.0_f64, |m, v| m.max(*v));
    for (m, v) in r.params.mu.iter().zip(&nu) {
        assert!(
            (m - v).abs() <= 1e-3 * scale,
            "mu {:?}\nnu {nu:?}",
            r.params.mu
        );
    }
    for (x, v) in r.params.alpha.iter().zip(&nu) {
        assert!((x + v * v).abs() <= 1e-3 * scale * scale);
    }
}

#[test]
fn uniform_flows_give_uniform_weights() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let d = gen_degree_sequence(16, &mut rng);
    let a = FlowMatrix::new(DMatrix::from_fn(
        16,
        16,
        |i, j| if i == j { 0.0 } else { 1.0 },
    ))
    .unwrap();
    let r = solve_relaxed(&[greedy_tree(&d)], &a, &d, &SolverConfig::default()).unwrap();
    let mu = &r.params.mu;
    let mean = mu.iter().sum::<f64>() / mu.len() as f64;
    assert!(mu.iter().all(|v| (v - mean).abs() <= 1e-3 * mean), "{mu:?}");
}

#[test]
fn small_instances_are_bounded_by_the_exhaustive_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..4 {
        let d = gen_degree_sequence(8, &mut rng);
        let a = gen_random_flow(8, 1.0, 0.8, &mut rng).unwrap();
        let cert = maximize_lb(&a, &d, &SolverConfig::default()).unwrap();
        let optimum = enumerate_trees(&d)
            .unwrap()
            .map(|t: LabeledTree| tree_cost(&a, &t).unwrap())
            .fold(f64::INFINITY, f64::min);
        assert!(
            cert.lb <= optimum + 1e-9 * optimum,
            "{} > {optimum}",
            cert.lb
        );
        let recomputed = lb_value(&cert.params.alpha, &cert.params.mu, &a, &d).unwrap();
        assert!((recomputed - cert.lb).abs() <= 1e-9 * cert.lb.abs().max(1.0));
        assert!(cert.iterations.cg_rounds <= 15);
    }
}
