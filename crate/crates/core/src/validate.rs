//! Property suites run by `conntree validate`. Each suite draws its own
//! instances from a seed and reports every failing check rather than stopping
//! at the first.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::generate::{gen_degree_sequence, gen_random_flow, make_monotone};
use crate::graph::{enumerate_trees, p_matrix, random_tree, tree_cost, wiener_index, FlowMatrix};
use crate::heuristics::{bfs_tree, heuristic1, heuristic2_from};
use crate::huffman::{huffman_tree, TieBreakPolicy};
use crate::lb::{maximize_lb, LBCertificate, SolverConfig};
use crate::spectral::{self, in_xa_direct, in_xa_hyperboloid};

/// Random trees each certificate is checked against.
const SOUNDNESS_SAMPLES: usize = 200;

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub name: &'static str,
    pub checks: usize,
    pub failures: Vec<String>,
}

impl SuiteReport {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            checks: 0,
            failures: Vec::new(),
        }
    }

    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok {
            self.failures.push(what());
        }
    }

    fn error(&mut self, context: &str, e: crate::Error) {
        self.checks += 1;
        self.failures.push(format!("{context}: {e}"));
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// `lambda_min(P(T)) >= -1e-8` for random trees with `n` up to 60.
pub fn p_psd_suite(seed: u64, trees: usize) -> SuiteReport {
    let mut report = SuiteReport::new("p_psd");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in 0..trees {
        let n = rng.gen_range(2..=60);
        let d = gen_degree_sequence(n, &mut rng);
        let t = random_tree(&d, &mut rng);
        let lmin = spectral::min_eigenvalue(&p_matrix(&t));
        report.check(lmin >= -1e-8, || {
            format!("seed {seed} tree {k} (n = {n}): lambda_min = {lmin:e}")
        });
    }
    report
}

/// Symmetric matrix with one positive eigenvalue, some negative ones and
/// possibly a few exact zeros.
fn hyperboloid_matrix(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let q = DMatrix::from_fn(n, n, |_, _| rng.gen::<f64>() - 0.5)
        .qr()
        .q();
    let zeros = rng.gen_range(0..n.min(3));
    let mut lambda = DVector::zeros(n);
    lambda[0] = rng.gen_range(0.5..5.0);
    for i in 1..n - zeros {
        lambda[i] = -rng.gen_range(0.1..3.0);
    }
    let a = &q * DMatrix::from_diagonal(&lambda) * q.transpose();
    (&a + a.transpose()) * 0.5
}

/// Closed-form membership in `X_A` agrees with `lambda_min(x x^T - A) >= 0`
/// away from the boundary.
pub fn hyperboloid_suite(seed: u64, points: usize) -> SuiteReport {
    let mut report = SuiteReport::new("hyperboloid");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut drawn = 0;
    while drawn < points {
        let n = rng.gen_range(2..=10);
        let a = hyperboloid_matrix(n, &mut rng);
        let u1 = spectral::sym_eig_unchecked(&a).vector(0);
        for _ in 0..10 {
            let noise = DVector::from_fn(n, |_, _| rng.gen::<f64>() - 0.5);
            let x = &u1 * rng.gen_range(-3.0..3.0) + noise * rng.gen_range(0.0..1.0);
            let margin = spectral::min_eigenvalue(&(&x * x.transpose() - &a));
            if margin.abs() < 1e-6 * (1.0 + a.norm()) {
                continue;
            }
            drawn += 1;
            match (in_xa_direct(&x, &a), in_xa_hyperboloid(&x, &a)) {
                (Ok(direct), Ok(closed)) => report.check(direct == closed, || {
                    format!("seed {seed} n = {n}: direct {direct}, hyperboloid {closed}, margin {margin:e}")
                }),
                (Err(e), _) | (_, Err(e)) => report.error("hyperboloid", e),
            }
        }
    }
    report
}

/// For `n <= 8` the Huffman tree attains the minimum weighted Wiener index
/// over every tree with the same degrees.
pub fn huffman_suite(seed: u64, instances: usize) -> SuiteReport {
    let mut report = SuiteReport::new("huffman_vs_enumeration");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in 0..instances {
        let n = rng.gen_range(2..=8);
        let d = gen_degree_sequence(n, &mut rng);
        let mut mu: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        make_monotone(&mut mu, &d);
        let result = huffman_tree(&mu, &d, &TieBreakPolicy::LowestIndex).and_then(|h| {
            let wi = wiener_index(&mu, &h)?;
            let mut best = f64::INFINITY;
            for t in enumerate_trees(&d)? {
                best = best.min(wiener_index(&mu, &t)?);
            }
            Ok((wi, best))
        });
        match result {
            Ok((wi, best)) => report.check((wi - best).abs() <= 1e-9 * best.max(1.0), || {
                format!(
                    "seed {seed} instance {k} d = {:?}: huffman {wi}, optimum {best}",
                    d.as_slice()
                )
            }),
            Err(e) => report.error(&format!("instance {k}"), e),
        }
    }
    report
}

/// Checks one certificate against `a`: the stored bound must equal the value
/// recomputed from its parameters and must not exceed any tree we can build.
pub fn check_certificate(
    report: &mut SuiteReport,
    cert: &LBCertificate,
    a: &FlowMatrix,
    seed: u64,
) {
    let d = &cert.degrees;
    let recomputed = match cert.recompute(a) {
        Ok(v) => v,
        Err(e) => return report.error("recompute", e),
    };
    let scale = recomputed.abs().max(1.0);
    report.check((cert.lb - recomputed).abs() <= 1e-9 * scale, || {
        format!("stored lb {} differs from recomputed {recomputed}", cert.lb)
    });
    let mut trees = vec![bfs_tree(d)];
    match (heuristic1(a, d), heuristic2_from(cert)) {
        (Ok(h1), Ok(h2)) => trees.extend([h1, h2]),
        (Err(e), _) | (_, Err(e)) => report.error("heuristic trees", e),
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    trees.extend((0..SOUNDNESS_SAMPLES).map(|_| random_tree(d, &mut rng)));
    let mut cheapest = f64::INFINITY;
    for t in &trees {
        match tree_cost(a, t) {
            Ok(c) => cheapest = cheapest.min(c),
            Err(e) => return report.error("tree cost", e),
        }
    }
    report.check(cert.lb <= cheapest + 1e-9 * cheapest.abs().max(1.0), || {
        format!("lb {} exceeds the cost {cheapest} of a tree", cert.lb)
    });
}

/// Solves small random instances and checks each certificate.
pub fn soundness_suite(seed: u64, instances: usize, cfg: &SolverConfig) -> SuiteReport {
    let mut report = SuiteReport::new("lb_soundness");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in 0..instances {
        let n = rng.gen_range(4..=12);
        let d = gen_degree_sequence(n, &mut rng);
        let beta = rng.gen_range(0.0..2.0);
        let sigma = rng.gen_range(0.3..=1.0);
        let a = match gen_random_flow(n, beta, sigma, &mut rng) {
            Ok(a) => a,
            Err(e) => {
                report.error(&format!("instance {k}"), e);
                continue;
            }
        };
        match maximize_lb(&a, &d, cfg) {
            Ok(cert) => check_certificate(&mut report, &cert, &a, seed ^ k as u64),
            Err(e) => report.error(&format!("seed {seed} instance {k}"), e),
        }
    }
    report
}

/// Sizes of the default run, per seed.
#[derive(Debug, Clone, Copy)]
pub struct SuiteSizes {
    pub p_trees: usize,
    pub hyperboloid_points: usize,
    pub huffman_instances: usize,
    pub lb_instances: usize,
}

impl Default for SuiteSizes {
    fn default() -> Self {
        Self {
            p_trees: 20,
            hyperboloid_points: 100,
            huffman_instances: 20,
            lb_instances: 2,
        }
    }
}

/// Every suite over every seed, merged per suite.
pub fn run_all(seeds: &[u64], sizes: SuiteSizes, cfg: &SolverConfig) -> Result<Vec<SuiteReport>> {
    cfg.validate()?;
    let mut merged = vec![
        SuiteReport::new("p_psd"),
        SuiteReport::new("hyperboloid"),
        SuiteReport::new("huffman_vs_enumeration"),
        SuiteReport::new("lb_soundness"),
    ];
    for &seed in seeds {
        let runs = [
            p_psd_suite(seed, sizes.p_trees),
            hyperboloid_suite(seed, sizes.hyperboloid_points),
            huffman_suite(seed, sizes.huffman_instances),
            soundness_suite(seed, sizes.lb_instances, cfg),
        ];
        for (total, run) in merged.iter_mut().zip(runs) {
            total.checks += run.checks;
            total.failures.extend(run.failures);
        }
    }
    Ok(merged)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::gen_rank_one;

    #[test]
    fn suites_pass_on_one_seed() {
        let sizes = SuiteSizes {
            p_trees: 5,
            hyperboloid_points: 30,
            huffman_instances: 5,
            lb_instances: 1,
        };
        for r in run_all(&[1], sizes, &SolverConfig::default()).unwrap() {
            assert!(r.passed(), "{}: {:?}", r.name, r.failures);
            assert!(r.checks > 0, "{}", r.name);
        }
    }

    #[test]
    fn inflated_certificate_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let d = gen_degree_sequence(10, &mut rng);
        let (a, _) = gen_rank_one(&d, 1.0, &mut rng).unwrap();
        let mut cert = maximize_lb(&a, &d, &SolverConfig::default()).unwrap();
        let mut honest = SuiteReport::new("honest");
        check_certificate(&mut honest, &cert, &a, 0);
        assert!(honest.passed(), "{:?}", honest.failures);
        cert.lb *= 1.5;
        let mut corrupt = SuiteReport::new("corrupt");
        check_certificate(&mut corrupt, &cert, &a, 0);
        assert_eq!(corrupt.failures.len(), 2, "{:?}", corrupt.failures);
    }
}
