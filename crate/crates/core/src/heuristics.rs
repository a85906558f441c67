//! Upper-bound trees built from weight sequences, and the gap metrics that
//! compare them with random trees and the lower bound.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::graph::{random_tree, tree_cost, DegreeSequence, FlowMatrix, LabeledTree};
use crate::huffman::{greedy_tree, huffman_tree, TieBreakPolicy};
use crate::lb::{maximize_lb, LBCertificate, SolverConfig};
use crate::spectral;

/// Seed for the random trees behind `C_avg` unless a caller picks another.
pub const DEFAULT_AVERAGE_SEED: u64 = 0x5eed;

/// Dominant eigenvector of `A`, signed to have a nonnegative sum; entries
/// that stay negative after the flip are rounding noise and become zero.
pub fn perron_weights(a: &FlowMatrix) -> Result<Vec<f64>> {
    let eig = spectral::sym_eig(a.matrix())?;
    let u = eig.vector(0);
    let sign = if u.sum() < 0.0 { -1.0 } else { 1.0 };
    Ok(u.iter().map(|v| (sign * v).max(0.0)).collect())
}

/// Huffman tree for the Perron vector of `A`.
pub fn heuristic1(a: &FlowMatrix, d: &DegreeSequence) -> Result<LabeledTree> {
    huffman_tree(&perron_weights(a)?, d, &TieBreakPolicy::LowestIndex)
}

/// Huffman tree for the `mu` of a lower-bound certificate.
pub fn heuristic2_from(cert: &LBCertificate) -> Result<LabeledTree> {
    huffman_tree(&cert.params.mu, &cert.degrees, &TieBreakPolicy::LowestIndex)
}

/// Runs the lower-bound solver and returns the Huffman tree of its weights.
pub fn heuristic2(a: &FlowMatrix, d: &DegreeSequence, cfg: &SolverConfig) -> Result<LabeledTree> {
    heuristic2_from(&maximize_lb(a, d, cfg)?)
}

/// Tree for unit weights; it ignores the flows.
pub fn bfs_tree(d: &DegreeSequence) -> LabeledTree {
    greedy_tree(d)
}

/// Mean cost of `count` uniformly random trees with degrees `d`.
pub fn average_random_cost(
    a: &FlowMatrix,
    d: &DegreeSequence,
    count: usize,
    seed: u64,
) -> Result<f64> {
    if count == 0 {
        return Ok(f64::NAN);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for _ in 0..count {
        total += tree_cost(a, &random_tree(d, &mut rng))?;
    }
    Ok(total / count as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapCosts {
    pub heuristic1: f64,
    pub heuristic2: f64,
    pub bfs: f64,
    /// `min(heuristic1, heuristic2, bfs)`.
    pub best: f64,
    pub c_avg: f64,
    pub lb: f64,
}

impl GapCosts {
    /// `(C(BFS) - C(H*)) / C(H*)`.
    pub fn delta_bfs(&self) -> f64 {
        (self.bfs - self.best) / self.best
    }

    /// `(C_avg - C(H*)) / C(H*)`.
    pub fn delta_avg(&self) -> f64 {
        (self.c_avg - self.best) / self.best
    }

    /// `(C(H*) - LB) / LB`.
    pub fn delta_lb(&self) -> f64 {
        (self.best - self.lb) / self.lb
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GapReport {
    pub delta_lb: f64,
    pub delta_bfs: f64,
    pub delta_avg: f64,
    pub costs: GapCosts,
    pub heuristic1: LabeledTree,
    pub heuristic2: LabeledTree,
    pub bfs: LabeledTree,
    pub certificate: LBCertificate,
}

impl GapReport {
    /// Assembles the report from trees already built.
    pub fn assemble(
        a: &FlowMatrix,
        certificate: LBCertificate,
        heuristic1: LabeledTree,
        heuristic2: LabeledTree,
        bfs: LabeledTree,
        c_avg: f64,
    ) -> Result<Self> {
        let (h1, h2, b) = (
            tree_cost(a, &heuristic1)?,
            tree_cost(a, &heuristic2)?,
            tree_cost(a, &bfs)?,
        );
        let costs = GapCosts {
            heuristic1: h1,
            heuristic2: h2,
            bfs: b,
            best: h1.min(h2).min(b),
            c_avg,
            lb: certificate.lb,
        };
        Ok(Self {
            delta_lb: costs.delta_lb(),
            delta_bfs: costs.delta_bfs(),
            delta_avg: costs.delta_avg(),
            costs,
            heuristic1,
            heuristic2,
            bfs,
            certificate,
        })
    }

    pub fn best_tree(&self) -> &LabeledTree {
        let c = &self.costs;
        if c.best == c.heuristic2 {
            &self.heuristic2
        } else if c.best == c.heuristic1 {
            &self.heuristic1
        } else {
            &self.bfs
        }
    }
}

/// All three heuristic trees, the lower bound and `C_avg` over `n_random`
/// random trees drawn from `seed`.
pub fn gap_report(
    a: &FlowMatrix,
    d: &DegreeSequence,
    cfg: &SolverConfig,
    n_random: usize,
    seed: u64,
) -> Result<GapReport> {
    let certificate = maximize_lb(a, d, cfg)?;
    let h1 = heuristic1(a, d)?;
    let h2 = heuristic2_from(&certificate)?;
    let c_avg = average_random_cost(a, d, n_random, seed)?;
    GapReport::assemble(a, certificate, h1, h2, bfs_tree(d), c_avg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::{gen_degree_sequence, gen_random_flow, gen_rank_one};
    use nalgebra::DMatrix;

    fn ones_minus_identity(n: usize) -> FlowMatrix {
        FlowMatrix::new(DMatrix::from_fn(
            n,
            n,
            |i, j| if i == j { 0.0 } else { 1.0 },
        ))
        .unwrap()
    }

    #[test]
    fn perron_tree_of_uniform_flows_is_greedy() {
        let d = DegreeSequence::new(vec![3, 1, 1, 2, 1, 3, 1, 2]).unwrap();
        let a = ones_minus_identity(8);
        let cost = tree_cost(&a, &heuristic1(&a, &d).unwrap()).unwrap();
        assert!((cost - tree_cost(&a, &bfs_tree(&d)).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn two_vertices_have_one_tree() {
        let d = DegreeSequence::new(vec![1, 1]).unwrap();
        let a = FlowMatrix::new(DMatrix::from_row_slice(2, 2, &[0.0, 3.0, 3.0, 0.0])).unwrap();
        assert_eq!(heuristic1(&a, &d).unwrap().edges(), &[(0, 1)]);
    }

    #[test]
    fn reducible_flows_give_zero_weights() {
        // vertex 3 exchanges nothing
        let mut m = DMatrix::zeros(4, 4);
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            m[(i, j)] = 1.0;
            m[(j, i)] = 1.0;
        }
        let a = FlowMatrix::new(m).unwrap();
        let w = perron_weights(&a).unwrap();
        assert_eq!(w[3], 0.0);
        let d = DegreeSequence::new(vec![1, 3, 1, 1]).unwrap();
        assert!(heuristic1(&a, &d).unwrap().matches(&d));
    }

    #[test]
    fn rank_one_report_is_tight() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = gen_degree_sequence(20, &mut rng);
        let (a, _) = gen_rank_one(&d, 1.0, &mut rng).unwrap();
        let r = gap_report(&a, &d, &SolverConfig::default(), 100, DEFAULT_AVERAGE_SEED).unwrap();
        assert!(r.delta_lb.abs() <= 1e-3, "{:?}", r.costs);
        assert!(r.costs.best <= r.costs.heuristic1 && r.costs.best <= r.costs.bfs);
        for t in [&r.heuristic1, &r.heuristic2, &r.bfs] {
            assert!(t.matches(&d));
        }
    }

    #[test]
    fn uniform_flows_need_no_flow_knowledge() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = gen_degree_sequence(12, &mut rng);
        let r = gap_report(
            &ones_minus_identity(12),
            &d,
            &SolverConfig::default(),
            20,
            1,
        )
        .unwrap();
        assert!(r.delta_bfs.abs() < 1e-12);
        assert!(r.delta_avg >= 0.0);
    }

    #[test]
    fn ratios_follow_their_formulas() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let d = gen_degree_sequence(15, &mut rng);
        let a = gen_random_flow(15, 1.0, 0.5, &mut rng).unwrap();
        let r = gap_report(&a, &d, &SolverConfig::default(), 50, 2).unwrap();
        let c = r.costs;
        assert_eq!(c.best, c.heuristic1.min(c.heuristic2).min(c.bfs));
        assert!((r.delta_lb - (c.best - c.lb) / c.lb).abs() <= 1e-12 * r.delta_lb.abs().max(1.0));
        assert!((r.delta_bfs - (c.bfs - c.best) / c.best).abs() <= 1e-12);
        assert!((r.delta_avg - (c.c_avg - c.best) / c.best).abs() <= 1e-12);
        assert!(c.lb <= c.best + 1e-6 * c.best);
        assert_eq!(tree_cost(&a, r.best_tree()).unwrap(), c.best);
    }

    #[test]
    fn ratios_are_scale_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let d = gen_degree_sequence(12, &mut rng);
        let a = gen_random_flow(12, 2.0, 1.0, &mut rng).unwrap();
        let cfg = SolverConfig::default();
        let r1 = gap_report(&a, &d, &cfg, 30, 4).unwrap();
        let r7 = gap_report(&a.scaled(7.0), &d, &cfg, 30, 4).unwrap();
        assert!((r1.delta_lb - r7.delta_lb).abs() <= 1e-3);
        assert!((r1.delta_bfs - r7.delta_bfs).abs() <= 1e-3);
        assert!((r1.delta_avg - r7.delta_avg).abs() <= 1e-3);
    }
}
