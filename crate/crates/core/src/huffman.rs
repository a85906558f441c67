//! Generalized Huffman trees for vertex weights and a fixed degree sequence.
//!
//! Repeatedly take the vacant internal vertex of least weight (least degree on
//! ties), hang the `d_m - 1` lightest vacant pendant vertices on it, add their
//! weight to it and turn it into a vacant pendant vertex. The last internal
//! vertex receives everything that is left.
//!
//! For weights that are monotone in degrees the result minimizes the weighted
//! Wiener index over all trees with the given degrees.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::graph::{DegreeSequence, LabeledTree};

/// How exact ties between equal keys are broken.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub enum TieBreakPolicy {
    /// Smaller vertex index wins.
    #[default]
    LowestIndex,
    /// `ranks[v]` is the priority of vertex `v`; smaller wins. Must be a permutation.
    Ranked(Vec<usize>),
}

impl TieBreakPolicy {
    fn rank(&self, v: usize) -> usize {
        match self {
            Self::LowestIndex => v,
            Self::Ranked(r) => r[v],
        }
    }
}

/// One iteration of the main loop: `parent` adopted `children` and now weighs `weight`.
#[derive(Debug, Clone, PartialEq)]
pub struct Merge {
    pub parent: usize,
    pub children: Vec<usize>,
    pub child_weights: Vec<f64>,
    pub weight: f64,
}

#[derive(Debug, Clone)]
pub struct HuffmanBuild {
    pub tree: LabeledTree,
    pub merges: Vec<Merge>,
    /// Weights of the vacant pendant vertices joined to the final internal vertex.
    pub final_star: Vec<f64>,
    /// Push and pop operations on both priority queues.
    pub heap_ops: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Weight(f64);

impl Eq for Weight {}

impl PartialOrd for Weight {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Weight {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

fn check_weights(mu: &[f64], n: usize) -> Result<()> {
    if mu.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: mu.len(),
        });
    }
    if let Some(i) = mu.iter().position(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidWeights(format!(
            "weight of vertex {} is {}",
            i + 1,
            mu[i]
        )));
    }
    Ok(())
}

/// True iff `mu_i <= mu_j` whenever `1 < d_i < d_j`.
pub fn is_monotone(mu: &[f64], d: &DegreeSequence) -> Result<bool> {
    if mu.len() != d.len() {
        return Err(Error::DimensionMismatch {
            expected: d.len(),
            found: mu.len(),
        });
    }
    let mut heaviest_below = f64::NEG_INFINITY;
    for (_, members) in d.internal_classes() {
        let lo = members.iter().map(|&v| mu[v]).fold(f64::INFINITY, f64::min);
        let hi = members
            .iter()
            .map(|&v| mu[v])
            .fold(f64::NEG_INFINITY, f64::max);
        if lo < heaviest_below {
            return Ok(false);
        }
        heaviest_below = heaviest_below.max(hi);
    }
    Ok(true)
}

/// Builds a Huffman tree and records the merge sequence.
pub fn huffman_build(mu: &[f64], d: &DegreeSequence, tie: &TieBreakPolicy) -> Result<HuffmanBuild> {
    let n = d.len();
    check_weights(mu, n)?;
    if let TieBreakPolicy::Ranked(r) = tie {
        if r.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: r.len(),
            });
        }
    }
    if n == 2 {
        return Ok(HuffmanBuild {
            tree: LabeledTree::from_edges(2, &[(0, 1)])?,
            merges: Vec::new(),
            final_star: Vec::new(),
            heap_ops: 0,
        });
    }

    // normalize -0.0 so that total_cmp agrees with numeric order
    let mut weight: Vec<f64> = mu.iter().map(|&w| w + 0.0).collect();
    let mut vacant_pendant: BinaryHeap<Reverse<(Weight, usize, usize)>> = BinaryHeap::new();
    let mut vacant_internal: BinaryHeap<Reverse<(Weight, usize, usize, usize)>> = BinaryHeap::new();
    let mut heap_ops = 0usize;
    for v in 0..n {
        if d.is_internal(v) {
            vacant_internal.push(Reverse((Weight(weight[v]), d.degree(v), tie.rank(v), v)));
        } else {
            vacant_pendant.push(Reverse((Weight(weight[v]), tie.rank(v), v)));
        }
        heap_ops += 1;
    }

    let internal = vacant_internal.len();
    let mut edges = Vec::with_capacity(n - 1);
    let mut merges = Vec::with_capacity(internal.saturating_sub(1));
    for _ in 1..internal {
        let Reverse((_, _, _, m)) = vacant_internal.pop().expect("internal vertex left");
        heap_ops += 1;
        let mut children = Vec::with_capacity(d.degree(m) - 1);
        let mut child_weights = Vec::with_capacity(d.degree(m) - 1);
        for _ in 1..d.degree(m) {
            let Reverse((Weight(w), _, c)) = vacant_pendant
                .pop()
                .ok_or_else(|| Error::NotGenerating("ran out of pendant vertices".into()))?;
            heap_ops += 1;
            edges.push((c, m));
            weight[m] += w;
            children.push(c);
            child_weights.push(w);
        }
        merges.push(Merge {
            parent: m,
            children,
            child_weights,
            weight: weight[m],
        });
        vacant_pendant.push(Reverse((Weight(weight[m]), tie.rank(m), m)));
        heap_ops += 1;
    }

    let Reverse((_, _, _, root)) = vacant_internal.pop().expect("one internal vertex remains");
    heap_ops += 1;
    let mut final_star = Vec::with_capacity(vacant_pendant.len());
    while let Some(Reverse((Weight(w), _, c))) = vacant_pendant.pop() {
        heap_ops += 1;
        edges.push((c, root));
        final_star.push(w);
    }
    if final_star.len() != d.degree(root) {
        return Err(Error::NotGenerating(format!(
            "final vertex {} has {} vacant neighbours but degree {}",
            root + 1,
            final_star.len(),
            d.degree(root)
        )));
    }
    let tree = LabeledTree::from_edges(n, &edges)?;
    Ok(HuffmanBuild {
        tree,
        merges,
        final_star,
        heap_ops,
    })
}

/// A member of the Huffman family for `(mu, d)`.
pub fn huffman_tree(mu: &[f64], d: &DegreeSequence, tie: &TieBreakPolicy) -> Result<LabeledTree> {
    huffman_build(mu, d, tie).map(|b| b.tree)
}

/// Huffman tree for unit weights, also known as the greedy or BFS tree.
pub fn greedy_tree(d: &DegreeSequence) -> LabeledTree {
    huffman_tree(&vec![1.0; d.len()], d, &TieBreakPolicy::LowestIndex)
        .expect("unit weights are always admissible")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{enumerate_trees, wiener_index};
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ds(d: &[usize]) -> DegreeSequence {
        DegreeSequence::new(d.to_vec()).unwrap()
    }

    #[test]
    fn monotonicity() {
        let d = ds(&[1, 2, 3, 1, 1]);
        assert!(is_monotone(&[5.0, 2.0, 3.0, 0.0, 0.0], &d).unwrap());
        assert!(!is_monotone(&[0.0, 4.0, 1.0, 0.0, 0.0], &d).unwrap());
        assert!(is_monotone(&[2.0; 5], &d).unwrap());
        assert!(is_monotone(&[1.0, 1.0], &ds(&[1, 1])).unwrap());
        assert!(is_monotone(&[1.0; 3], &d).is_err());
        // classes 2 and 4 with no class 3 in between still constrain each other
        let gap = ds(&[1, 1, 1, 1, 2, 4]);
        assert!(!is_monotone(&[0.0, 0.0, 0.0, 0.0, 3.0, 1.0], &gap).unwrap());
    }

    #[test]
    fn figure_two_merge_sequence() {
        let mu = [1.0, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let d = ds(&[1, 1, 1, 1, 1, 1, 1, 3, 3, 3, 3, 3]);
        let b = huffman_build(&mu, &d, &TieBreakPolicy::LowestIndex).unwrap();
        let seq: Vec<(Vec<f64>, f64)> = b
            .merges
            .iter()
            .map(|m| (m.child_weights.clone(), m.weight))
            .collect();
        assert_eq!(
            seq,
            vec![
                (vec![1.0, 1.0], 2.0),
                (vec![2.0, 2.0], 4.0),
                (vec![4.0, 4.0], 8.0),
                (vec![8.0, 8.0], 16.0),
            ]
        );
        let mut star = b.final_star.clone();
        star.sort_by(f64::total_cmp);
        assert_eq!(star, vec![16.0, 16.0, 32.0]);
        assert!(b.tree.matches(&d));

        // the internal vertices form a path here, the greedy tree is balanced
        let greedy = greedy_tree(&d);
        assert_ne!(b.tree.diameter(), greedy.diameter());
        let ones = [1.0; 12];
        assert_ne!(
            wiener_index(&ones, &b.tree).unwrap(),
            wiener_index(&ones, &greedy).unwrap()
        );
    }

    #[test]
    fn unique_topologies() {
        let star =
            huffman_tree(&[1.0; 4], &ds(&[3, 1, 1, 1]), &TieBreakPolicy::LowestIndex).unwrap();
        assert_eq!(star.edges(), &[(0, 1), (0, 2), (0, 3)]);
        assert_eq!(greedy_tree(&ds(&[3, 1, 1, 1])), star);
        let path = greedy_tree(&ds(&[1, 2, 2, 1]));
        assert_eq!(path.diameter(), 3);
        assert_eq!(greedy_tree(&ds(&[1, 1])).edges(), &[(0, 1)]);
    }

    #[test]
    fn greedy_tree_minimizes_unit_wiener_index() {
        let d = ds(&[1, 1, 1, 1, 3, 3]);
        let ones = [1.0; 6];
        let g = wiener_index(&ones, &greedy_tree(&d)).unwrap();
        let best = enumerate_trees(&d)
            .unwrap()
            .map(|t| wiener_index(&ones, &t).unwrap())
            .fold(f64::INFINITY, f64::min);
        assert_eq!(g, best);
        // the two centres are adjacent and carry two leaves each
        let t = greedy_tree(&d);
        assert!(t.edges().contains(&(4, 5)));
        assert_eq!(t.diameter(), 3);
    }

    #[test]
    fn rejects_bad_weights() {
        let d = ds(&[1, 2, 1]);
        assert!(huffman_tree(&[1.0, -1.0, 0.0], &d, &TieBreakPolicy::LowestIndex).is_err());
        assert!(huffman_tree(&[1.0, f64::NAN, 0.0], &d, &TieBreakPolicy::LowestIndex).is_err());
        assert!(huffman_tree(&[1.0, 1.0], &d, &TieBreakPolicy::LowestIndex).is_err());
    }

    fn random_monotone(d: &DegreeSequence, rng: &mut impl Rng, integer: bool) -> Vec<f64> {
        let mut mu: Vec<f64> = (0..d.len())
            .map(|_| {
                if integer {
                    rng.gen_range(0..4) as f64
                } else {
                    rng.gen::<f64>()
                }
            })
            .collect();
        let mut internal: Vec<f64> = d
            .internal_classes()
            .iter()
            .flat_map(|(_, m)| m.iter().map(|&v| mu[v]))
            .collect();
        internal.sort_by(f64::total_cmp);
        let mut k = 0;
        for (_, members) in d.internal_classes() {
            for v in members {
                mu[v] = internal[k];
                k += 1;
            }
        }
        mu
    }

    #[test]
    fn tie_breaks_do_not_change_wiener_index() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..200 {
            let d = ds(&[1, 1, 1, 1, 1, 1, 1, 2, 3, 3, 4, 1, 4]);
            // small integer weights force many exact ties
            let mu = random_monotone(&d, &mut rng, true);
            let base = wiener_index(
                &mu,
                &huffman_tree(&mu, &d, &TieBreakPolicy::LowestIndex).unwrap(),
            )
            .unwrap();
            for _ in 0..5 {
                let mut ranks: Vec<usize> = (0..d.len()).collect();
                ranks.shuffle(&mut rng);
                let t = huffman_tree(&mu, &d, &TieBreakPolicy::Ranked(ranks)).unwrap();
                assert!(t.matches(&d));
                let wi = wiener_index(&mu, &t).unwrap();
                assert!((wi - base).abs() <= 1e-9 * base.max(1.0), "{wi} vs {base}");
            }
        }
    }

    #[test]
    fn heap_operations_are_n_log_n() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for &n in &[1_000usize, 10_000, 100_000] {
            let d = crate::generate::gen_degree_sequence(n, &mut rng);
            let mu: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
            let b = huffman_build(&mu, &d, &TieBreakPolicy::LowestIndex).unwrap();
            assert!(b.tree.matches(&d));
            // every vertex enters and leaves a queue at most twice
            assert!(b.heap_ops <= 4 * n, "{} ops for n = {n}", b.heap_ops);
        }
    }
}
