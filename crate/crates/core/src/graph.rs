//! Labeled trees, degree sequences, flow matrices and the tree distance
//! functionals built on top of them.
//!
//! Vertices are 0-based internally. The textual edge-list format is 1-based.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};
use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest vertex count accepted by [`enumerate_trees`].
pub const ENUMERATION_LIMIT: usize = 10;

/// A generating degree sequence: positive integers summing to `2(n - 1)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct DegreeSequence(Vec<usize>);

impl DegreeSequence {
    pub fn new(degrees: Vec<usize>) -> Result<Self> {
        let n = degrees.len();
        if n < 2 {
            return Err(Error::NotGenerating(format!(
                "need at least two vertices, got {n}"
            )));
        }
        if let Some(i) = degrees.iter().position(|&d| d < 1) {
            return Err(Error::NotGenerating(format!(
                "vertex {} has degree 0",
                i + 1
            )));
        }
        let sum: usize = degrees.iter().sum();
        if sum != 2 * (n - 1) {
            return Err(Error::NotGenerating(format!(
                "degree sum {sum} differs from 2(n-1) = {}",
                2 * (n - 1)
            )));
        }
        Ok(Self(degrees))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn degree(&self, v: usize) -> usize {
        self.0[v]
    }

    pub fn is_internal(&self, v: usize) -> bool {
        self.0[v] > 1
    }

    pub fn internal_count(&self) -> usize {
        self.0.iter().filter(|&&d| d > 1).count()
    }

    /// Prüfer multiset: vertex `v` repeated `d_v - 1` times, ascending.
    pub fn pruefer_multiset(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .flat_map(|(v, &d)| std::iter::repeat(v).take(d - 1))
            .collect()
    }

    /// Internal vertices grouped by degree, groups in ascending degree order.
    pub fn internal_classes(&self) -> Vec<(usize, Vec<usize>)> {
        let mut classes: Vec<(usize, Vec<usize>)> = Vec::new();
        let mut order: Vec<usize> = (0..self.len()).filter(|&v| self.is_internal(v)).collect();
        order.sort_by_key(|&v| (self.0[v], v));
        for v in order {
            match classes.last_mut() {
                Some((d, members)) if *d == self.0[v] => members.push(v),
                _ => classes.push((self.0[v], vec![v])),
            }
        }
        classes
    }
}

/// Validates a raw degree sequence.
pub fn validate_degree_sequence(degrees: &[usize]) -> Result<DegreeSequence> {
    DegreeSequence::new(degrees.to_vec())
}

impl TryFrom<Vec<usize>> for DegreeSequence {
    type Error = Error;

    fn try_from(v: Vec<usize>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<DegreeSequence> for Vec<usize> {
    fn from(d: DegreeSequence) -> Self {
        d.0
    }
}

/// Symmetric, entrywise nonnegative matrix with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowMatrix(DMatrix<f64>);

impl FlowMatrix {
    /// Validates `m`. Asymmetry up to `1e-9` relative is tolerated and averaged away.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        let n = m.nrows();
        let scale = m.amax().max(1.0);
        let mut out = m.clone();
        for i in 0..n {
            if !m[(i, i)].is_finite() || m[(i, i)] != 0.0 {
                return Err(Error::InvalidFlow(format!(
                    "nonzero diagonal at vertex {}",
                    i + 1
                )));
            }
            for j in 0..i {
                let (a, b) = (m[(i, j)], m[(j, i)]);
                if !a.is_finite() || !b.is_finite() {
                    return Err(Error::InvalidFlow(format!(
                        "non-finite entry at ({}, {})",
                        i + 1,
                        j + 1
                    )));
                }
                if (a - b).abs() > 1e-9 * scale {
                    return Err(Error::NotSymmetric((a - b).abs()));
                }
                if a < 0.0 || b < 0.0 {
                    return Err(Error::InvalidFlow(format!(
                        "negative flow at ({}, {})",
                        i + 1,
                        j + 1
                    )));
                }
                let avg = 0.5 * (a + b);
                out[(i, j)] = avg;
                out[(j, i)] = avg;
            }
        }
        Ok(Self(out))
    }

    pub fn zeros(n: usize) -> Self {
        Self(DMatrix::zeros(n, n))
    }

    /// Builds a flow matrix from a function evaluated on the strict lower triangle.
    pub fn from_lower(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..i {
                let v = f(i, j);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        Self::new(m)
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    /// Sum over all ordered pairs.
    pub fn total(&self) -> f64 {
        self.0.sum()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self(&self.0 * factor)
    }

    /// Fraction of nonzero off-diagonal entries.
    pub fn density(&self) -> f64 {
        let n = self.n();
        if n < 2 {
            return 0.0;
        }
        let nnz = (0..n)
            .flat_map(|i| (0..i).map(move |j| (i, j)))
            .filter(|&(i, j)| self.0[(i, j)] != 0.0)
            .count();
        nnz as f64 / (n * (n - 1) / 2) as f64
    }
}

/// A tree on vertices `0..n`. Distinct labelings are distinct trees.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "TreeRecord", into = "TreeRecord")]
pub struct LabeledTree {
    n: usize,
    /// Sorted, each pair stored as `(min, max)`.
    edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct TreeRecord {
    n: usize,
    edges: Vec<(usize, usize)>,
}

impl TryFrom<TreeRecord> for LabeledTree {
    type Error = Error;

    fn try_from(r: TreeRecord) -> Result<Self> {
        Self::from_edges(r.n, &r.edges)
    }
}

impl From<LabeledTree> for TreeRecord {
    fn from(t: LabeledTree) -> Self {
        Self {
            n: t.n,
            edges: t.edges,
        }
    }
}

impl LabeledTree {
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidTree(format!(
                "need at least two vertices, got {n}"
            )));
        }
        if edges.len() != n - 1 {
            return Err(Error::InvalidTree(format!(
                "{} edges for {n} vertices",
                edges.len()
            )));
        }
        let mut normalized = Vec::with_capacity(edges.len());
        let mut adjacency = vec![Vec::new(); n];
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::InvalidTree(format!(
                    "edge ({}, {}) out of range",
                    u + 1,
                    v + 1
                )));
            }
            if u == v {
                return Err(Error::InvalidTree(format!("self loop at {}", u + 1)));
            }
            normalized.push((u.min(v), u.max(v)));
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        normalized.sort_unstable();
        if normalized.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidTree("duplicate edge".into()));
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        let tree = Self {
            n,
            edges: normalized,
            adjacency,
        };
        let reached = tree.bfs_order(0).len();
        if reached != n {
            return Err(Error::InvalidTree(format!(
                "disconnected: {reached} of {n} vertices reachable"
            )));
        }
        Ok(tree)
    }

    /// Builds a tree and checks its degrees against `d`.
    pub fn with_degrees(edges: &[(usize, usize)], d: &DegreeSequence) -> Result<Self> {
        let tree = Self::from_edges(d.len(), edges)?;
        if !tree.matches(d) {
            return Err(Error::InvalidTree(
                "degrees differ from the declared sequence".into(),
            ));
        }
        Ok(tree)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.adjacency.iter().map(Vec::len).collect()
    }

    pub fn matches(&self, d: &DegreeSequence) -> bool {
        d.len() == self.n && (0..self.n).all(|v| self.degree(v) == d.degree(v))
    }

    fn bfs_order(&self, root: usize) -> Vec<usize> {
        let mut seen = vec![false; self.n];
        let mut order = Vec::with_capacity(self.n);
        let mut queue = VecDeque::from([root]);
        seen[root] = true;
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &w in &self.adjacency[v] {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        order
    }

    /// Hop distances from `source` to every vertex.
    pub fn distances_from(&self, source: usize) -> Vec<u32> {
        let mut dist = vec![u32::MAX; self.n];
        let mut queue = VecDeque::from([source]);
        dist[source] = 0;
        while let Some(v) = queue.pop_front() {
            for &w in &self.adjacency[v] {
                if dist[w] == u32::MAX {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    pub fn diameter(&self) -> u32 {
        let d0 = self.distances_from(0);
        let far = (0..self.n).max_by_key(|&v| d0[v]).unwrap_or(0);
        self.distances_from(far).into_iter().max().unwrap_or(0)
    }

    /// One `u v` pair per line, 1-based.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for &(u, v) in &self.edges {
            let _ = writeln!(out, "{} {}", u + 1, v + 1);
        }
        out
    }

    /// Parses the edge-list format; blank lines and `#` comments are ignored.
    /// The vertex count is the number of edges plus one.
    pub fn parse_edge_list(text: &str) -> Result<Self> {
        let mut edges = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let mut next = || -> Result<usize> {
                let tok = parts.next().ok_or_else(|| Error::Parse {
                    line: idx + 1,
                    msg: "expected two vertex ids".into(),
                })?;
                let id: usize = tok.parse().map_err(|_| Error::Parse {
                    line: idx + 1,
                    msg: format!("bad vertex id {tok:?}"),
                })?;
                if id == 0 {
                    return Err(Error::Parse {
                        line: idx + 1,
                        msg: "vertex ids are 1-based".into(),
                    });
                }
                Ok(id - 1)
            };
            let u = next()?;
            let v = next()?;
            edges.push((u, v));
        }
        Self::from_edges(edges.len() + 1, &edges)
    }
}

/// Hop-distance matrix `D` of a tree and `P = ((n - 1) / 2) J - D`.
#[derive(Debug, Clone)]
pub struct TreeMetrics {
    n: usize,
    distances: Vec<u32>,
    p: DMatrix<f64>,
}

impl TreeMetrics {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn distance(&self, i: usize, j: usize) -> u32 {
        self.distances[i * self.n + j]
    }

    pub fn distance_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.distance(i, j) as f64)
    }

    pub fn p(&self) -> &DMatrix<f64> {
        &self.p
    }
}

/// All-pairs distances by one BFS per vertex.
pub fn distance_matrix(tree: &LabeledTree) -> TreeMetrics {
    let n = tree.n();
    let mut distances = Vec::with_capacity(n * n);
    for s in 0..n {
        distances.extend(tree.distances_from(s));
    }
    let half = (n as f64 - 1.0) / 2.0;
    let p = DMatrix::from_fn(n, n, |i, j| half - distances[i * n + j] as f64);
    TreeMetrics { n, distances, p }
}

/// `P(T) = ((n - 1) / 2) J - D(T)`.
pub fn p_matrix(tree: &LabeledTree) -> DMatrix<f64> {
    distance_matrix(tree).p
}

/// `tr D(T) A`, the sum of `A_ij d_T(i, j)` over ordered pairs.
pub fn tree_cost(flows: &FlowMatrix, tree: &LabeledTree) -> Result<f64> {
    let n = tree.n();
    if flows.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: flows.n(),
        });
    }
    let a = flows.matrix();
    let mut total = 0.0;
    for s in 0..n {
        let dist = tree.distances_from(s);
        // column s equals row s by symmetry and is contiguous in storage
        let col = a.column(s);
        total += dist
            .iter()
            .zip(col.iter())
            .map(|(&d, &w)| d as f64 * w)
            .sum::<f64>();
    }
    Ok(total)
}

/// Weighted Wiener index `mu^T D(T) mu` over ordered pairs.
///
/// Computed in O(n) from edge cuts: each edge separating weight `w` from
/// `W - w` contributes `2 w (W - w)`.
pub fn wiener_index(mu: &[f64], tree: &LabeledTree) -> Result<f64> {
    let n = tree.n();
    if mu.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: mu.len(),
        });
    }
    let order = tree.bfs_order(0);
    let mut parent = vec![usize::MAX; n];
    for &v in &order {
        for &w in tree.neighbors(v) {
            if w != parent[v] {
                parent[w] = v;
            }
        }
    }
    let total: f64 = mu.iter().sum();
    let mut subtree = mu.to_vec();
    let mut wi = 0.0;
    for &v in order.iter().rev() {
        if v == order[0] {
            continue;
        }
        let w = subtree[v];
        wi += 2.0 * w * (total - w);
        subtree[parent[v]] += w;
    }
    Ok(wi)
}

/// `mu^T P(T) mu = ((n - 1) / 2) (sum mu)^2 - WI_mu(T)`.
pub fn p_quadratic_form(mu: &[f64], tree: &LabeledTree) -> Result<f64> {
    let s: f64 = mu.iter().sum();
    Ok((tree.n() as f64 - 1.0) / 2.0 * s * s - wiener_index(mu, tree)?)
}

/// Decodes a Prüfer word over `0..n` into a tree.
pub fn decode_pruefer(n: usize, word: &[usize]) -> Result<LabeledTree> {
    if n < 2 || word.len() != n - 2 {
        return Err(Error::InvalidTree(format!(
            "Prüfer word of length {} for {n} vertices",
            word.len()
        )));
    }
    let mut degree = vec![1usize; n];
    for &v in word {
        if v >= n {
            return Err(Error::InvalidTree(format!(
                "Prüfer entry {} out of range",
                v + 1
            )));
        }
        degree[v] += 1;
    }
    let mut leaves: BinaryHeap<Reverse<usize>> =
        (0..n).filter(|&v| degree[v] == 1).map(Reverse).collect();
    let mut edges = Vec::with_capacity(n - 1);
    for &v in word {
        let Reverse(leaf) = leaves.pop().expect("a tree always has a leaf");
        edges.push((leaf, v));
        degree[v] -= 1;
        if degree[v] == 1 {
            leaves.push(Reverse(v));
        }
    }
    let Reverse(a) = leaves.pop().expect("two vertices remain");
    let Reverse(b) = leaves.pop().expect("two vertices remain");
    edges.push((a, b));
    LabeledTree::from_edges(n, &edges)
}

/// Uniform sample from the trees with degree sequence `d`.
///
/// Every tree in T(d) corresponds to exactly one Prüfer word in which vertex
/// `v` occurs `d_v - 1` times, so shuffling that multiset is uniform over T(d).
pub fn random_tree<R: Rng + ?Sized>(d: &DegreeSequence, rng: &mut R) -> LabeledTree {
    let mut word = d.pruefer_multiset();
    word.shuffle(rng);
    decode_pruefer(d.len(), &word).expect("generating sequence yields a valid word")
}

/// Every tree with degree sequence `d`, each exactly once.
pub fn enumerate_trees(d: &DegreeSequence) -> Result<TreeEnumeration> {
    if d.len() > ENUMERATION_LIMIT {
        return Err(Error::TooLarge {
            n: d.len(),
            limit: ENUMERATION_LIMIT,
        });
    }
    Ok(TreeEnumeration {
        n: d.len(),
        word: Some(d.pruefer_multiset()),
    })
}

/// Iterator over distinct permutations of a Prüfer multiset, in lexicographic order.
#[derive(Debug, Clone)]
pub struct TreeEnumeration {
    n: usize,
    word: Option<Vec<usize>>,
}

impl Iterator for TreeEnumeration {
    type Item = LabeledTree;

    fn next(&mut self) -> Option<LabeledTree> {
        let word = self.word.take()?;
        let tree = decode_pruefer(self.n, &word).expect("permutation of a valid multiset");
        let mut next = word;
        if next_permutation(&mut next) {
            self.word = Some(next);
        }
        Some(tree)
    }
}

fn next_permutation(v: &mut [usize]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let mut i = v.len() - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = v.len() - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}
