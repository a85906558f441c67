//! Random instances: degree sequences, rank-one flows and dense/sparse random flows.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{DegreeSequence, FlowMatrix};

/// Smallest and largest internal degree drawn by [`gen_degree_sequence`].
pub const INTERNAL_DEGREES: (usize, usize) = (2, 5);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub n: usize,
    /// Diversity factor: weights are `U(0,1)^beta`.
    pub beta: f64,
    /// Probability that a pair keeps its flow.
    pub sigma: f64,
    pub seed: u64,
}

impl GenConfig {
    pub fn new(n: usize, beta: f64, sigma: f64, seed: u64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidFlow(format!("n must be at least 2, got {n}")));
        }
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::InvalidFlow(format!(
                "beta must be finite and >= 0, got {beta}"
            )));
        }
        if !(sigma > 0.0 && sigma <= 1.0) {
            return Err(Error::InvalidFlow(format!(
                "sigma must lie in (0, 1], got {sigma}"
            )));
        }
        Ok(Self {
            n,
            beta,
            sigma,
            seed,
        })
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

/// Independent generator for instance `index` of a run seeded with `master`.
pub fn instance_rng(master: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng
}

/// Draws internal degrees uniformly from `{2, ..., 5}` until the pendant
/// vertices complete a generating sequence; a draw that would overshoot is
/// re-sampled. Vertex positions are shuffled.
pub fn gen_degree_sequence<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DegreeSequence {
    assert!(n >= 2, "a tree needs at least two vertices");
    let (lo, hi) = INTERNAL_DEGREES;
    // internal degrees minus one must add up to n - 2
    let mut remaining = n - 2;
    let mut degrees = Vec::with_capacity(n);
    while remaining > 0 {
        let mut d = rng.gen_range(lo..=hi);
        while d - 1 > remaining {
            d = rng.gen_range(lo..=hi);
        }
        degrees.push(d);
        remaining -= d - 1;
    }
    degrees.resize(n, 1);
    degrees.shuffle(rng);
    DegreeSequence::new(degrees).expect("construction yields a generating sequence")
}

/// Assigns weights so that internal vertices are sorted ascending by degree.
/// Pendant weights are left where they were drawn.
pub fn make_monotone(weights: &mut [f64], d: &DegreeSequence) {
    let classes = d.internal_classes();
    let mut internal: Vec<f64> = classes
        .iter()
        .flat_map(|(_, members)| members.iter().map(|&v| weights[v]))
        .collect();
    internal.sort_by(f64::total_cmp);
    let mut next = internal.into_iter();
    for (_, members) in &classes {
        for &v in members {
            weights[v] = next.next().expect("same number of internal vertices");
        }
    }
}

/// `nu_i = U(0,1)^beta`, monotone in `d`, and `A = nu nu^T - diag(nu^2)`.
pub fn gen_rank_one<R: Rng + ?Sized>(
    d: &DegreeSequence,
    beta: f64,
    rng: &mut R,
) -> Result<(FlowMatrix, Vec<f64>)> {
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::InvalidFlow(format!(
            "beta must be finite and >= 0, got {beta}"
        )));
    }
    let mut nu: Vec<f64> = (0..d.len()).map(|_| rng.gen::<f64>().powf(beta)).collect();
    make_monotone(&mut nu, d);
    let a = FlowMatrix::from_lower(d.len(), |i, j| nu[i] * nu[j])?;
    Ok((a, nu))
}

/// Every unordered pair gets `U(0,1)^beta`, then survives with probability `sigma`.
pub fn gen_random_flow<R: Rng + ?Sized>(
    n: usize,
    beta: f64,
    sigma: f64,
    rng: &mut R,
) -> Result<FlowMatrix> {
    GenConfig::new(n, beta, sigma, 0)?;
    FlowMatrix::from_lower(n, |_, _| {
        let w = rng.gen::<f64>().powf(beta);
        let keep = rng.gen::<f64>() < sigma;
        if keep {
            w
        } else {
            0.0
        }
    })
}

/// Flow model of a generated instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InstanceKind {
    RankOne,
    Random,
}

/// Degrees first, then flows, both from `rng`. `sigma` only applies to random flows.
pub fn gen_instance<R: Rng + ?Sized>(
    kind: InstanceKind,
    cfg: &GenConfig,
    rng: &mut R,
) -> Result<(FlowMatrix, DegreeSequence)> {
    GenConfig::new(cfg.n, cfg.beta, cfg.sigma, cfg.seed)?;
    let d = gen_degree_sequence(cfg.n, rng);
    let a = match kind {
        InstanceKind::RankOne => gen_rank_one(&d, cfg.beta, rng)?.0,
        InstanceKind::Random => gen_random_flow(cfg.n, cfg.beta, cfg.sigma, rng)?,
    };
    Ok((a, d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::huffman::is_monotone;

    #[test]
    fn degree_sequences_are_generating() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in 2..200 {
            let d = gen_degree_sequence(n, &mut rng);
            assert_eq!(d.len(), n);
            assert_eq!(d.as_slice().iter().sum::<usize>(), 2 * (n - 1));
            assert!(d.as_slice().iter().all(|&x| x == 1 || (2..=5).contains(&x)));
        }
    }

    #[test]
    fn small_degree_sequences() {
        // n = 4: internal degrees minus one add up to 2, so {3} or {2, 2}
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut seen = std::collections::BTreeSet::new();
        for _ in 0..200 {
            let mut d = gen_degree_sequence(4, &mut rng).as_slice().to_vec();
            d.sort_unstable();
            seen.insert(d);
        }
        let expected: std::collections::BTreeSet<Vec<usize>> =
            [vec![1, 1, 1, 3], vec![1, 1, 2, 2]].into_iter().collect();
        assert_eq!(seen, expected);
    }

    #[test]
    fn rank_one_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let d = gen_degree_sequence(30, &mut rng);
        let (a, nu) = gen_rank_one(&d, 0.0, &mut rng).unwrap();
        assert!(nu.iter().all(|&x| x == 1.0));
        assert!((0..30).all(|i| (0..30).all(|j| a.get(i, j) == if i == j { 0.0 } else { 1.0 })));

        let (a, nu) = gen_rank_one(&d, 1.0, &mut rng).unwrap();
        assert!(is_monotone(&nu, &d).unwrap());
        // A + diag(nu^2) = nu nu^T exactly
        for i in 0..30 {
            for j in 0..30 {
                let expect = if i == j { 0.0 } else { nu[i] * nu[j] };
                assert_eq!(a.get(i, j), expect);
            }
        }

        let d = gen_degree_sequence(2000, &mut rng);
        let (_, nu2) = gen_rank_one(&d, 2.0, &mut rng).unwrap();
        let (_, nu1) = gen_rank_one(&d, 1.0, &mut rng).unwrap();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(mean(&nu2) < 0.5 && mean(&nu2) < mean(&nu1));
        assert!((mean(&nu2) - 1.0 / 3.0).abs() < 0.03);
    }

    #[test]
    fn random_flow_density_and_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = gen_random_flow(20, 0.0, 1.0, &mut rng).unwrap();
        assert!((0..20).all(|i| (0..20).all(|j| a.get(i, j) == if i == j { 0.0 } else { 1.0 })));

        let n = 120;
        let a = gen_random_flow(n, 1.0, 0.3, &mut rng).unwrap();
        let pairs = (n * (n - 1) / 2) as f64;
        let sd = (0.3 * 0.7 / pairs).sqrt();
        assert!(
            (a.density() - 0.3).abs() < 3.0 * sd,
            "density {}",
            a.density()
        );
        assert_eq!(a.matrix(), &a.matrix().transpose());
    }

    #[test]
    fn seeds_are_deterministic() {
        let a = gen_random_flow(15, 1.0, 0.5, &mut instance_rng(42, 3)).unwrap();
        let b = gen_random_flow(15, 1.0, 0.5, &mut instance_rng(42, 3)).unwrap();
        let c = gen_random_flow(15, 1.0, 0.5, &mut instance_rng(42, 4)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(GenConfig::new(1, 1.0, 1.0, 0).is_err());
        assert!(GenConfig::new(5, -1.0, 1.0, 0).is_err());
        assert!(GenConfig::new(5, 1.0, 0.0, 0).is_err());
    }
}
