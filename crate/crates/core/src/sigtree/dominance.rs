//! Parent dominance in the signal tree.
//!
//! For a parent `p` with children `q`, the children co-occurrence block `Q`
//! is nonnegative and symmetric, so its spectral norm is attained by a
//! nonnegative principal eigenvector. The tree picks `p` as the available
//! node maximizing `sum_q chi_pq^2`, which is the same utility restricted to
//! the discrete set of tree nodes. This module checks both halves
//! numerically.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SignalTree;
use crate::cooccur::CoOccurrence;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerIterationConfig {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for PowerIterationConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Eigenpair {
    pub value: f64,
    /// Unit-norm eigenvector.
    pub vector: Vec<f64>,
    pub iterations: usize,
    /// `||Qv - value v|| / value` (0 for the zero matrix).
    pub relative_residual: f64,
}

fn matvec(q: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    q.iter().map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
}

pub(crate) fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Dominant eigenpair of a square matrix by power iteration from the
/// uniform vector. Converged when successive unit iterates differ by less
/// than the tolerance in every coordinate.
pub fn power_iteration(q: &[Vec<f64>], cfg: PowerIterationConfig) -> Result<Eigenpair> {
    let k = q.len();
    if k == 0 || q.iter().any(|r| r.len() != k) {
        return Err(Error::Parameter("power iteration needs a non-empty square matrix".into()));
    }
    let mut x = vec![1.0 / (k as f64).sqrt(); k];
    let mut last_change = f64::INFINITY;
    for it in 1..=cfg.max_iterations {
        let y = matvec(q, &x);
        let norm = norm2(&y);
        if norm == 0.0 {
            return Ok(Eigenpair {
                value: 0.0,
                vector: x,
                iterations: it,
                relative_residual: 0.0,
            });
        }
        let next: Vec<f64> = y.iter().map(|v| v / norm).collect();
        last_change = next.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        x = next;
        if last_change < cfg.tolerance {
            let qx = matvec(q, &x);
            let value: f64 = qx.iter().zip(&x).map(|(a, b)| a * b).sum();
            let resid: Vec<f64> = qx.iter().zip(&x).map(|(a, b)| a - value * b).collect();
            return Ok(Eigenpair {
                value,
                relative_residual: norm2(&resid) / value.abs().max(f64::MIN_POSITIVE),
                vector: x,
                iterations: it,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: cfg.max_iterations,
        last_change,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParentDominanceReport {
    pub parent: String,
    pub children: Vec<String>,
    /// `sum_q chi_pq^2` over the children.
    pub parent_score: u64,
    /// Scores of every node that could parent the children without
    /// creating a cycle (all nodes outside the children's subtrees).
    pub eligible_scores: Vec<(String, u64)>,
    pub parent_is_maximal: bool,
    /// Nodes inside the children's subtrees that out-score the parent.
    /// The spanning tree gives no guarantee for those.
    pub outscored_by_descendants: Vec<String>,
    pub eigen: Eigenpair,
    pub sampled_vectors: usize,
    /// Largest `||Qx|| / ||Qv||` over the sampled unit vectors.
    pub max_sample_ratio: f64,
    pub norm_bound_holds: bool,
}

/// Checks that `parent` maximizes the squared co-occurrence with its
/// children among eligible nodes, and that the principal eigenvector of the
/// children block attains `||Qx||` maximal over `samples` random unit
/// vectors.
pub fn verify_parent_dominance(
    c_h: &CoOccurrence,
    tree: &SignalTree,
    parent: usize,
    samples: usize,
    seed: u64,
) -> Result<ParentDominanceReport> {
    if parent >= tree.len() {
        return Err(Error::Lookup(format!("node #{parent}")));
    }
    let children = tree.children(parent).to_vec();
    if children.len() < 2 {
        return Err(Error::Parameter(format!(
            "node `{}` has {} children; need at least 2",
            tree.name(parent),
            children.len()
        )));
    }
    let score = |v: usize| -> u64 {
        children
            .iter()
            .map(|&q| {
                let c = u64::from(c_h.get(v, q));
                c * c
            })
            .sum()
    };
    let in_child_subtree = |v: usize| children.iter().any(|&c| tree.is_ancestor_or_self(c, v));
    let parent_score = score(parent);
    let eligible_scores: Vec<(String, u64)> = (0..tree.len())
        .filter(|&v| !in_child_subtree(v))
        .map(|v| (tree.name(v).to_string(), score(v)))
        .collect();
    let parent_is_maximal = eligible_scores.iter().all(|(_, s)| *s <= parent_score);
    let outscored_by_descendants = (0..tree.len())
        .filter(|&v| in_child_subtree(v) && !children.contains(&v) && score(v) > parent_score)
        .map(|v| tree.name(v).to_string())
        .collect();

    let q: Vec<Vec<f64>> = children
        .iter()
        .map(|&a| children.iter().map(|&b| f64::from(c_h.get(a, b))).collect())
        .collect();
    let eigen = power_iteration(&q, PowerIterationConfig::default())?;
    let top = norm2(&matvec(&q, &eigen.vector));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_sample_ratio = 0.0f64;
    for _ in 0..samples {
        let x = random_unit_vector(&mut rng, children.len());
        let r = norm2(&matvec(&q, &x));
        max_sample_ratio = max_sample_ratio.max(if top > 0.0 { r / top } else { 0.0 });
    }
    Ok(ParentDominanceReport {
        parent: tree.name(parent).to_string(),
        children: children.iter().map(|&c| tree.name(c).to_string()).collect(),
        parent_score,
        eligible_scores,
        parent_is_maximal,
        outscored_by_descendants,
        eigen,
        sampled_vectors: samples,
        norm_bound_holds: max_sample_ratio <= 1.0 + 1e-12,
        max_sample_ratio,
    })
}

pub(crate) fn random_unit_vector<R: Rng>(rng: &mut R, k: usize) -> Vec<f64> {
    loop {
        let x: Vec<f64> = (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = norm2(&x);
        if n > 1e-6 {
            return x.into_iter().map(|v| v / n).collect();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sigtree::build_mst;

    #[test]
    fn identical_children_give_symmetric_vector() {
        let q = vec![vec![5.0, 5.0], vec![5.0, 5.0]];
        let e = power_iteration(&q, PowerIterationConfig::default()).unwrap();
        let s = 1.0 / 2f64.sqrt();
        assert!((e.vector[0] - s).abs() < 1e-12 && (e.vector[1] - s).abs() < 1e-12);
        assert!((e.value - 10.0).abs() < 1e-12);
    }

    #[test]
    fn two_by_two_matches_characteristic_polynomial() {
        // [[a, b], [b, d]]: lambda = (a + d)/2 + sqrt(((a - d)/2)^2 + b^2)
        for (a, b, d) in [(4.0, 1.0, 2.0), (10.0, 3.0, 10.0), (1.0, 0.0, 7.0), (9.0, 8.0, 8.0)] {
            let q = vec![vec![a, b], vec![b, d]];
            let e = power_iteration(&q, PowerIterationConfig::default()).unwrap();
            let rho = (a + d) / 2.0 + (((a - d) / 2.0) * ((a - d) / 2.0) + b * b).sqrt();
            assert!((norm2(&matvec(&q, &e.vector)) - rho).abs() < 1e-8 * rho);
            assert!(e.relative_residual < 1e-8);
            assert!(e.vector.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn zero_matrix_is_handled() {
        let e = power_iteration(&[vec![0.0, 0.0], vec![0.0, 0.0]], PowerIterationConfig::default()).unwrap();
        assert_eq!(e.value, 0.0);
    }

    #[test]
    fn non_convergence_reports_iterations() {
        // dominant eigenvalue is negative, so unit iterates flip sign forever
        let q = vec![vec![0.0, 2.0], vec![2.0, -1.0]];
        let r = power_iteration(&q, PowerIterationConfig { tolerance: 1e-10, max_iterations: 200 });
        assert!(matches!(r, Err(Error::NoConvergence { iterations: 200, .. })));
    }

    #[test]
    fn report_on_a_star() {
        // hub _s0 co-occurs strongly with all others
        let n = 4;
        let mut c = vec![0u32; n * n];
        for i in 0..n {
            for j in 0..n {
                c[i * n + j] = if i == j { 30 } else if i == 0 || j == 0 { 20 } else { 5 };
            }
        }
        let names = (0..n).map(|i| format!("_s{i}")).collect();
        let ch = CoOccurrence::from_counts(names, n, 40, c).unwrap();
        let tree = build_mst(&ch).unwrap();
        assert_eq!(tree.root(), 0);
        let rep = verify_parent_dominance(&ch, &tree, 0, 100, 7).unwrap();
        assert_eq!(rep.children.len(), 3);
        assert_eq!(rep.parent_score, 3 * 400);
        assert!(rep.parent_is_maximal);
        assert!(rep.norm_bound_holds);
        assert!(rep.eigen.relative_residual < 1e-8);
        assert!(verify_parent_dominance(&ch, &tree, 1, 10, 7).is_err());
    }
}
