//! Brute-force reference implementations and random instance generators.
//!
//! Everything here works from plain edge lists and breadth-first search so
//! it shares no code path with the optimized modules it checks. Weights on
//! generated instances are multiples of 1/64 so every path sum is exact in
//! `f64` and ties are reproduced exactly.

use std::collections::{BTreeSet, VecDeque};

use rand::seq::SliceRandom;
use rand::Rng;

use crate::attach::{AlphaMode, AttachedTree, Attachment, CandidateWeights};
use crate::cooccur::CoOccurrence;
use crate::error::Result;
use crate::panel::{business_days, BinaryPanel, IndicatorKind};
use crate::sigtree::{SignalTree, TreeEdge};

/// Window length of generated short-run counts; weights land on k/64.
pub const SHORT_WINDOW: usize = 8;

/// Decodes a Prüfer sequence over `n` nodes into its tree edges.
pub fn prufer_decode(seq: &[usize], n: usize) -> Vec<(usize, usize)> {
    let mut degree = vec![1usize; n];
    for &s in seq {
        degree[s] += 1;
    }
    let mut edges = Vec::with_capacity(n - 1);
    for &s in seq {
        let leaf = (0..n).find(|&v| degree[v] == 1).expect("a leaf always exists");
        edges.push((leaf, s));
        degree[leaf] -= 1;
        degree[s] -= 1;
    }
    let rest: Vec<usize> = (0..n).filter(|&v| degree[v] == 1).collect();
    edges.push((rest[0], rest[1]));
    edges
}

/// Largest total squared co-occurrence over all `n^(n-2)` labeled
/// spanning trees of the signal block.
pub fn max_spanning_chi_squared(c: &CoOccurrence) -> u64 {
    let n = c.n_signals();
    assert!(n >= 2, "need at least two signals");
    let score = |edges: &[(usize, usize)]| -> u64 {
        edges
            .iter()
            .map(|&(a, b)| {
                let x = u64::from(c.get(a, b));
                x * x
            })
            .sum()
    };
    if n == 2 {
        return score(&[(0, 1)]);
    }
    let mut seq = vec![0usize; n - 2];
    let mut best = 0;
    loop {
        best = best.max(score(&prufer_decode(&seq, n)));
        // odometer increment
        let mut i = 0;
        loop {
            if i == seq.len() {
                return best;
            }
            seq[i] += 1;
            if seq[i] < n {
                break;
            }
            seq[i] = 0;
            i += 1;
        }
    }
}

/// Undirected weighted adjacency lists from an edge list.
pub fn adjacency(k: usize, edges: &[(usize, usize, f64)]) -> Vec<Vec<(usize, f64)>> {
    let mut adj = vec![Vec::new(); k];
    for &(a, b, w) in edges {
        adj[a].push((b, w));
        adj[b].push((a, w));
    }
    adj
}

/// Distances and BFS predecessors from `src` in a forest.
pub fn bfs(adj: &[Vec<(usize, f64)>], src: usize) -> (Vec<f64>, Vec<Option<usize>>) {
    let mut dist = vec![f64::INFINITY; adj.len()];
    let mut prev = vec![None; adj.len()];
    dist[src] = 0.0;
    let mut q = VecDeque::from([src]);
    while let Some(v) = q.pop_front() {
        for &(u, w) in &adj[v] {
            if dist[u].is_infinite() {
                dist[u] = dist[v] + w;
                prev[u] = Some(v);
                q.push_back(u);
            }
        }
    }
    (dist, prev)
}

/// Undirected edges (min, max) on the BFS path between two nodes.
pub fn path_edges(adj: &[Vec<(usize, f64)>], a: usize, b: usize) -> Vec<(usize, usize)> {
    let (_, prev) = bfs(adj, a);
    let mut out = Vec::new();
    let mut v = b;
    while let Some(p) = prev[v] {
        out.push((p.min(v), p.max(v)));
        v = p;
    }
    out
}

pub fn tree_edge_list(tree: &SignalTree) -> Vec<(usize, usize, f64)> {
    tree.edges().iter().map(|e| (e.a, e.b, e.weight)).collect()
}

/// Node set of the union of pairwise paths between the anchors (plus the
/// root in literal mode).
pub fn path_union_nodes(tree: &SignalTree, anchors: &[usize], mode: AlphaMode) -> BTreeSet<usize> {
    let adj = adjacency(tree.len(), &tree_edge_list(tree));
    let mut ends: Vec<usize> = anchors.to_vec();
    if mode == AlphaMode::Literal {
        ends.push(tree.root());
    }
    let mut nodes: BTreeSet<usize> = ends.iter().copied().collect();
    for (i, &a) in ends.iter().enumerate() {
        for &b in &ends[i + 1..] {
            for (x, y) in path_edges(&adj, a, b) {
                nodes.insert(x);
                nodes.insert(y);
            }
        }
    }
    nodes
}

/// Weight of the union of paths from `from` to each of `to` in an
/// arbitrary forest.
pub fn path_union_weight(adj: &[Vec<(usize, f64)>], from: usize, to: &[usize]) -> f64 {
    let mut seen = BTreeSet::new();
    for &t in to {
        seen.extend(path_edges(adj, from, t));
    }
    seen.iter()
        .map(|&(a, b)| adj[a].iter().find(|&&(u, _)| u == b).expect("edge exists").1)
        .sum()
}

/// Argmin over candidate signals of `w(a) + min_{o in O} d(a, o)` by full
/// enumeration, ties to the smaller name.
pub fn brute_force_attachment(tree: &SignalTree, cand: &CandidateWeights, subtree: &BTreeSet<usize>) -> usize {
    let adj = adjacency(tree.len(), &tree_edge_list(tree));
    let cost = |a: usize| {
        let (d, _) = bfs(&adj, a);
        cand.weight(a) + subtree.iter().map(|&o| d[o]).fold(f64::INFINITY, f64::min)
    };
    let mut best = 0;
    let mut best_cost = cost(0);
    for a in 1..tree.len() {
        let c = cost(a);
        if c < best_cost || (c == best_cost && tree.name(a) < tree.name(best)) {
            best = a;
            best_cost = c;
        }
    }
    best
}

/// Brute-force greedy choice: largest count, ties to the smaller name.
pub fn brute_force_greedy(tree: &SignalTree, cand: &CandidateWeights) -> usize {
    let mut best = 0;
    for a in 1..tree.len() {
        if cand.chi(a) > cand.chi(best) || (cand.chi(a) == cand.chi(best) && tree.name(a) < tree.name(best)) {
            best = a;
        }
    }
    best
}

/// Gram matrix of a random binary panel: a valid co-occurrence matrix.
pub fn random_cooccurrence<R: Rng>(rng: &mut R, n: usize, rows: usize) -> CoOccurrence {
    let density: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..0.9)).collect();
    let x: Vec<Vec<u32>> = (0..rows)
        .map(|_| density.iter().map(|&p| u32::from(rng.gen_bool(p))).collect())
        .collect();
    let mut counts = vec![0u32; n * n];
    for r in &x {
        for i in 0..n {
            for j in 0..n {
                counts[i * n + j] += r[i] * r[j];
            }
        }
    }
    let names = shuffled_names(rng, n, "_s");
    CoOccurrence::from_counts(names, n, rows, counts).expect("gram matrix is valid")
}

fn shuffled_names<R: Rng>(rng: &mut R, n: usize, prefix: &str) -> Vec<String> {
    let mut names: Vec<String> = (0..n).map(|i| format!("{prefix}{i:02}")).collect();
    names.shuffle(rng);
    names
}

/// Random rooted tree with shuffled names and weights `k / 64`.
pub fn random_tree<R: Rng>(rng: &mut R, n: usize) -> SignalTree {
    let names = shuffled_names(rng, n, "_s");
    let edges = (1..n)
        .map(|v| TreeEdge {
            a: rng.gen_range(0..v),
            b: v,
            chi: 0,
            weight: f64::from(rng.gen_range(0u32..=64)) / 64.0,
        })
        .collect();
    let root = rng.gen_range(0..n);
    SignalTree::from_edges(names, 64, edges, root).expect("generated tree is valid")
}

/// One target-attachment problem: a tree, greedy peer attachments from
/// random short-run counts, the target's counts and its peer list.
#[derive(Debug, Clone)]
pub struct AttachInstance {
    pub tree: SignalTree,
    pub leaf_names: Vec<String>,
    pub attachments: Vec<Attachment>,
    pub target: usize,
    pub target_counts: Vec<u32>,
    pub peers: Vec<usize>,
}

impl AttachInstance {
    pub fn attached(&self) -> AttachedTree<'_> {
        AttachedTree::new(&self.tree, self.leaf_names.clone(), self.attachments.clone(), None)
            .expect("generated attachments are valid")
    }

    pub fn candidates(&self) -> CandidateWeights {
        CandidateWeights::from_counts(&self.target_counts, SHORT_WINDOW).expect("counts within window")
    }
}

fn random_counts<R: Rng>(rng: &mut R, n: usize) -> Vec<u32> {
    // a coarse range keeps ties frequent
    let top = rng.gen_range(1..=SHORT_WINDOW as u32);
    (0..n).map(|_| rng.gen_range(0..=top)).collect()
}

/// Random instance with `2 <= n <= n_max` signals and `2 <= m <= m_max`
/// leaves.
pub fn random_attach_instance<R: Rng>(rng: &mut R, n_max: usize, m_max: usize) -> Result<AttachInstance> {
    let n = rng.gen_range(2..=n_max);
    let m = rng.gen_range(2..=m_max);
    let tree = random_tree(rng, n);
    let leaf_names = shuffled_names(rng, m, "x");
    let attachments = (0..m)
        .map(|j| {
            let cand = CandidateWeights::from_counts(&random_counts(rng, n), SHORT_WINDOW)?;
            Ok(crate::attach::greedy_choice(&tree, j, &cand))
        })
        .collect::<Result<Vec<_>>>()?;
    let target = rng.gen_range(0..m);
    let mut others: Vec<usize> = (0..m).filter(|&j| j != target).collect();
    others.shuffle(rng);
    let k = rng.gen_range(1..=others.len());
    let mut peers = others[..k].to_vec();
    peers.sort_unstable();
    Ok(AttachInstance {
        target_counts: random_counts(rng, n),
        tree,
        leaf_names,
        attachments,
        target,
        peers,
    })
}

/// Panel of `n` signals and `m` assets with random magnitudes. `sign`
/// forces every signal level positive (1), negative (-1) or leaves it
/// random (0).
pub fn random_level_panel<R: Rng>(rng: &mut R, n: usize, m: usize, rows: usize, sign: i32) -> BinaryPanel {
    let mut names: Vec<String> = (0..n).map(|i| format!("_s{i:02}")).collect();
    names.extend((0..m).map(|j| format!("x{j}")));
    let mut levels = Vec::with_capacity(rows * (n + m));
    for _ in 0..rows {
        for _ in 0..n {
            let v: f64 = rng.gen_range(0.1..1.0);
            levels.push(match sign {
                1 => v,
                -1 => -v,
                _ if rng.gen_bool(0.5) => v,
                _ => -v,
            });
        }
        for _ in 0..m {
            levels.push(rng.gen_range(-0.02..0.02));
        }
    }
    let kinds = (0..n + m).map(|c| if c < n { IndicatorKind::Zscore } else { IndicatorKind::Return }).collect();
    let start = chrono::NaiveDate::from_ymd_opt(2001, 1, 1).expect("valid date");
    BinaryPanel::from_levels(business_days(start, rows), names, kinds, n, vec![0.0; n + m], levels)
        .expect("generated panel is valid")
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn prufer_enumeration_counts_cayley() {
        // every sequence decodes to a distinct spanning tree: n^(n-2) of them
        for n in 3usize..=5 {
            let mut trees = BTreeSet::new();
            let total = n.pow(n as u32 - 2);
            for code in 0..total {
                let seq: Vec<usize> = (0..n - 2).map(|i| code / n.pow(i as u32) % n).collect();
                let mut e: Vec<(usize, usize)> =
                    prufer_decode(&seq, n).into_iter().map(|(a, b)| (a.min(b), a.max(b))).collect();
                e.sort_unstable();
                trees.insert(e);
            }
            assert_eq!(trees.len(), total);
        }
    }

    #[test]
    fn path_union_on_siblings() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = random_tree(&mut rng, 6);
        for v in 0..6 {
            let one = path_union_nodes(&t, &[v], AlphaMode::Lca);
            assert_eq!(one.into_iter().collect::<Vec<_>>(), vec![v]);
        }
        let all: Vec<usize> = (0..6).collect();
        assert_eq!(path_union_nodes(&t, &all, AlphaMode::Lca).len(), 6);
    }

    #[test]
    fn generated_instances_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let inst = random_attach_instance(&mut rng, 12, 6).unwrap();
            assert!(!inst.peers.contains(&inst.target));
            assert!(!inst.peers.is_empty());
            assert_eq!(inst.target_counts.len(), inst.tree.len());
        }
    }
}
