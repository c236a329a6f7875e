//! Peer subtree, its contraction to a single node, and shortest paths on
//! the contracted graph.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sigtree::SignalTree;

/// How far the peer subtree extends above the peer attachment points.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlphaMode {
    /// Stop at the deepest common ancestor of the attachment points.
    #[default]
    Lca,
    /// Keep every ancestor chain up to the tree root.
    Literal,
}

/// Connected set of signal nodes spanning the peer attachment points,
/// topped by `alpha`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeerSubtree {
    member: Vec<bool>,
    alpha: usize,
}

impl PeerSubtree {
    /// Validated subtree: `nodes` connected in `tree`, containing `alpha`
    /// and no strict ancestor of it.
    pub fn new(tree: &SignalTree, nodes: &[usize], alpha: usize) -> Result<Self> {
        let mut member = vec![false; tree.len()];
        for &v in nodes {
            if v >= tree.len() {
                return Err(Error::Lookup(format!("node #{v}")));
            }
            member[v] = true;
        }
        if alpha >= tree.len() || !member[alpha] {
            return Err(Error::Parameter("alpha must belong to the peer subtree".into()));
        }
        // every non-alpha member must have its parent inside: connected,
        // with alpha as the unique top
        for v in (0..tree.len()).filter(|&v| member[v] && v != alpha) {
            match tree.parent(v) {
                Some(p) if member[p] => {}
                _ => return Err(Error::Parameter(format!("peer subtree is not connected at `{}`", tree.name(v)))),
            }
        }
        Ok(Self { member, alpha })
    }

    pub fn whole_tree(tree: &SignalTree) -> Self {
        Self {
            member: vec![true; tree.len()],
            alpha: tree.root(),
        }
    }

    pub fn alpha(&self) -> usize {
        self.alpha
    }

    pub fn contains(&self, node: usize) -> bool {
        self.member[node]
    }

    pub fn nodes(&self) -> Vec<usize> {
        (0..self.member.len()).filter(|&v| self.member[v]).collect()
    }

    pub fn len(&self) -> usize {
        self.member.iter().filter(|&&m| m).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Sum of the tree edges inside the subtree.
    pub fn weight(&self, tree: &SignalTree) -> f64 {
        (0..tree.len())
            .filter(|&v| self.member[v] && v != self.alpha)
            .map(|v| tree.parent_weight(v))
            .sum()
    }
}

/// Union of the climbs from each anchor to `alpha`.
pub fn peer_subtree(tree: &SignalTree, anchors: &[usize], mode: AlphaMode) -> Result<PeerSubtree> {
    let (&first, rest) = anchors
        .split_first()
        .ok_or_else(|| Error::Parameter("peer subtree needs at least one peer".into()))?;
    if let Some(a) = anchors.iter().find(|&&a| a >= tree.len()) {
        return Err(Error::Lookup(format!("node #{a}")));
    }
    let alpha = match mode {
        AlphaMode::Lca => rest.iter().fold(first, |l, &a| tree.lca(l, a)),
        AlphaMode::Literal => tree.root(),
    };
    let mut member = vec![false; tree.len()];
    member[alpha] = true;
    for &a in anchors {
        let mut v = a;
        while !member[v] {
            member[v] = true;
            v = tree.parent(v).expect("alpha is an ancestor of every anchor");
        }
    }
    Ok(PeerSubtree { member, alpha })
}

/// The signal tree with the peer subtree merged into one node, plus the
/// target and its candidate edges.
#[derive(Debug, Clone, PartialEq)]
pub struct ContractedGraph {
    /// Original signal node of each contracted id; `None` for the merged
    /// node and the target.
    pub labels: Vec<Option<usize>>,
    pub merged: usize,
    pub target: usize,
    pub adjacency: Vec<Vec<(usize, f64)>>,
}

impl ContractedGraph {
    pub fn node_count(&self) -> usize {
        self.labels.len()
    }

    /// Signal nodes plus the merged node, without the target.
    pub fn signal_node_count(&self) -> usize {
        self.labels.len() - 1
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }
}

/// Contracts `subtree` into a single node. Tree edges entering the subtree
/// keep their weight; the target reaches the merged node through its
/// cheapest candidate edge into the subtree.
pub fn contract(tree: &SignalTree, subtree: &PeerSubtree, candidate_weights: &[f64]) -> Result<ContractedGraph> {
    if candidate_weights.len() != tree.len() {
        return Err(Error::Parameter("one candidate weight per signal node required".into()));
    }
    let mut id = vec![0usize; tree.len()];
    let mut labels = Vec::new();
    for v in (0..tree.len()).filter(|&v| !subtree.contains(v)) {
        id[v] = labels.len();
        labels.push(Some(v));
    }
    let merged = labels.len();
    labels.push(None);
    let target = labels.len();
    labels.push(None);
    for v in (0..tree.len()).filter(|&v| subtree.contains(v)) {
        id[v] = merged;
    }

    let mut adjacency = vec![Vec::new(); labels.len()];
    for e in tree.edges() {
        let (a, b) = (id[e.a], id[e.b]);
        if a != b {
            adjacency[a].push((b, e.weight));
            adjacency[b].push((a, e.weight));
        }
    }
    let mut to_merged = f64::INFINITY;
    for (v, &w) in candidate_weights.iter().enumerate() {
        if subtree.contains(v) {
            to_merged = to_merged.min(w);
        } else {
            adjacency[target].push((id[v], w));
            adjacency[id[v]].push((target, w));
        }
    }
    adjacency[target].push((merged, to_merged));
    adjacency[merged].push((target, to_merged));
    Ok(ContractedGraph {
        labels,
        merged,
        target,
        adjacency,
    })
}

/// Dijkstra from `from` to `to` on nonnegative weights. Returns the distance
/// and the node sequence.
pub fn shortest_path(graph: &ContractedGraph, from: usize, to: usize) -> Option<(f64, Vec<usize>)> {
    #[derive(PartialEq)]
    struct Key(f64);
    impl Eq for Key {}
    impl PartialOrd for Key {
        fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
            Some(self.cmp(o))
        }
    }
    impl Ord for Key {
        fn cmp(&self, o: &Self) -> std::cmp::Ordering {
            self.0.total_cmp(&o.0)
        }
    }

    let k = graph.node_count();
    let mut dist = vec![f64::INFINITY; k];
    let mut prev = vec![usize::MAX; k];
    let mut heap = BinaryHeap::new();
    dist[from] = 0.0;
    heap.push(Reverse((Key(0.0), from)));
    while let Some(Reverse((Key(d), v))) = heap.pop() {
        if d > dist[v] {
            continue;
        }
        if v == to {
            break;
        }
        for &(u, w) in &graph.adjacency[v] {
            let nd = d + w;
            if nd < dist[u] {
                dist[u] = nd;
                prev[u] = v;
                heap.push(Reverse((Key(nd), u)));
            }
        }
    }
    if !dist[to].is_finite() {
        return None;
    }
    let mut path = vec![to];
    while *path.last().unwrap() != from {
        path.push(prev[*path.last().unwrap()]);
    }
    path.reverse();
    Some((dist[to], path))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::sigtree::TreeEdge;

    /// r(0) - p(1) - {b(2), c(3)}, r - q(4)
    pub(crate) fn five_node_tree() -> SignalTree {
        let names = ["_r", "_p", "_b", "_c", "_q"].map(String::from).to_vec();
        let e = |a, b, w| TreeEdge { a, b, chi: 0, weight: w };
        SignalTree::from_edges(
            names,
            8,
            vec![e(0, 1, 0.25), e(1, 2, 0.5), e(1, 3, 0.125), e(0, 4, 0.75)],
            0,
        )
        .unwrap()
    }

    #[test]
    fn single_anchor_is_its_own_subtree() {
        let t = five_node_tree();
        let o = peer_subtree(&t, &[2, 2], AlphaMode::Lca).unwrap();
        assert_eq!((o.nodes(), o.alpha()), (vec![2], 2));
        assert_eq!(o.weight(&t), 0.0);
    }

    #[test]
    fn siblings_pull_in_their_parent() {
        let t = five_node_tree();
        let o = peer_subtree(&t, &[2, 3], AlphaMode::Lca).unwrap();
        assert_eq!((o.nodes(), o.alpha()), (vec![1, 2, 3], 1));
        assert_eq!(o.weight(&t), 0.625);
        let lit = peer_subtree(&t, &[2, 3], AlphaMode::Literal).unwrap();
        assert_eq!((lit.nodes(), lit.alpha()), (vec![0, 1, 2, 3], 0));
        assert!(peer_subtree(&t, &[], AlphaMode::Lca).is_err());
    }

    #[test]
    fn validation_rejects_broken_subtrees() {
        let t = five_node_tree();
        assert!(PeerSubtree::new(&t, &[1, 2, 3], 1).is_ok());
        assert!(PeerSubtree::new(&t, &[2, 3], 1).is_err());
        assert!(PeerSubtree::new(&t, &[2, 4], 2).is_err());
        assert!(PeerSubtree::new(&t, &[0, 1, 2], 1).is_err());
    }

    #[test]
    fn contraction_counts() {
        let t = five_node_tree();
        let w = [0.5, 0.5, 0.5, 0.5, 0.5];
        let o = peer_subtree(&t, &[2, 3], AlphaMode::Lca).unwrap();
        let g = contract(&t, &o, &w).unwrap();
        assert_eq!(g.signal_node_count(), 5 - 3 + 1);
        // r-s*, r-q, plus target to r, q, s*
        assert_eq!(g.edge_count(), 5);

        let whole = contract(&t, &PeerSubtree::whole_tree(&t), &w).unwrap();
        assert_eq!(whole.signal_node_count(), 1);
        assert_eq!(whole.adjacency[whole.target], vec![(whole.merged, 0.5)]);

        let unit = contract(&t, &PeerSubtree::new(&t, &[4], 4).unwrap(), &w).unwrap();
        assert_eq!(unit.signal_node_count(), 5);
        assert_eq!(unit.edge_count(), 4 + 5);
    }

    #[test]
    fn dijkstra_finds_the_cheap_detour() {
        let t = five_node_tree();
        // direct edge into {b, c, p} costs 0.9; via q then r then p costs 0.0625 + 0.75 + 0.25
        let w = [0.9375, 0.9375, 0.9375, 0.9375, 0.0625];
        let o = peer_subtree(&t, &[2, 3], AlphaMode::Lca).unwrap();
        let g = contract(&t, &o, &w).unwrap();
        let (d, path) = shortest_path(&g, g.target, g.merged).unwrap();
        assert_eq!(d, 0.9375);
        assert_eq!(path, vec![g.target, g.merged]);
        let w2 = [0.0625, 0.9375, 0.9375, 0.9375, 0.9375];
        let g2 = contract(&t, &o, &w2).unwrap();
        let (d2, path2) = shortest_path(&g2, g2.target, g2.merged).unwrap();
        assert_eq!(d2, 0.0625 + 0.25);
        assert_eq!(path2.iter().map(|&v| g2.labels[v]).collect::<Vec<_>>(), vec![None, Some(0), None]);
    }
}
