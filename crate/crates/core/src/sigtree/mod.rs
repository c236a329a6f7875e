//! The stationary signal tree.
//!
//! Built as the minimum spanning tree of the long-run dissimilarity weights
//! (equivalently the spanning tree with the maximum sum of squared
//! co-occurrences), then rooted so that nodes with more incident tree edges
//! sit higher in the hierarchy.

mod dominance;
pub mod prim;

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::cooccur::{dissimilarity, CoOccurrence};
use crate::error::{Error, Result};
use crate::io::FORMAT_VERSION;

pub use dominance::{power_iteration, verify_parent_dominance, Eigenpair, ParentDominanceReport, PowerIterationConfig};

pub const TIE_RULE: &str = "weight, then lexicographic (min name, max name) pair; Prim seeded at the smallest name";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeEdge {
    pub a: usize,
    pub b: usize,
    pub chi: u32,
    pub weight: f64,
}

/// Keys used to pick the root: tree degree first, then the long-run
/// co-occurrence column sum, then name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderKey {
    pub tree_degree: usize,
    pub cooccurrence_sum: u64,
}

/// Rooted spanning tree over the signal nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalTree {
    names: Vec<String>,
    window_len: usize,
    edges: Vec<TreeEdge>,
    root: usize,
    parent: Vec<Option<usize>>,
    parent_weight: Vec<f64>,
    children: Vec<Vec<usize>>,
    depth: Vec<usize>,
    order_keys: Vec<OrderKey>,
    warnings: Vec<String>,
    rank: Vec<usize>,
}

/// Ancestors of a node, from its first parent up to the root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AncestorSet {
    pub node: usize,
    pub chain: Vec<usize>,
}

/// Minimum spanning tree of the long-run co-occurrence matrix, rooted by
/// column sums.
///
/// Signals that never co-occur with the rest leave the positive-count graph
/// disconnected. Those components are joined through zero-count edges of
/// weight 1 and a warning is recorded on the tree.
pub fn build_mst(c_h: &CoOccurrence) -> Result<SignalTree> {
    let c = if c_h.n_assets() > 0 { c_h.signal_block() } else { c_h.clone() };
    let n = c.k();
    if n < 2 {
        return Err(Error::Parameter(format!("signal tree needs at least 2 signals, got {n}")));
    }
    if c.window_len() == 0 {
        return Err(Error::Parameter("long-run window is empty".into()));
    }
    let h = c.window_len();
    let mut warnings = Vec::new();
    let edges: Vec<TreeEdge> = prim::prim(c.names(), |i, j| dissimilarity(c.get(i, j), h))
        .into_iter()
        .map(|(a, b)| {
            let chi = c.get(a, b);
            if chi == 0 {
                warnings.push(format!(
                    "bridge edge {}-{} has zero co-occurrence (disconnected input)",
                    c.names()[a],
                    c.names()[b]
                ));
            }
            TreeEdge {
                a,
                b,
                chi,
                weight: dissimilarity(chi, h),
            }
        })
        .collect();
    for w in &warnings {
        log::warn!("{w}");
    }
    let mut tree = SignalTree::from_edges(c.names().to_vec(), h, edges, 0)?;
    tree.warnings = warnings;
    Ok(order_by_column_sums(&tree, &c))
}

/// Re-roots the tree at the node with the largest (tree degree, long-run
/// co-occurrence column sum), ties to the smaller name, and orients every
/// edge away from it. Idempotent.
pub fn order_by_column_sums(tree: &SignalTree, c_h: &CoOccurrence) -> SignalTree {
    let n = tree.len();
    let mut degree = vec![0usize; n];
    for e in &tree.edges {
        degree[e.a] += 1;
        degree[e.b] += 1;
    }
    let keys: Vec<OrderKey> = (0..n)
        .map(|i| OrderKey {
            tree_degree: degree[i],
            cooccurrence_sum: (0..n).map(|j| u64::from(c_h.get(j, i))).sum(),
        })
        .collect();
    let root = (0..n)
        .max_by(|&a, &b| {
            (keys[a].tree_degree, keys[a].cooccurrence_sum)
                .cmp(&(keys[b].tree_degree, keys[b].cooccurrence_sum))
                .then_with(|| tree.names[b].cmp(&tree.names[a]))
        })
        .unwrap();
    let mut out = SignalTree::from_edges(tree.names.clone(), tree.window_len, tree.edges.clone(), root)
        .expect("re-rooting a valid tree");
    out.order_keys = keys;
    out.warnings = tree.warnings.clone();
    out
}

impl SignalTree {
    /// Builds a tree rooted at `root` from an explicit edge list. Fails
    /// unless the edges form a spanning tree over `names`.
    pub fn from_edges(names: Vec<String>, window_len: usize, edges: Vec<TreeEdge>, root: usize) -> Result<Self> {
        let n = names.len();
        if n == 0 || root >= n {
            return Err(Error::Parameter("tree root out of range".into()));
        }
        if edges.len() + 1 != n {
            return Err(Error::Parameter(format!(
                "a tree over {n} nodes needs {} edges, got {}",
                n - 1,
                edges.len()
            )));
        }
        let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for e in &edges {
            if e.a >= n || e.b >= n || e.a == e.b {
                return Err(Error::Parameter(format!("invalid edge ({}, {})", e.a, e.b)));
            }
            if e.weight.is_nan() || e.weight < 0.0 {
                return Err(Error::Parameter("edge weights must be nonnegative".into()));
            }
            adj[e.a].push((e.b, e.weight));
            adj[e.b].push((e.a, e.weight));
        }
        let mut parent = vec![None; n];
        let mut parent_weight = vec![0.0; n];
        let mut depth = vec![0; n];
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([root]);
        seen[root] = true;
        while let Some(u) = queue.pop_front() {
            for &(v, w) in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    parent[v] = Some(u);
                    parent_weight[v] = w;
                    depth[v] = depth[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Parameter("edges do not connect all nodes".into()));
        }
        let mut children = vec![Vec::new(); n];
        for (v, p) in parent.iter().enumerate() {
            if let Some(p) = p {
                children[*p].push(v);
            }
        }
        for ch in &mut children {
            ch.sort_by(|&a, &b| names[a].cmp(&names[b]));
        }
        let order_keys = vec![
            OrderKey {
                tree_degree: 0,
                cooccurrence_sum: 0
            };
            n
        ];
        let rank = prim::name_ranks(&names);
        let mut tree = Self {
            rank,
            names,
            window_len,
            edges,
            root,
            parent,
            parent_weight,
            children,
            depth,
            order_keys,
            warnings: Vec::new(),
        };
        for i in 0..n {
            tree.order_keys[i].tree_degree = tree.degree(i);
        }
        Ok(tree)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, node: usize) -> &str {
        &self.names[node]
    }

    /// Position of the node in lexicographic name order; used to break ties.
    pub fn rank(&self, node: usize) -> usize {
        self.rank[node]
    }

    pub fn node(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Lookup(name.to_string()))
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    pub fn edges(&self) -> &[TreeEdge] {
        &self.edges
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn parent(&self, node: usize) -> Option<usize> {
        self.parent[node]
    }

    /// Weight of the edge from `node` to its parent (0 for the root).
    pub fn parent_weight(&self, node: usize) -> f64 {
        self.parent_weight[node]
    }

    pub fn children(&self, node: usize) -> &[usize] {
        &self.children[node]
    }

    pub fn depth(&self, node: usize) -> usize {
        self.depth[node]
    }

    pub fn max_depth(&self) -> usize {
        self.depth.iter().copied().max().unwrap_or(0)
    }

    pub fn degree(&self, node: usize) -> usize {
        self.children[node].len() + usize::from(self.parent[node].is_some())
    }

    pub fn order_keys(&self) -> &[OrderKey] {
        &self.order_keys
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Sum of squared long-run co-occurrences over the tree edges.
    pub fn total_chi_squared(&self) -> u64 {
        self.edges.iter().map(|e| u64::from(e.chi) * u64::from(e.chi)).sum()
    }

    pub fn total_weight(&self) -> f64 {
        self.edges.iter().map(|e| e.weight).sum()
    }

    /// Undirected neighbours with edge weights.
    pub fn neighbors(&self, node: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.parent[node]
            .map(|p| (p, self.parent_weight[node]))
            .into_iter()
            .chain(self.children[node].iter().map(|&c| (c, self.parent_weight[c])))
    }

    /// True if `anc` lies on the path from `node` to the root (inclusive).
    pub fn is_ancestor_or_self(&self, anc: usize, node: usize) -> bool {
        let mut v = node;
        loop {
            if v == anc {
                return true;
            }
            match self.parent[v] {
                Some(p) => v = p,
                None => return false,
            }
        }
    }

    pub fn ancestors(&self, start: usize) -> Result<AncestorSet> {
        if start >= self.len() {
            return Err(Error::Lookup(format!("node #{start}")));
        }
        let mut chain = Vec::with_capacity(self.depth[start]);
        let mut v = start;
        while let Some(p) = self.parent[v] {
            chain.push(p);
            v = p;
        }
        Ok(AncestorSet { node: start, chain })
    }

    pub fn lca(&self, a: usize, b: usize) -> usize {
        let (mut a, mut b) = (a, b);
        while self.depth[a] > self.depth[b] {
            a = self.parent[a].unwrap();
        }
        while self.depth[b] > self.depth[a] {
            b = self.parent[b].unwrap();
        }
        while a != b {
            a = self.parent[a].unwrap();
            b = self.parent[b].unwrap();
        }
        a
    }

    /// Nodes on the unique path from `a` to `b`, both ends included.
    pub fn path(&self, a: usize, b: usize) -> Vec<usize> {
        let l = self.lca(a, b);
        let mut up = vec![a];
        let mut v = a;
        while v != l {
            v = self.parent[v].unwrap();
            up.push(v);
        }
        let mut down = Vec::new();
        let mut v = b;
        while v != l {
            down.push(v);
            v = self.parent[v].unwrap();
        }
        up.extend(down.into_iter().rev());
        up
    }

    /// Sum of edge weights on the unique path between `a` and `b`.
    pub fn distance(&self, a: usize, b: usize) -> f64 {
        let l = self.lca(a, b);
        let climb = |mut v: usize| {
            let mut s = 0.0;
            while v != l {
                s += self.parent_weight[v];
                v = self.parent[v].unwrap();
            }
            s
        };
        climb(a) + climb(b)
    }

    /// Transposed parent indicator: entry `[p][c]` is 1 when `p` is the
    /// parent of `c`. Applying it to a node indicator moves one level up.
    pub fn parent_indicator(&self) -> Vec<Vec<u8>> {
        let n = self.len();
        let mut m = vec![vec![0u8; n]; n];
        for (c, p) in self.parent.iter().enumerate() {
            if let Some(p) = p {
                m[*p][c] = 1;
            }
        }
        m
    }

    pub fn to_file(&self) -> TreeFile {
        TreeFile {
            format_version: FORMAT_VERSION,
            nodes: self.names.clone(),
            edges: self
                .edges
                .iter()
                .map(|e| (self.names[e.a].clone(), self.names[e.b].clone(), e.chi, e.weight))
                .collect(),
            parent_map: (0..self.len())
                .filter_map(|c| self.parent[c].map(|p| (self.names[c].clone(), self.names[p].clone())))
                .collect(),
            root: self.names[self.root].clone(),
            manifest: TreeManifest {
                window_len: self.window_len,
                tie_rule: TIE_RULE.to_string(),
                root_rule: "max (tree degree, long-run co-occurrence column sum), ties to smaller name".into(),
                total_chi_squared: self.total_chi_squared(),
                total_weight: self.total_weight(),
                max_depth: self.max_depth(),
                order_keys: (0..self.len())
                    .map(|i| (self.names[i].clone(), self.order_keys[i]))
                    .collect(),
                warnings: self.warnings.clone(),
            },
        }
    }

    pub fn from_file(file: &TreeFile) -> Result<Self> {
        if file.format_version != FORMAT_VERSION {
            return Err(Error::Data(format!("unsupported tree format_version {}", file.format_version)));
        }
        let lookup = |name: &str| {
            file.nodes
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| Error::Lookup(name.to_string()))
        };
        let edges = file
            .edges
            .iter()
            .map(|(a, b, chi, weight)| {
                Ok(TreeEdge {
                    a: lookup(a)?,
                    b: lookup(b)?,
                    chi: *chi,
                    weight: *weight,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut tree = Self::from_edges(file.nodes.clone(), file.manifest.window_len, edges, lookup(&file.root)?)?;
        for (child, parent) in &file.parent_map {
            if tree.parent[lookup(child)?] != Some(lookup(parent)?) {
                return Err(Error::Data(format!("parent_map entry {child} -> {parent} is inconsistent")));
            }
        }
        if file.parent_map.len() + 1 != tree.len() {
            return Err(Error::Data("parent_map must list every non-root node".into()));
        }
        for (name, key) in &file.manifest.order_keys {
            tree.order_keys[lookup(name)?] = *key;
        }
        tree.warnings = file.manifest.warnings.clone();
        Ok(tree)
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        crate::io::to_json_pretty(&self.to_file())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_file(&serde_json::from_str(text)?)
    }

    /// Edge list for plotting: `parent,child,chi,weight`.
    pub fn edges_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["parent", "child", "chi", "weight"])?;
        let mut rows: Vec<usize> = (0..self.len()).filter(|&c| self.parent[c].is_some()).collect();
        rows.sort_by_key(|&c| (self.depth[c], self.names[c].clone()));
        for c in rows {
            let p = self.parent[c].unwrap();
            let chi = self
                .edges
                .iter()
                .find(|e| (e.a == p && e.b == c) || (e.a == c && e.b == p))
                .map(|e| e.chi)
                .unwrap();
            w.write_record([
                self.names[p].clone(),
                self.names[c].clone(),
                chi.to_string(),
                self.parent_weight[c].to_string(),
            ])?;
        }
        w.into_inner().map_err(|e| Error::Data(e.to_string()))
    }
}

/// On-disk tree layout. Map-valued fields use sorted keys so output is
/// stable across runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeFile {
    pub format_version: u32,
    pub nodes: Vec<String>,
    pub edges: Vec<(String, String, u32, f64)>,
    pub parent_map: BTreeMap<String, String>,
    pub root: String,
    pub manifest: TreeManifest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeManifest {
    pub window_len: usize,
    pub tie_rule: String,
    pub root_rule: String,
    pub total_chi_squared: u64,
    pub total_weight: f64,
    pub max_depth: usize,
    pub order_keys: BTreeMap<String, OrderKey>,
    pub warnings: Vec<String>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("_s{i}")).collect()
    }

    fn counts(n: usize, h: usize, f: impl Fn(usize, usize) -> u32) -> CoOccurrence {
        let mut c = vec![0; n * n];
        for i in 0..n {
            for j in 0..n {
                c[i * n + j] = if i == j { h as u32 } else { f(i.min(j), i.max(j)) };
            }
        }
        CoOccurrence::from_counts(names(n), n, h, c).unwrap()
    }

    fn edge(a: usize, b: usize, w: f64) -> TreeEdge {
        TreeEdge { a, b, chi: 0, weight: w }
    }

    #[test]
    fn two_signals_single_edge() {
        let t = build_mst(&counts(2, 10, |_, _| 3)).unwrap();
        assert_eq!(t.edges().len(), 1);
        assert_eq!(t.edges()[0].chi, 3);
        assert!(t.warnings().is_empty());
    }

    #[test]
    fn single_signal_is_rejected() {
        let c = CoOccurrence::from_counts(names(1), 1, 3, vec![1]).unwrap();
        assert!(matches!(build_mst(&c), Err(Error::Parameter(_))));
    }

    #[test]
    fn disconnected_input_is_bridged_with_warning() {
        // _s2 never co-occurs with anything
        let t = build_mst(&counts(3, 10, |i, j| if (i, j) == (0, 1) { 4 } else { 0 })).unwrap();
        assert_eq!(t.edges().len(), 2);
        assert_eq!(t.warnings().len(), 1);
        let bridge = t.edges().iter().find(|e| e.chi == 0).unwrap();
        assert_eq!(bridge.weight, 1.0);
        // lexicographic: _s0 is the smallest endpoint available
        assert_eq!((bridge.a.min(bridge.b), bridge.a.max(bridge.b)), (0, 2));
    }

    #[test]
    fn star_hub_is_root() {
        let t = build_mst(&counts(5, 20, |i, j| if i == 3 || j == 3 { 10 } else { 1 })).unwrap();
        assert_eq!(t.root(), 3);
        assert_eq!(t.children(3).len(), 4);
    }

    #[test]
    fn chain_middle_is_root_and_ordering_is_idempotent() {
        let c = counts(3, 10, |i, j| match (i, j) {
            (0, 1) => 5,
            (1, 2) => 6,
            _ => 0,
        });
        let t = build_mst(&c).unwrap();
        assert_eq!(t.root(), 1);
        assert_eq!(order_by_column_sums(&t, &c), t);
    }

    #[test]
    fn ancestors_and_distance_on_a_chain() {
        // a(0) - b(1) - c(2), rooted at c
        let t = SignalTree::from_edges(names(3), 8, vec![edge(0, 1, 0.25), edge(1, 2, 0.5)], 2).unwrap();
        assert_eq!(t.ancestors(0).unwrap().chain, vec![1, 2]);
        assert!(t.ancestors(2).unwrap().chain.is_empty());
        assert!(matches!(t.ancestors(7), Err(Error::Lookup(_))));
        assert_eq!(t.distance(0, 0), 0.0);
        assert_eq!(t.distance(0, 1), 0.25);
        assert_eq!(t.distance(0, 2), 0.75);
        assert_eq!(t.path(0, 2), vec![0, 1, 2]);
        assert_eq!(t.path(2, 0), vec![2, 1, 0]);
    }

    #[test]
    fn from_edges_rejects_non_trees() {
        assert!(SignalTree::from_edges(names(3), 1, vec![edge(0, 1, 0.1)], 0).is_err());
        assert!(SignalTree::from_edges(names(4), 1, vec![edge(0, 1, 0.1), edge(1, 0, 0.1), edge(2, 3, 0.1)], 0).is_err());
    }

    #[test]
    fn json_round_trip_and_stable_bytes() {
        let c = counts(6, 50, |i, j| ((i * 7 + j * 3) % 11) as u32 * 4);
        let t = build_mst(&c).unwrap();
        let bytes = t.to_json().unwrap();
        let back = SignalTree::from_json(std::str::from_utf8(&bytes).unwrap()).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.to_json().unwrap(), bytes);
        let csv = String::from_utf8(t.edges_csv().unwrap()).unwrap();
        assert_eq!(csv.lines().count(), 6);
    }

    fn random_tree(rng: &mut ChaCha8Rng, n: usize) -> SignalTree {
        let edges = (1..n)
            .map(|v| edge(rng.gen_range(0..v), v, f64::from(rng.gen_range(1..64u32)) / 64.0))
            .collect();
        let root = rng.gen_range(0..n);
        SignalTree::from_edges(names(n), 64, edges, root).unwrap()
    }

    /// Indicator recursion: multiply by the transposed parent indicator
    /// until the vector is zero, recording each nonzero position.
    fn ancestors_by_matrix(t: &SignalTree, start: usize) -> Vec<usize> {
        let m = t.parent_indicator();
        let n = t.len();
        let mut z = vec![0u8; n];
        z[start] = 1;
        let mut out = Vec::new();
        loop {
            let next: Vec<u8> = (0..n).map(|p| (0..n).map(|c| m[p][c] * z[c]).sum()).collect();
            match next.iter().position(|&x| x == 1) {
                Some(p) => {
                    assert_eq!(next.iter().map(|&x| u32::from(x)).sum::<u32>(), 1);
                    out.push(p);
                    z = next;
                }
                None => return out,
            }
        }
    }

    /// Breadth-first search over the undirected edge list.
    fn bfs_distance(t: &SignalTree, a: usize, b: usize) -> f64 {
        let n = t.len();
        let mut dist = vec![None; n];
        dist[a] = Some(0.0);
        let mut q = VecDeque::from([a]);
        while let Some(u) = q.pop_front() {
            for e in t.edges() {
                let v = if e.a == u { e.b } else if e.b == u { e.a } else { continue };
                if dist[v].is_none() {
                    dist[v] = Some(dist[u].unwrap() + e.weight);
                    q.push_back(v);
                }
            }
        }
        dist[b].unwrap()
    }

    proptest! {
        #[test]
        fn ancestor_chain_matches_matrix_recursion(seed in any::<u64>(), n in 2usize..12) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = random_tree(&mut rng, n);
            for v in 0..n {
                let a = t.ancestors(v).unwrap();
                prop_assert_eq!(a.chain.len(), t.depth(v));
                prop_assert_eq!(&a.chain, &ancestors_by_matrix(&t, v));
                if let Some(&last) = a.chain.last() {
                    prop_assert_eq!(last, t.root());
                }
            }
        }

        #[test]
        fn distance_matches_bfs_and_root_paths(seed in any::<u64>(), n in 2usize..12) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = random_tree(&mut rng, n);
            for a in 0..n {
                for b in 0..n {
                    let d = t.distance(a, b);
                    prop_assert_eq!(d, bfs_distance(&t, a, b));
                    prop_assert_eq!(d, t.distance(b, a));
                    prop_assert_eq!(d == 0.0, a == b);
                    // root paths minus the doubled segment above the lca
                    let up = |v: usize| {
                        let mut s = 0.0;
                        let mut v = v;
                        while let Some(p) = t.parent(v) { s += t.parent_weight(v); v = p; }
                        s
                    };
                    let l = t.lca(a, b);
                    prop_assert!((up(a) + up(b) - 2.0 * up(l) - d).abs() < 1e-12);
                }
            }
        }
    }
}
