//! Attaching asset leaves to the signal tree.
//!
//! Every non-target leaf attaches greedily to the signal it co-occurred with
//! most over the short-run window. The target instead attaches where its
//! path to the peer group's subtree is shortest (see [`attach_target`]).

mod subtree;
mod target;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::cooccur::{dissimilarity, CoOccurrence};
use crate::error::{Error, Result};
use crate::sigtree::SignalTree;

pub use subtree::{contract, peer_subtree, shortest_path, AlphaMode, ContractedGraph, PeerSubtree};
pub use target::{attach_target, select_attachment, AttachDiagnostic, Fallback, Selection, TargetAttachment};

/// One leaf-to-signal edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Attachment {
    pub leaf: usize,
    pub signal: usize,
    pub chi: u32,
    pub weight: f64,
    /// Set when the leaf never co-occurred with any signal in the window.
    pub uninformative: bool,
}

/// Short-run co-occurrences of one leaf with every signal node, and the
/// matching dissimilarity weights.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateWeights {
    chi: Vec<u32>,
    weights: Vec<f64>,
    window_len: usize,
}

impl CandidateWeights {
    pub fn from_counts(chi: &[u32], window_len: usize) -> Result<Self> {
        if window_len == 0 {
            return Err(Error::Parameter("candidate window must be non-empty".into()));
        }
        if let Some(c) = chi.iter().find(|&&c| c as usize > window_len) {
            return Err(Error::Parameter(format!("count {c} exceeds window length {window_len}")));
        }
        Ok(Self {
            chi: chi.to_vec(),
            weights: chi.iter().map(|&c| dissimilarity(c, window_len)).collect(),
            window_len,
        })
    }

    /// Row of asset `leaf` in a short-run co-occurrence matrix.
    pub fn for_leaf(c_t: &CoOccurrence, leaf: usize) -> Result<Self> {
        if leaf >= c_t.n_assets() {
            return Err(Error::Lookup(format!("asset #{leaf}")));
        }
        Self::from_counts(c_t.asset_signal_row(leaf), c_t.window_len())
    }

    pub fn len(&self) -> usize {
        self.chi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chi.is_empty()
    }

    pub fn chi(&self, signal: usize) -> u32 {
        self.chi[signal]
    }

    pub fn weight(&self, signal: usize) -> f64 {
        self.weights[signal]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    pub fn all_zero(&self) -> bool {
        self.chi.iter().all(|&c| c == 0)
    }

    /// Copy with one signal's count replaced.
    pub fn with_count(&self, signal: usize, chi: u32) -> Result<Self> {
        let mut c = self.chi.clone();
        c[signal] = chi;
        Self::from_counts(&c, self.window_len)
    }
}

fn check_signals(c_t: &CoOccurrence, tree: &SignalTree) -> Result<()> {
    if c_t.names()[..c_t.n_signals()] != *tree.names() {
        return Err(Error::Config(
            "short-run signal columns do not match the signal tree nodes".into(),
        ));
    }
    Ok(())
}

/// Greedy choice from a candidate row: the largest count, ties to the
/// smaller signal name. An all-zero row attaches to the smallest name with
/// weight 1 and is flagged uninformative.
pub fn greedy_choice(tree: &SignalTree, leaf: usize, cand: &CandidateWeights) -> Attachment {
    let signal = (0..tree.len())
        .max_by(|&a, &b| cand.chi(a).cmp(&cand.chi(b)).then(tree.rank(b).cmp(&tree.rank(a))))
        .expect("tree has nodes");
    Attachment {
        leaf,
        signal,
        chi: cand.chi(signal),
        weight: cand.weight(signal),
        uninformative: cand.all_zero(),
    }
}

/// Attaches asset `leaf` to its highest short-run co-occurrence signal.
pub fn attach_greedy(c_t: &CoOccurrence, leaf: usize, tree: &SignalTree) -> Result<Attachment> {
    check_signals(c_t, tree)?;
    Ok(greedy_choice(tree, leaf, &CandidateWeights::for_leaf(c_t, leaf)?))
}

/// The signal tree plus one attachment edge per asset leaf.
#[derive(Debug, Clone, PartialEq)]
pub struct AttachedTree<'a> {
    pub tree: &'a SignalTree,
    pub leaf_names: Vec<String>,
    pub attachments: Vec<Attachment>,
    pub date: Option<NaiveDate>,
}

impl<'a> AttachedTree<'a> {
    /// Every leaf attached greedily from a short-run matrix.
    pub fn greedy(tree: &'a SignalTree, c_t: &CoOccurrence, date: Option<NaiveDate>) -> Result<Self> {
        check_signals(c_t, tree)?;
        let attachments = (0..c_t.n_assets())
            .map(|j| attach_greedy(c_t, j, tree))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            tree,
            leaf_names: c_t.names()[c_t.n_signals()..].to_vec(),
            attachments,
            date,
        })
    }

    pub fn new(
        tree: &'a SignalTree,
        leaf_names: Vec<String>,
        attachments: Vec<Attachment>,
        date: Option<NaiveDate>,
    ) -> Result<Self> {
        if attachments.len() != leaf_names.len() {
            return Err(Error::Parameter("one attachment per leaf required".into()));
        }
        for (j, a) in attachments.iter().enumerate() {
            if a.leaf != j || a.signal >= tree.len() {
                return Err(Error::Parameter(format!("attachment #{j} is invalid")));
            }
        }
        Ok(Self {
            tree,
            leaf_names,
            attachments,
            date,
        })
    }

    pub fn n_leaves(&self) -> usize {
        self.attachments.len()
    }

    pub fn leaf(&self, name: &str) -> Result<usize> {
        self.leaf_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Lookup(name.to_string()))
    }

    /// Transitions from a leaf up to the root: its attachment signal first,
    /// then that signal's ancestors.
    pub fn leaf_ancestors(&self, leaf: usize) -> Vec<usize> {
        let a = self.attachments[leaf].signal;
        let mut chain = vec![a];
        chain.extend(self.tree.ancestors(a).expect("attachment node in tree").chain);
        chain
    }

    /// Path length between two leaves through the tree.
    pub fn leaf_distance(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        let (a, b) = (&self.attachments[i], &self.attachments[j]);
        a.weight + self.tree.distance(a.signal, b.signal) + b.weight
    }
}

/// Pairwise leaf path lengths at one estimation date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafDistanceMatrix {
    pub m: usize,
    pub values: Vec<f64>,
    pub date: Option<NaiveDate>,
}

impl LeafDistanceMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.m + j]
    }
}

pub fn leaf_distances(attached: &AttachedTree) -> LeafDistanceMatrix {
    let m = attached.n_leaves();
    let values = (0..m)
        .flat_map(|i| (0..m).map(move |j| (i, j)))
        .map(|(i, j)| attached.leaf_distance(i, j))
        .collect();
    LeafDistanceMatrix {
        m,
        values,
        date: attached.date,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Horizon {
    /// Latest distance matrix only.
    Instant,
    /// Distances summed over the whole supplied history.
    LongTerm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NeighborhoodMode {
    Explicit(Vec<usize>),
    Threshold { theta: f64, horizon: Horizon },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighborhood {
    pub target: usize,
    pub members: Vec<usize>,
    pub mode: NeighborhoodMode,
    /// Threshold mode found nobody within reach.
    pub empty: bool,
}

/// Leaves close to `target`: either a configured list, or every leaf whose
/// distance (summed over the history for the long-term horizon) is below
/// `theta`.
pub fn neighborhood(
    history: &[LeafDistanceMatrix],
    m: usize,
    target: usize,
    mode: &NeighborhoodMode,
) -> Result<Neighborhood> {
    if target >= m {
        return Err(Error::Lookup(format!("leaf #{target}")));
    }
    let members: Vec<usize> = match mode {
        NeighborhoodMode::Explicit(list) => {
            if let Some(j) = list.iter().find(|&&j| j >= m) {
                return Err(Error::Lookup(format!("leaf #{j}")));
            }
            let mut v: Vec<usize> = list.iter().copied().filter(|&j| j != target).collect();
            v.sort_unstable();
            v.dedup();
            v
        }
        NeighborhoodMode::Threshold { theta, horizon } => {
            let window = match horizon {
                Horizon::Instant => history.last().map(std::slice::from_ref),
                Horizon::LongTerm => (!history.is_empty()).then_some(history),
            }
            .ok_or_else(|| Error::Parameter("threshold neighborhood needs a distance history".into()))?;
            if window.iter().any(|d| d.m != m) {
                return Err(Error::Parameter("distance history has the wrong leaf count".into()));
            }
            (0..m)
                .filter(|&j| j != target)
                .filter(|&j| window.iter().map(|d| d.get(target, j)).sum::<f64>() < *theta)
                .collect()
        }
    };
    Ok(Neighborhood {
        target,
        empty: members.is_empty(),
        members,
        mode: mode.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sigtree::TreeEdge;

    pub(crate) fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("_s{i}")).collect()
    }

    fn chain_tree() -> SignalTree {
        // _s0 - _s1 - _s2, rooted at _s1
        let e = |a, b, w| TreeEdge { a, b, chi: 0, weight: w };
        SignalTree::from_edges(names(3), 8, vec![e(0, 1, 0.5), e(1, 2, 0.25)], 1).unwrap()
    }

    fn short_run(rows: &[[u32; 3]]) -> CoOccurrence {
        // 3 signals and the given asset rows, window 8
        let m = rows.len();
        let k = 3 + m;
        let mut c = vec![0u32; k * k];
        for (j, r) in rows.iter().enumerate() {
            for s in 0..3 {
                c[(3 + j) * k + s] = r[s];
                c[s * k + 3 + j] = r[s];
            }
        }
        let mut nm = names(3);
        nm.extend((0..m).map(|j| format!("x{j}")));
        CoOccurrence::from_counts(nm, 3, 8, c).unwrap()
    }

    #[test]
    fn greedy_takes_the_unique_maximum() {
        let t = chain_tree();
        let c = short_run(&[[1, 5, 2]]);
        let a = attach_greedy(&c, 0, &t).unwrap();
        assert_eq!((a.signal, a.chi, a.weight, a.uninformative), (1, 5, 1.0 - 25.0 / 64.0, false));
    }

    #[test]
    fn greedy_ties_go_to_the_smaller_name() {
        let t = chain_tree();
        let c = short_run(&[[3, 3, 1]]);
        assert_eq!(attach_greedy(&c, 0, &t).unwrap().signal, 0);
        // names decide, not indices
        let e = |a, b, w| TreeEdge { a, b, chi: 0, weight: w };
        let nm = vec!["_c".to_string(), "_b".into(), "_a".into()];
        let t2 = SignalTree::from_edges(nm.clone(), 8, vec![e(0, 1, 0.5), e(1, 2, 0.5)], 1).unwrap();
        let cand = CandidateWeights::from_counts(&[3, 3, 1], 8).unwrap();
        assert_eq!(greedy_choice(&t2, 0, &cand).signal, 1);
    }

    #[test]
    fn all_zero_row_is_uninformative() {
        let t = chain_tree();
        let a = attach_greedy(&short_run(&[[0, 0, 0]]), 0, &t).unwrap();
        assert_eq!((a.signal, a.weight, a.uninformative), (0, 1.0, true));
    }

    #[test]
    fn mismatched_tree_is_a_config_error() {
        let e = |a, b, w| TreeEdge { a, b, chi: 0, weight: w };
        let nm = vec!["_a".to_string(), "_b".into(), "_c".into()];
        let t = SignalTree::from_edges(nm, 8, vec![e(0, 1, 0.5), e(1, 2, 0.5)], 1).unwrap();
        assert!(matches!(attach_greedy(&short_run(&[[1, 0, 0]]), 0, &t), Err(Error::Config(_))));
    }

    #[test]
    fn leaf_distances_on_shared_and_split_anchors() {
        let t = chain_tree();
        let c = short_run(&[[4, 0, 0], [2, 0, 0], [0, 0, 8]]);
        let at = AttachedTree::greedy(&t, &c, None).unwrap();
        let d = leaf_distances(&at);
        let w = |chi: f64| 1.0 - (chi / 8.0) * (chi / 8.0);
        assert_eq!(d.get(0, 0), 0.0);
        assert_eq!(d.get(0, 1), w(4.0) + w(2.0));
        assert_eq!(d.get(0, 2), w(4.0) + 0.75 + 0.0);
        assert_eq!(d.get(2, 0), d.get(0, 2));
        assert_eq!(at.leaf_ancestors(2), vec![2, 1]);
        assert_eq!(at.leaf_ancestors(0), vec![0, 1]);
    }

    fn dist(m: usize, f: impl Fn(usize, usize) -> f64) -> LeafDistanceMatrix {
        LeafDistanceMatrix {
            m,
            values: (0..m * m).map(|x| if x / m == x % m { 0.0 } else { f(x / m, x % m) }).collect(),
            date: None,
        }
    }

    #[test]
    fn threshold_neighborhoods() {
        let d = dist(4, |i, j| (i + j) as f64);
        let inf = NeighborhoodMode::Threshold { theta: f64::INFINITY, horizon: Horizon::Instant };
        assert_eq!(neighborhood(std::slice::from_ref(&d), 4, 0, &inf).unwrap().members, vec![1, 2, 3]);
        // distances from 0 are 1, 2, 3: theta just above the minimum keeps one
        let tight = NeighborhoodMode::Threshold { theta: 1.5, horizon: Horizon::Instant };
        assert_eq!(neighborhood(std::slice::from_ref(&d), 4, 0, &tight).unwrap().members, vec![1]);
        // long-term sums: 2, 4, 6 over two matrices
        let long = NeighborhoodMode::Threshold { theta: 4.5, horizon: Horizon::LongTerm };
        assert_eq!(neighborhood(&[d.clone(), d.clone()], 4, 0, &long).unwrap().members, vec![1, 2]);
        let none = NeighborhoodMode::Threshold { theta: 0.5, horizon: Horizon::Instant };
        let n = neighborhood(&[d], 4, 0, &none).unwrap();
        assert!(n.empty && n.members.is_empty());
        assert!(neighborhood(&[], 4, 0, &tight).is_err());
    }

    #[test]
    fn explicit_defensive_group_excludes_the_target() {
        let group = [
            "xUT.BD", "xUT.US", "xCO.BD", "xCO.US", "xHC.BD", "xHC.US", "xCS.BD", "xCS.US",
        ];
        let target = group.iter().position(|&g| g == "xCO.BD").unwrap();
        let n = neighborhood(&[], 8, target, &NeighborhoodMode::Explicit((0..8).collect())).unwrap();
        let members: Vec<&str> = n.members.iter().map(|&j| group[j]).collect();
        assert_eq!(members, vec!["xUT.BD", "xUT.US", "xCO.US", "xHC.BD", "xHC.US", "xCS.BD", "xCS.US"]);
    }
}
