//! Target attachment by shortest path to the peer subtree.

use std::collections::{BTreeMap, VecDeque};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::subtree::{peer_subtree, AlphaMode, PeerSubtree};
use super::{greedy_choice, AttachedTree, Attachment, CandidateWeights, Neighborhood};
use crate::error::{Error, Result};
use crate::sigtree::SignalTree;

/// Why the target fell back to its greedy attachment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fallback {
    NoPeers,
    Uninformative,
}

/// Result of the cost minimization over candidate signals.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub signal: usize,
    pub cost: f64,
    /// `w(target, a) + distance(a, O)` for every signal `a`.
    pub costs: Vec<f64>,
    /// Tree path from the chosen signal to the nearest subtree node.
    pub path: Vec<usize>,
}

/// Tree distance from every node to the subtree, and the next hop towards
/// it. Paths in a tree are unique, so a breadth-first sweep from all
/// members at once settles each node exactly once.
fn distances_to(tree: &SignalTree, subtree: &PeerSubtree) -> (Vec<f64>, Vec<Option<usize>>) {
    let n = tree.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut toward = vec![None; n];
    let mut queue = VecDeque::new();
    for v in subtree.nodes() {
        dist[v] = 0.0;
        queue.push_back(v);
    }
    while let Some(v) = queue.pop_front() {
        for (u, w) in tree.neighbors(v) {
            if dist[u].is_infinite() {
                dist[u] = dist[v] + w;
                toward[u] = Some(v);
                queue.push_back(u);
            }
        }
    }
    (dist, toward)
}

/// Cheapest way into the subtree: one candidate edge followed by the tree
/// path. Ties go to the smaller signal name.
pub fn select_attachment(tree: &SignalTree, cand: &CandidateWeights, subtree: &PeerSubtree) -> Result<Selection> {
    if cand.len() != tree.len() {
        return Err(Error::Parameter("one candidate weight per signal node required".into()));
    }
    let (dist, toward) = distances_to(tree, subtree);
    let costs: Vec<f64> = (0..tree.len()).map(|a| cand.weight(a) + dist[a]).collect();
    let signal = (0..tree.len())
        .min_by(|&a, &b| costs[a].total_cmp(&costs[b]).then(tree.rank(a).cmp(&tree.rank(b))))
        .expect("tree has nodes");
    let mut path = vec![signal];
    while let Some(next) = toward[*path.last().unwrap()] {
        path.push(next);
    }
    Ok(Selection {
        signal,
        cost: costs[signal],
        costs,
        path,
    })
}

/// One row of the attachment diagnostics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttachDiagnostic {
    pub date: Option<NaiveDate>,
    pub target: String,
    pub chosen: String,
    pub greedy_choice: String,
    pub cost_vector: BTreeMap<String, f64>,
    pub path: Vec<String>,
    #[serde(rename = "O")]
    pub subtree: Vec<String>,
    pub alpha: Option<String>,
    pub peer_attachments: BTreeMap<String, String>,
    pub fallback: Option<Fallback>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetAttachment {
    pub attachment: Attachment,
    pub greedy: Attachment,
    pub fallback: Option<Fallback>,
    pub diagnostic: AttachDiagnostic,
}

/// Attaches leaf `target` where its path to the peers' subtree is shortest.
///
/// Peers keep their greedy attachments from `attached`; the target's own
/// entry there is ignored. Uninformative peers carry no position
/// information and are left out of the subtree.
pub fn attach_target(
    attached: &AttachedTree,
    target: usize,
    cand: &CandidateWeights,
    peers: &Neighborhood,
    mode: AlphaMode,
) -> Result<TargetAttachment> {
    let tree = attached.tree;
    if target >= attached.n_leaves() || peers.target != target {
        return Err(Error::Parameter("neighborhood does not belong to the target".into()));
    }
    if cand.len() != tree.len() {
        return Err(Error::Parameter("one candidate weight per signal node required".into()));
    }
    let name = |v: usize| tree.name(v).to_string();
    let greedy = greedy_choice(tree, target, cand);
    let informative: Vec<usize> = peers
        .members
        .iter()
        .copied()
        .filter(|&j| j != target && !attached.attachments[j].uninformative)
        .collect();
    let peer_attachments = informative
        .iter()
        .map(|&j| (attached.leaf_names[j].clone(), name(attached.attachments[j].signal)))
        .collect();

    let fallback = if cand.all_zero() {
        Some(Fallback::Uninformative)
    } else if informative.is_empty() {
        Some(Fallback::NoPeers)
    } else {
        None
    };
    let mut diagnostic = AttachDiagnostic {
        date: attached.date,
        target: attached.leaf_names[target].clone(),
        chosen: name(greedy.signal),
        greedy_choice: name(greedy.signal),
        cost_vector: BTreeMap::new(),
        path: vec![name(greedy.signal)],
        subtree: Vec::new(),
        alpha: None,
        peer_attachments,
        fallback,
    };
    if fallback.is_some() {
        return Ok(TargetAttachment {
            attachment: greedy,
            greedy,
            fallback,
            diagnostic,
        });
    }

    let anchors: Vec<usize> = informative.iter().map(|&j| attached.attachments[j].signal).collect();
    let subtree = peer_subtree(tree, &anchors, mode)?;
    let sel = select_attachment(tree, cand, &subtree)?;
    let attachment = Attachment {
        leaf: target,
        signal: sel.signal,
        chi: cand.chi(sel.signal),
        weight: cand.weight(sel.signal),
        uninformative: false,
    };
    diagnostic.chosen = name(sel.signal);
    diagnostic.cost_vector = sel.costs.iter().enumerate().map(|(a, &c)| (name(a), c)).collect();
    diagnostic.path = sel.path.iter().map(|&v| name(v)).collect();
    diagnostic.subtree = subtree.nodes().into_iter().map(name).collect();
    diagnostic.alpha = Some(name(subtree.alpha()));
    Ok(TargetAttachment {
        attachment,
        greedy,
        fallback: None,
        diagnostic,
    })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::attach::subtree::{contract, shortest_path};
    use crate::attach::NeighborhoodMode;
    use crate::sigtree::TreeEdge;

    fn neighborhood(target: usize, members: Vec<usize>) -> Neighborhood {
        Neighborhood {
            target,
            empty: members.is_empty(),
            mode: NeighborhoodMode::Explicit(members.clone()),
            members,
        }
    }

    fn attachment(leaf: usize, signal: usize) -> Attachment {
        Attachment { leaf, signal, chi: 4, weight: 0.75, uninformative: false }
    }

    /// r(0) - p(1) - a(2) - b(3), each edge 1/4.
    fn chain() -> SignalTree {
        let names = ["_r", "_p", "_a", "_b"].map(String::from).to_vec();
        let e = |a, b| TreeEdge { a, b, chi: 0, weight: 0.25 };
        SignalTree::from_edges(names, 8, vec![e(0, 1), e(1, 2), e(2, 3)], 0).unwrap()
    }

    #[test]
    fn chain_instance_prefers_the_peers_node() {
        let t = chain();
        let names = vec!["x0".to_string(), "x1".into(), "x2".into()];
        let at = AttachedTree::new(&t, names, vec![attachment(0, 0), attachment(1, 3), attachment(2, 3)], None).unwrap();
        // strongest raw co-occurrence with r (chi 6), weaker with b (chi 5)
        let cand = CandidateWeights::from_counts(&[6, 0, 0, 5], 8).unwrap();
        let ta = attach_target(&at, 0, &cand, &neighborhood(0, vec![1, 2]), AlphaMode::Lca).unwrap();
        assert_eq!(ta.greedy.signal, 0);
        assert_eq!(ta.attachment.signal, 3);
        // exhaustive enumeration: r costs 28/64 + 3/4, b costs 39/64
        let d = &ta.diagnostic;
        assert_eq!(d.cost_vector["_r"], 28.0 / 64.0 + 0.75);
        assert_eq!(d.cost_vector["_p"], 1.0 + 0.5);
        assert_eq!(d.cost_vector["_a"], 1.0 + 0.25);
        assert_eq!(d.cost_vector["_b"], 39.0 / 64.0);
        assert_eq!((d.chosen.as_str(), d.greedy_choice.as_str()), ("_b", "_r"));
        assert_eq!(d.subtree, vec!["_b"]);
        assert_eq!(d.alpha.as_deref(), Some("_b"));
    }

    #[test]
    fn greedy_inside_the_subtree_wins() {
        let t = chain();
        let names = vec!["x0".to_string(), "x1".into(), "x2".into()];
        let at = AttachedTree::new(&t, names, vec![attachment(0, 0), attachment(1, 1), attachment(2, 3)], None).unwrap();
        let cand = CandidateWeights::from_counts(&[1, 0, 7, 2], 8).unwrap();
        let ta = attach_target(&at, 0, &cand, &neighborhood(0, vec![1, 2]), AlphaMode::Lca).unwrap();
        assert_eq!(ta.attachment.signal, ta.greedy.signal);
        assert_eq!(ta.attachment.signal, 2);
    }

    #[test]
    fn fallbacks() {
        let t = chain();
        let names = vec!["x0".to_string(), "x1".into()];
        let mut peer = attachment(1, 3);
        let at = AttachedTree::new(&t, names.clone(), vec![attachment(0, 0), peer], None).unwrap();
        let zero = CandidateWeights::from_counts(&[0, 0, 0, 0], 8).unwrap();
        let r = attach_target(&at, 0, &zero, &neighborhood(0, vec![1]), AlphaMode::Lca).unwrap();
        assert_eq!(r.fallback, Some(Fallback::Uninformative));
        let cand = CandidateWeights::from_counts(&[6, 0, 0, 5], 8).unwrap();
        let r = attach_target(&at, 0, &cand, &neighborhood(0, vec![]), AlphaMode::Lca).unwrap();
        assert_eq!((r.fallback, r.attachment.signal), (Some(Fallback::NoPeers), 0));
        peer.uninformative = true;
        let at = AttachedTree::new(&t, names, vec![attachment(0, 0), peer], None).unwrap();
        let r = attach_target(&at, 0, &cand, &neighborhood(0, vec![1]), AlphaMode::Lca).unwrap();
        assert_eq!(r.fallback, Some(Fallback::NoPeers));
    }

    fn random_tree(n: usize, parents: &[usize], weights: &[u32]) -> SignalTree {
        let names = (0..n).map(|i| format!("_n{i:02}")).collect();
        let edges = (1..n)
            .map(|v| TreeEdge { a: parents[v - 1] % v, b: v, chi: 0, weight: f64::from(weights[v - 1]) / 64.0 })
            .collect();
        SignalTree::from_edges(names, 8, edges, 0).unwrap()
    }

    proptest! {
        #[test]
        fn whole_tree_subtree_reduces_to_greedy(
            n in 2usize..10,
            parents in prop::collection::vec(0usize..100, 9),
            weights in prop::collection::vec(0u32..64, 9),
            chi in prop::collection::vec(0u32..=8, 10),
        ) {
            let t = random_tree(n, &parents, &weights);
            let cand = CandidateWeights::from_counts(&chi[..n], 8).unwrap();
            let sel = select_attachment(&t, &cand, &PeerSubtree::whole_tree(&t)).unwrap();
            prop_assert_eq!(sel.signal, greedy_choice(&t, 0, &cand).signal);
        }

        #[test]
        fn dijkstra_agrees_with_the_cost_formula(
            n in 2usize..12,
            parents in prop::collection::vec(0usize..100, 11),
            weights in prop::collection::vec(0u32..64, 11),
            chi in prop::collection::vec(0u32..=8, 12),
            anchors in prop::collection::vec(0usize..100, 1..5),
            literal in any::<bool>(),
        ) {
            let t = random_tree(n, &parents, &weights);
            let cand = CandidateWeights::from_counts(&chi[..n], 8).unwrap();
            let anchors: Vec<usize> = anchors.iter().map(|a| a % n).collect();
            let mode = if literal { AlphaMode::Literal } else { AlphaMode::Lca };
            let o = peer_subtree(&t, &anchors, mode).unwrap();
            let sel = select_attachment(&t, &cand, &o).unwrap();
            let g = contract(&t, &o, cand.weights()).unwrap();
            let (d, _) = shortest_path(&g, g.target, g.merged).unwrap();
            prop_assert_eq!(d, sel.cost);
            prop_assert!(o.contains(*sel.path.last().unwrap()));
        }

        #[test]
        fn strengthening_the_chosen_edge_keeps_the_choice(
            n in 2usize..12,
            parents in prop::collection::vec(0usize..100, 11),
            weights in prop::collection::vec(0u32..64, 11),
            chi in prop::collection::vec(0u32..8, 12),
            anchors in prop::collection::vec(0usize..100, 1..5),
            bump in 1u32..8,
        ) {
            let t = random_tree(n, &parents, &weights);
            let cand = CandidateWeights::from_counts(&chi[..n], 8).unwrap();
            let anchors: Vec<usize> = anchors.iter().map(|a| a % n).collect();
            let o = peer_subtree(&t, &anchors, AlphaMode::Lca).unwrap();
            let first = select_attachment(&t, &cand, &o).unwrap().signal;
            let raised = (cand.chi(first) + bump).min(8);
            let stronger = cand.with_count(first, raised).unwrap();
            prop_assert_eq!(select_attachment(&t, &stronger, &o).unwrap().signal, first);
        }
    }
}
