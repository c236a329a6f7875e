//! Prim's algorithm on a complete graph with a strict total edge order.
//!
//! Edges compare by weight, then by the (smaller, larger) pair of node name
//! ranks. The order is strict, so the minimum spanning tree is unique and
//! any weight function that is a monotone transform of another yields the
//! same edge set.

use std::cmp::Ordering;

/// Rank of every node in lexicographic name order.
pub fn name_ranks(names: &[String]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..names.len()).collect();
    idx.sort_by(|&a, &b| names[a].cmp(&names[b]));
    let mut rank = vec![0; names.len()];
    for (r, &i) in idx.iter().enumerate() {
        rank[i] = r;
    }
    rank
}

fn pair_key(rank: &[usize], a: usize, b: usize) -> (usize, usize) {
    let (x, y) = (rank[a], rank[b]);
    (x.min(y), x.max(y))
}

fn edge_cmp<W: PartialOrd>(a: &(W, (usize, usize)), b: &(W, (usize, usize))) -> Ordering {
    a.0.partial_cmp(&b.0)
        .expect("edge weights must be comparable")
        .then(a.1.cmp(&b.1))
}

/// Ordering key of a crossing edge and its endpoint inside the tree.
type Crossing<W> = ((W, (usize, usize)), usize);

/// Returns the `n - 1` tree edges as `(inside, added)` pairs in the order
/// Prim adds them, seeded at the lexicographically smallest node.
pub fn prim<W, F>(names: &[String], weight: F) -> Vec<(usize, usize)>
where
    W: PartialOrd + Copy,
    F: Fn(usize, usize) -> W,
{
    let n = names.len();
    if n < 2 {
        return Vec::new();
    }
    let rank = name_ranks(names);
    let seed = rank.iter().position(|&r| r == 0).unwrap();

    let mut in_tree = vec![false; n];
    in_tree[seed] = true;
    // best crossing edge per outside node: (key, inside endpoint)
    let mut best: Vec<Option<Crossing<W>>> = vec![None; n];
    let mut last = seed;
    let mut edges = Vec::with_capacity(n - 1);
    for _ in 1..n {
        for v in (0..n).filter(|&v| !in_tree[v]) {
            let cand = (weight(last, v), pair_key(&rank, last, v));
            let better = match &best[v] {
                None => true,
                Some((cur, _)) => edge_cmp(&cand, cur) == Ordering::Less,
            };
            if better {
                best[v] = Some((cand, last));
            }
        }
        let next = (0..n)
            .filter(|&v| !in_tree[v])
            .min_by(|&a, &b| edge_cmp(&best[a].as_ref().unwrap().0, &best[b].as_ref().unwrap().0))
            .unwrap();
        let (_, from) = best[next].take().unwrap();
        in_tree[next] = true;
        edges.push((from, next));
        last = next;
    }
    edges
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(k: usize) -> Vec<String> {
        (0..k).map(|i| format!("n{i}")).collect()
    }

    #[test]
    fn two_nodes_single_edge() {
        assert_eq!(prim(&names(2), |_, _| 1.0), vec![(0, 1)]);
    }

    #[test]
    fn ties_break_by_name_pair() {
        // all weights equal: star from the smallest name
        let e = prim(&names(4), |_, _| 0u32);
        assert_eq!(e, vec![(0, 1), (0, 2), (0, 3)]);
        // seed follows lexicographic order, not index order
        let nm = vec!["b".to_string(), "a".into(), "c".into()];
        let e = prim(&nm, |_, _| 0u32);
        assert_eq!(e, vec![(1, 0), (1, 2)]);
    }

    #[test]
    fn picks_cheapest_edges() {
        // path 0-2-1-3 is cheapest
        let w = |a: usize, b: usize| match (a.min(b), a.max(b)) {
            (0, 2) => 1,
            (1, 2) => 1,
            (1, 3) => 2,
            _ => 9,
        };
        let mut e: Vec<_> = prim(&names(4), w).into_iter().map(|(a, b)| (a.min(b), a.max(b))).collect();
        e.sort();
        assert_eq!(e, vec![(0, 2), (1, 2), (1, 3)]);
    }
}
