//! Co-occurrence counts of "1" observations and the dissimilarity weights
//! derived from them.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::FORMAT_VERSION;
use crate::panel::BinaryPanel;

/// Square matrix of joint "1" counts over a window of panel rows.
///
/// Columns follow panel order: `n_signals` signal columns, then assets.
/// Freshly counted matrices are symmetric with `chi_ii` equal to the column
/// sum. After [`CoOccurrence::apply_block_rules`] the asset-asset block and
/// the signal-row/asset-column block are zero, so the matrix is no longer
/// symmetric.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoOccurrence {
    names: Vec<String>,
    n_signals: usize,
    window_len: usize,
    counts: Vec<u32>,
    block_rules_applied: bool,
}

impl CoOccurrence {
    /// Counts from explicit values. The matrix must be symmetric with
    /// entries no larger than `window_len`.
    pub fn from_counts(
        names: Vec<String>,
        n_signals: usize,
        window_len: usize,
        counts: Vec<u32>,
    ) -> Result<Self> {
        let k = names.len();
        if counts.len() != k * k {
            return Err(Error::Parameter(format!("expected {} counts, got {}", k * k, counts.len())));
        }
        if n_signals > k {
            return Err(Error::Parameter("more signals than columns".into()));
        }
        for i in 0..k {
            for j in 0..k {
                let c = counts[i * k + j];
                if c != counts[j * k + i] {
                    return Err(Error::Parameter(format!("counts not symmetric at ({i}, {j})")));
                }
                if c as usize > window_len {
                    return Err(Error::Parameter(format!(
                        "count {c} at ({i}, {j}) exceeds window length {window_len}"
                    )));
                }
            }
        }
        Ok(Self {
            names,
            n_signals,
            window_len,
            counts,
            block_rules_applied: false,
        })
    }

    pub fn k(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n_signals(&self) -> usize {
        self.n_signals
    }

    pub fn n_assets(&self) -> usize {
        self.k() - self.n_signals
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    pub fn block_rules_applied(&self) -> bool {
        self.block_rules_applied
    }

    pub fn get(&self, i: usize, j: usize) -> u32 {
        self.counts[i * self.k() + j]
    }

    pub fn row(&self, i: usize) -> &[u32] {
        let k = self.k();
        &self.counts[i * k..(i + 1) * k]
    }

    /// Counts of asset `j` (0-based among assets) against every signal.
    pub fn asset_signal_row(&self, asset: usize) -> &[u32] {
        &self.row(self.n_signals + asset)[..self.n_signals]
    }

    pub fn column_sum(&self, j: usize) -> u64 {
        (0..self.k()).map(|i| u64::from(self.get(i, j))).sum()
    }

    /// The signal-only leading block as its own matrix.
    pub fn signal_block(&self) -> CoOccurrence {
        let n = self.n_signals;
        let counts = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| self.get(i, j))
            .collect();
        CoOccurrence {
            names: self.names[..n].to_vec(),
            n_signals: n,
            window_len: self.window_len,
            counts,
            block_rules_applied: self.block_rules_applied,
        }
    }

    /// Zeroes the asset-asset block (no links among targets) and the
    /// signal-row/asset-column block (signals do not depend on future
    /// returns). Idempotent.
    pub fn apply_block_rules(&self) -> CoOccurrence {
        let k = self.k();
        let n = self.n_signals;
        let mut counts = self.counts.clone();
        for i in 0..k {
            for j in n..k {
                if i >= n || j >= n {
                    counts[i * k + j] = 0;
                }
            }
        }
        CoOccurrence {
            counts,
            block_rules_applied: true,
            ..self.clone()
        }
    }

    /// Replaces the signal-signal block with the 0/1 adjacency of a tree
    /// given by its edge list, discarding short-run signal relations.
    pub fn with_signal_adjacency(&self, edges: &[(usize, usize)]) -> Result<CoOccurrence> {
        let k = self.k();
        let n = self.n_signals;
        let mut counts = self.counts.clone();
        for i in 0..n {
            for j in 0..n {
                counts[i * k + j] = 0;
            }
        }
        for &(a, b) in edges {
            if a >= n || b >= n || a == b {
                return Err(Error::Parameter(format!("edge ({a}, {b}) is not a signal pair")));
            }
            counts[a * k + b] = 1;
            counts[b * k + a] = 1;
        }
        Ok(CoOccurrence {
            counts,
            ..self.clone()
        })
    }

    pub fn to_dissimilarity(&self) -> Result<DissimilarityWeights> {
        if self.window_len == 0 {
            return Err(Error::Parameter("window length must be positive".into()));
        }
        Ok(DissimilarityWeights {
            k: self.k(),
            weights: self.counts.iter().map(|&c| dissimilarity(c, self.window_len)).collect(),
        })
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec![String::new()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header)?;
        for i in 0..self.k() {
            let mut rec = vec![self.names[i].clone()];
            rec.extend(self.row(i).iter().map(u32::to_string));
            w.write_record(&rec)?;
        }
        w.into_inner().map_err(|e| Error::Data(e.to_string()))
    }

    pub fn to_json(&self) -> CoOccurrenceFile {
        CoOccurrenceFile {
            format_version: FORMAT_VERSION,
            names: self.names.clone(),
            n_signals: self.n_signals,
            window_len: self.window_len,
            block_rules_applied: self.block_rules_applied,
            counts: (0..self.k()).map(|i| self.row(i).to_vec()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoOccurrenceFile {
    pub format_version: u32,
    pub names: Vec<String>,
    pub n_signals: usize,
    pub window_len: usize,
    pub block_rules_applied: bool,
    pub counts: Vec<Vec<u32>>,
}

/// `1 - (chi / window_len)^2`: in [0, 1], strictly decreasing in `chi`, and
/// zero only for columns that are "1" together on every row.
pub fn dissimilarity(chi: u32, window_len: usize) -> f64 {
    let r = f64::from(chi) / window_len as f64;
    1.0 - r * r
}

/// Symmetric matrix of dissimilarity weights, same layout as the counts.
#[derive(Debug, Clone, PartialEq)]
pub struct DissimilarityWeights {
    k: usize,
    weights: Vec<f64>,
}

impl DissimilarityWeights {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.k + j]
    }

    pub fn k(&self) -> usize {
        self.k
    }
}

/// Co-occurrence of every panel column over `rows`.
pub fn cooccurrence(panel: &BinaryPanel, rows: Range<usize>) -> Result<CoOccurrence> {
    count_columns(panel, rows, panel.cols(), panel.n_signals())
}

/// Co-occurrence restricted to the signal columns, e.g. for the long-run
/// matrix behind the signal tree.
pub fn signal_cooccurrence(panel: &BinaryPanel, rows: Range<usize>) -> Result<CoOccurrence> {
    count_columns(panel, rows, panel.n_signals(), panel.n_signals())
}

fn count_columns(panel: &BinaryPanel, rows: Range<usize>, k: usize, n_signals: usize) -> Result<CoOccurrence> {
    if rows.start >= rows.end {
        return Err(Error::Parameter(format!("empty co-occurrence window {rows:?}")));
    }
    if rows.end > panel.rows() {
        return Err(Error::Parameter(format!(
            "window {rows:?} outside panel of {} rows",
            panel.rows()
        )));
    }
    let mut counts = vec![0u32; k * k];
    let mut ones = Vec::with_capacity(k);
    for r in rows.clone() {
        ones.clear();
        ones.extend(
            panel.bit_row(r)[..k]
                .iter()
                .enumerate()
                .filter(|(_, &b)| b == 1)
                .map(|(c, _)| c),
        );
        for (x, &a) in ones.iter().enumerate() {
            for &b in &ones[x..] {
                counts[a * k + b] += 1;
                if a != b {
                    counts[b * k + a] += 1;
                }
            }
        }
    }
    Ok(CoOccurrence {
        names: panel.names()[..k].to_vec(),
        n_signals,
        window_len: rows.len(),
        counts,
        block_rules_applied: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::test_dates;
    use proptest::prelude::*;

    fn panel(cols: &[&[u8]], n: usize) -> BinaryPanel {
        let rows = cols[0].len();
        let names: Vec<String> = (0..cols.len())
            .map(|c| if c < n { format!("_s{c}") } else { format!("x{c}") })
            .collect();
        let bits: Vec<u8> = (0..rows).flat_map(|r| cols.iter().map(move |c| c[r])).collect();
        BinaryPanel::from_bits(test_dates(rows), names, n, &bits).unwrap()
    }

    #[test]
    fn all_zero_panel_gives_zero_matrix() {
        let p = panel(&[&[0, 0, 0], &[0, 0, 0], &[0, 0, 0]], 2);
        let c = cooccurrence(&p, 0..3).unwrap();
        assert!((0..3).all(|i| (0..3).all(|j| c.get(i, j) == 0)));
    }

    #[test]
    fn hand_computed_counts() {
        let p = panel(&[&[1, 1, 0], &[1, 0, 1], &[0, 0, 0]], 2);
        let c = cooccurrence(&p, 0..3).unwrap();
        assert_eq!((c.get(0, 0), c.get(1, 1), c.get(0, 1), c.get(1, 0)), (2, 2, 1, 1));
        assert_eq!(c.window_len(), 3);
    }

    #[test]
    fn empty_window_is_rejected() {
        let p = panel(&[&[1, 1], &[1, 0], &[0, 0]], 2);
        assert!(matches!(cooccurrence(&p, 1..1), Err(Error::Parameter(_))));
        assert!(matches!(cooccurrence(&p, 0..3), Err(Error::Parameter(_))));
    }

    #[test]
    fn block_rules_zero_the_right_blocks() {
        let p = panel(&[&[1, 1, 0, 1], &[1, 0, 1, 1], &[1, 1, 1, 1], &[0, 1, 1, 1]], 2);
        let c = cooccurrence(&p, 0..4).unwrap();
        let z = c.apply_block_rules();
        for i in 0..4 {
            for j in 2..4 {
                assert_eq!(z.get(i, j), 0, "({i},{j})");
            }
        }
        // asset-signal block and signal-signal block survive
        assert_eq!(z.get(2, 0), c.get(2, 0));
        assert_eq!(z.get(0, 1), c.get(0, 1));
        assert_eq!(z.apply_block_rules(), z);
    }

    #[test]
    fn zero_asset_signal_counts_are_a_fixed_point_of_the_signal_side() {
        let p = panel(&[&[1, 1, 0], &[1, 0, 1], &[0, 0, 0]], 2);
        let z = cooccurrence(&p, 0..3).unwrap().apply_block_rules();
        assert_eq!(z.asset_signal_row(0), &[0, 0]);
        assert_eq!(z.apply_block_rules(), z);
    }

    #[test]
    fn signal_adjacency_replacement() {
        let p = panel(&[&[1, 1], &[1, 1], &[1, 0], &[1, 1]], 3);
        let c = cooccurrence(&p, 0..2).unwrap().with_signal_adjacency(&[(0, 2), (1, 2)]).unwrap();
        assert_eq!(c.get(0, 1), 0);
        assert_eq!(c.get(0, 2), 1);
        assert_eq!(c.get(3, 0), 2);
    }

    #[test]
    fn dissimilarity_endpoints() {
        assert_eq!(dissimilarity(0, 10), 1.0);
        assert_eq!(dissimilarity(10, 10), 0.0);
        assert_eq!(dissimilarity(4, 8), 0.75);
    }

    #[test]
    fn csv_export() {
        let p = panel(&[&[1, 1, 0], &[1, 0, 1], &[0, 0, 0]], 2);
        let csv = String::from_utf8(cooccurrence(&p, 0..3).unwrap().to_csv().unwrap()).unwrap();
        assert_eq!(csv.lines().next().unwrap(), ",_s0,_s1,x2");
        assert_eq!(csv.lines().nth(1).unwrap(), "_s0,2,1,0");
    }

    fn naive(p: &BinaryPanel, rows: Range<usize>) -> Vec<u32> {
        let k = p.cols();
        let mut out = vec![0; k * k];
        for i in 0..k {
            for j in 0..k {
                out[i * k + j] = rows.clone().map(|r| u32::from(p.bit(r, i) * p.bit(r, j))).sum();
            }
        }
        out
    }

    proptest! {
        #[test]
        fn streaming_counts_match_double_loop(
            bits in prop::collection::vec(0u8..2, 5 * 30),
            start in 0usize..10,
            len in 1usize..20,
        ) {
            let names: Vec<String> = (0..5).map(|c| format!("c{c}")).collect();
            let p = BinaryPanel::from_bits(test_dates(30), names, 3, &bits).unwrap();
            let c = cooccurrence(&p, start..start + len).unwrap();
            prop_assert_eq!(&c.counts, &naive(&p, start..start + len));
            for i in 0..5 {
                prop_assert_eq!(u64::from(c.get(i, i)), (start..start + len).map(|r| u64::from(p.bit(r, i))).sum::<u64>());
                for j in 0..5 {
                    prop_assert_eq!(c.get(i, j), c.get(j, i));
                    prop_assert!(c.get(i, j) as usize <= len);
                }
            }
            let w = c.to_dissimilarity().unwrap();
            for i in 0..5 {
                for j in 0..5 {
                    prop_assert!((0.0..=1.0).contains(&w.get(i, j)));
                    // weight order is the reverse of count order
                    for a in 0..5 {
                        if c.get(i, j) > c.get(a, j) {
                            prop_assert!(w.get(i, j) < w.get(a, j));
                        }
                    }
                }
            }
        }
    }
}
