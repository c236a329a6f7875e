//! Binary observation panels.
//!
//! A panel row `t` pairs the signal observations of date `t` with the asset
//! returns realized over the next step, so each row is one `(s_t, x_{t+1})`
//! realization. Columns are ordered signals first, then assets.

mod csvio;
pub mod indicators;

use std::collections::BTreeMap;
use std::ops::Range;

use chrono::{Datelike, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use csvio::{read_raw_csv, read_raw_csv_from};
pub use indicators::{IndicatorKind, IndicatorSeries, RawSeries};

/// Per-column binarization thresholds. Unlisted columns use the role default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    #[serde(default)]
    pub signal_default: f64,
    #[serde(default)]
    pub asset_default: f64,
    #[serde(default)]
    pub overrides: BTreeMap<String, f64>,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            signal_default: 0.0,
            asset_default: 0.0,
            overrides: BTreeMap::new(),
        }
    }
}

impl Thresholds {
    pub fn for_signal(&self, name: &str) -> f64 {
        self.overrides.get(name).copied().unwrap_or(self.signal_default)
    }

    pub fn for_asset(&self, name: &str) -> f64 {
        self.overrides.get(name).copied().unwrap_or(self.asset_default)
    }
}

/// Time-indexed {0,1} matrix over `n` signal columns followed by `m` asset
/// columns, together with the continuous levels it was cut from.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryPanel {
    dates: Vec<NaiveDate>,
    names: Vec<String>,
    kinds: Vec<IndicatorKind>,
    n: usize,
    m: usize,
    thresholds: Vec<f64>,
    bits: Vec<u8>,
    levels: Vec<f64>,
}

impl BinaryPanel {
    /// Builds a panel from row-major continuous levels; bits are derived as
    /// `level > threshold`.
    pub fn from_levels(
        dates: Vec<NaiveDate>,
        names: Vec<String>,
        kinds: Vec<IndicatorKind>,
        n: usize,
        thresholds: Vec<f64>,
        levels: Vec<f64>,
    ) -> Result<Self> {
        let k = names.len();
        if n < 2 {
            return Err(Error::Data(format!("panel needs at least 2 signal columns, got {n}")));
        }
        if k <= n {
            return Err(Error::Data("panel needs at least 1 asset column".into()));
        }
        if kinds.len() != k || thresholds.len() != k {
            return Err(Error::Data("column metadata length mismatch".into()));
        }
        if levels.len() != dates.len() * k {
            return Err(Error::Data(format!(
                "expected {} levels for {} rows x {k} columns, got {}",
                dates.len() * k,
                dates.len(),
                levels.len()
            )));
        }
        if let Some(w) = dates.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::Data(format!("panel dates not strictly increasing at {}", w[1])));
        }
        if levels.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("panel levels must be finite".into()));
        }
        {
            let mut seen = std::collections::HashSet::new();
            if let Some(dup) = names.iter().find(|s| !seen.insert(s.as_str())) {
                return Err(Error::Data(format!("duplicate column `{dup}`")));
            }
        }
        let bits = levels
            .iter()
            .enumerate()
            .map(|(i, &v)| u8::from(v > thresholds[i % k]))
            .collect();
        Ok(Self {
            dates,
            names,
            kinds,
            n,
            m: k - n,
            thresholds,
            bits,
            levels,
        })
    }

    /// Panel whose levels are the bits themselves (threshold 0.5). Handy for
    /// hand-built and simulated matrices.
    pub fn from_bits(
        dates: Vec<NaiveDate>,
        names: Vec<String>,
        n: usize,
        bits: &[u8],
    ) -> Result<Self> {
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::Data("bit matrix entries must be 0 or 1".into()));
        }
        let k = names.len();
        let kinds = (0..k)
            .map(|c| if c < n { IndicatorKind::RawCount } else { IndicatorKind::Return })
            .collect();
        Self::from_levels(
            dates,
            names,
            kinds,
            n,
            vec![0.5; k],
            bits.iter().map(|&b| f64::from(b)).collect(),
        )
    }

    pub fn rows(&self) -> usize {
        self.dates.len()
    }

    pub fn cols(&self) -> usize {
        self.names.len()
    }

    pub fn n_signals(&self) -> usize {
        self.n
    }

    pub fn n_assets(&self) -> usize {
        self.m
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn kinds(&self) -> &[IndicatorKind] {
        &self.kinds
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn signal_names(&self) -> &[String] {
        &self.names[..self.n]
    }

    pub fn asset_names(&self) -> &[String] {
        &self.names[self.n..]
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::Lookup(name.to_string()))
    }

    /// Index of an asset among the asset columns (0-based, not the column).
    pub fn asset_index(&self, name: &str) -> Result<usize> {
        self.asset_names()
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::Lookup(name.to_string()))
    }

    pub fn bit(&self, row: usize, col: usize) -> u8 {
        self.bits[row * self.cols() + col]
    }

    pub fn level(&self, row: usize, col: usize) -> f64 {
        self.levels[row * self.cols() + col]
    }

    pub fn bit_row(&self, row: usize) -> &[u8] {
        let k = self.cols();
        &self.bits[row * k..(row + 1) * k]
    }

    pub fn level_row(&self, row: usize) -> &[f64] {
        let k = self.cols();
        &self.levels[row * k..(row + 1) * k]
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    /// Forward return of asset `j` recorded in row `row`, i.e. realized
    /// one step after the row's date.
    pub fn asset_return(&self, row: usize, asset: usize) -> f64 {
        self.level(row, self.n + asset)
    }

    /// Re-cuts the same levels with new thresholds.
    pub fn rebinarize(&self, thresholds: Vec<f64>) -> Result<Self> {
        Self::from_levels(
            self.dates.clone(),
            self.names.clone(),
            self.kinds.clone(),
            self.n,
            thresholds,
            self.levels.clone(),
        )
    }

    /// Keeps only `rows`.
    pub fn slice_rows(&self, rows: Range<usize>) -> Result<Self> {
        if rows.start >= rows.end || rows.end > self.rows() {
            return Err(Error::Parameter(format!(
                "row range {rows:?} outside panel of {} rows",
                self.rows()
            )));
        }
        let k = self.cols();
        Self::from_levels(
            self.dates[rows.clone()].to_vec(),
            self.names.clone(),
            self.kinds.clone(),
            self.n,
            self.thresholds.clone(),
            self.levels[rows.start * k..rows.end * k].to_vec(),
        )
    }

    /// Keeps only the named columns. Signal and asset order is preserved.
    pub fn select_columns(&self, keep: &[&str]) -> Result<Self> {
        let idx: Vec<usize> = (0..self.cols())
            .filter(|&c| keep.contains(&self.names[c].as_str()))
            .collect();
        for name in keep {
            self.column_index(name)?;
        }
        let n = idx.iter().filter(|&&c| c < self.n).count();
        let mut levels = Vec::with_capacity(self.rows() * idx.len());
        for r in 0..self.rows() {
            let row = self.level_row(r);
            levels.extend(idx.iter().map(|&c| row[c]));
        }
        Self::from_levels(
            self.dates.clone(),
            idx.iter().map(|&c| self.names[c].clone()).collect(),
            idx.iter().map(|&c| self.kinds[c]).collect(),
            n,
            idx.iter().map(|&c| self.thresholds[c]).collect(),
            levels,
        )
    }

    /// Replaces the levels (and hence bits) of rows `from..` with `levels`,
    /// leaving everything before untouched. Used to check that decisions do
    /// not depend on later data.
    pub fn with_tail_levels(&self, from: usize, tail: &[f64]) -> Result<Self> {
        let k = self.cols();
        let mut levels = self.levels.clone();
        if tail.len() != levels.len() - from * k {
            return Err(Error::Parameter("tail length does not match panel".into()));
        }
        levels[from * k..].copy_from_slice(tail);
        Self::from_levels(
            self.dates.clone(),
            self.names.clone(),
            self.kinds.clone(),
            self.n,
            self.thresholds.clone(),
            levels,
        )
    }
}

/// Cuts indicator columns into a panel.
///
/// Rows are restricted to dates where every column is available. Asset
/// columns are read one grid step ahead, so row `t` holds the signals of
/// date `t` and the asset returns of the following date. The last grid date
/// therefore has no row.
pub fn binarize(
    signals: &[IndicatorSeries],
    assets: &[IndicatorSeries],
    thresholds: &Thresholds,
) -> Result<BinaryPanel> {
    if signals.len() < 2 {
        return Err(Error::Parameter(format!(
            "binarize needs at least 2 signal columns, got {}",
            signals.len()
        )));
    }
    if assets.is_empty() {
        return Err(Error::Parameter("binarize needs at least 1 asset column".into()));
    }
    let columns: Vec<BTreeMap<NaiveDate, f64>> = signals
        .iter()
        .chain(assets)
        .map(|s| s.available().collect())
        .collect();
    let grid: Vec<NaiveDate> = columns[0]
        .keys()
        .copied()
        .filter(|d| columns[1..].iter().all(|c| c.contains_key(d)))
        .collect();
    if grid.len() < 2 {
        return Err(Error::Data(format!(
            "only {} common dates across all columns; need at least 2",
            grid.len()
        )));
    }
    let n = signals.len();
    let k = columns.len();
    let mut levels = Vec::with_capacity((grid.len() - 1) * k);
    for w in grid.windows(2) {
        for (c, col) in columns.iter().enumerate() {
            let date = if c < n { w[0] } else { w[1] };
            levels.push(col[&date]);
        }
    }
    let names: Vec<String> = signals.iter().chain(assets).map(|s| s.name.clone()).collect();
    let th = names
        .iter()
        .enumerate()
        .map(|(c, name)| {
            if c < n {
                thresholds.for_signal(name)
            } else {
                thresholds.for_asset(name)
            }
        })
        .collect();
    BinaryPanel::from_levels(
        grid[..grid.len() - 1].to_vec(),
        names,
        signals.iter().chain(assets).map(|s| s.kind).collect(),
        n,
        th,
        levels,
    )
}

/// Consecutive weekdays starting at `start` (or the next weekday after it).
pub fn business_days(start: NaiveDate, count: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(count);
    let mut d = start;
    while out.len() < count {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d.succ_opt().expect("date overflow");
    }
    out
}

#[cfg(test)]
pub(crate) fn test_dates(count: usize) -> Vec<NaiveDate> {
    business_days(NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(), count)
}
