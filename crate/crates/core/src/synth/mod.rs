//! Synthetic regime-switching panels with known drivers.
//!
//! Signals are drawn by ancestral sampling down a configured tree: a child
//! copies its parent's bit with probability `copy_prob`, otherwise draws
//! its own Bernoulli(marginal). Each asset follows one driver signal per
//! regime, switching `lag` rows after the regime starts; its row-`t` bit is
//! Bernoulli(`p_high`) when the driver reads 1 in row `t` and
//! Bernoulli(`p_low`) otherwise. Row `t` holds the return earned over the
//! following step, so the driver leads the asset by one date.
//!
//! All randomness comes from `ChaCha8Rng::seed_from_u64(seed)`, consumed in
//! a fixed order, so panels are bit-identical across platforms.

mod detect;
mod scenario;

use std::collections::BTreeMap;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::FORMAT_VERSION;
use crate::panel::indicators::IndicatorKind;
use crate::panel::{business_days, BinaryPanel};

pub use detect::{detection_lag, DetectionReport, SwitchDetection};
pub use scenario::{ScenarioRun, SwitchScenario};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Regime {
    /// First row of the regime.
    pub start: usize,
    /// Driver signal index per asset.
    pub drivers: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegimeSpec {
    pub n: usize,
    pub m: usize,
    /// Parent of each signal in the generating tree; exactly one `None`.
    pub signal_parents: Vec<Option<usize>>,
    pub copy_probs: Vec<f64>,
    pub marginals: Vec<f64>,
    pub regimes: Vec<Regime>,
    /// Rows by which each asset's driver switch trails the regime start.
    pub lags: Vec<usize>,
    pub p_high: f64,
    pub p_low: f64,
    pub seed: u64,
    pub start_date: NaiveDate,
}

fn probability(p: f64) -> bool {
    (0.0..=1.0).contains(&p)
}

impl RegimeSpec {
    pub fn signal_names(&self) -> Vec<String> {
        (0..self.n).map(|i| format!("_S{i:02}")).collect()
    }

    pub fn asset_names(&self) -> Vec<String> {
        (0..self.m).map(|j| format!("xA{j}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let (n, m) = (self.n, self.m);
        let bad = |msg: String| Err(Error::Parameter(msg));
        if n < 2 || m < 1 {
            return bad(format!("need n >= 2 signals and m >= 1 assets, got {n} and {m}"));
        }
        if self.signal_parents.len() != n || self.copy_probs.len() != n || self.marginals.len() != n {
            return bad("signal_parents, copy_probs and marginals need one entry per signal".into());
        }
        if self.signal_parents.iter().filter(|p| p.is_none()).count() != 1 {
            return bad("the signal tree needs exactly one root".into());
        }
        self.topological_order()?;
        if !self.copy_probs.iter().chain(&self.marginals).all(|&p| probability(p)) {
            return bad("copy_probs and marginals must lie in [0, 1]".into());
        }
        if !(probability(self.p_low) && probability(self.p_high) && self.p_low <= self.p_high) {
            return bad(format!("need 0 <= p_low <= p_high <= 1, got {} and {}", self.p_low, self.p_high));
        }
        if self.lags.len() != m {
            return bad("one lag per asset required".into());
        }
        match self.regimes.first() {
            Some(r) if r.start == 0 => {}
            _ => return bad("the first regime must start at row 0".into()),
        }
        if self.regimes.windows(2).any(|w| w[0].start >= w[1].start) {
            return bad("regime starts must increase".into());
        }
        if self.regimes.iter().any(|r| r.drivers.len() != m || r.drivers.iter().any(|&d| d >= n)) {
            return bad("every regime needs one valid driver per asset".into());
        }
        Ok(())
    }

    /// Signals ordered so every parent precedes its children.
    fn topological_order(&self) -> Result<Vec<usize>> {
        let n = self.n;
        let mut children = vec![Vec::new(); n];
        let mut root = None;
        for (v, p) in self.signal_parents.iter().enumerate() {
            match p {
                Some(p) if *p >= n || *p == v => {
                    return Err(Error::Parameter(format!("signal {v} has invalid parent {p}")))
                }
                Some(p) => children[*p].push(v),
                None => root = Some(v),
            }
        }
        let mut order = vec![root.ok_or_else(|| Error::Parameter("no root signal".into()))?];
        let mut i = 0;
        while i < order.len() {
            order.extend(children[order[i]].iter().copied());
            i += 1;
        }
        if order.len() != n {
            return Err(Error::Parameter("signal parents contain a cycle".into()));
        }
        Ok(order)
    }

    /// Stationary probability that each signal reads 1.
    pub fn signal_marginals(&self) -> Result<Vec<f64>> {
        let mut p = vec![0.0; self.n];
        for v in self.topological_order()? {
            p[v] = match self.signal_parents[v] {
                None => self.marginals[v],
                Some(q) => self.copy_probs[v] * p[q] + (1.0 - self.copy_probs[v]) * self.marginals[v],
            };
        }
        Ok(p)
    }

    /// Index of the regime whose drivers apply to an asset with `lag` in
    /// `row`.
    pub fn regime_at(&self, row: usize, lag: usize) -> usize {
        self.regimes.iter().rposition(|r| r.start + lag <= row).unwrap_or(0)
    }

    pub fn driver(&self, row: usize, asset: usize) -> usize {
        self.regimes[self.regime_at(row, self.lags[asset])].drivers[asset]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeTruth {
    pub start_row: usize,
    pub start_date: NaiveDate,
    /// Asset name to driver signal name.
    pub drivers: BTreeMap<String, String>,
    /// Asset name to the first row it follows this regime's driver.
    pub effective_rows: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub format_version: u32,
    pub rng: String,
    /// Generating tree as (parent, child) signal names.
    pub signal_edges: Vec<(String, String)>,
    pub regimes: Vec<RegimeTruth>,
    pub lags: BTreeMap<String, usize>,
    pub p_high: f64,
    pub p_low: f64,
    pub seed: u64,
}

pub const RNG_NAME: &str = "ChaCha8Rng::seed_from_u64 (rand_chacha 0.3)";

/// Draws `length` rows from `spec`.
pub fn generate(spec: &RegimeSpec, length: usize) -> Result<(BinaryPanel, GroundTruth)> {
    spec.validate()?;
    if length < 2 {
        return Err(Error::Parameter("need at least 2 rows".into()));
    }
    let (n, m) = (spec.n, spec.m);
    let order = spec.topological_order()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut levels = Vec::with_capacity(length * (n + m));
    let mut bits = vec![0u8; n];
    for row in 0..length {
        for &v in &order {
            bits[v] = match spec.signal_parents[v] {
                Some(p) if rng.gen_bool(spec.copy_probs[v]) => bits[p],
                _ => u8::from(rng.gen_bool(spec.marginals[v])),
            };
        }
        for &b in &bits {
            let mag = 0.1 + 0.9 * rng.gen::<f64>();
            levels.push(if b == 1 { mag } else { -mag });
        }
        for j in 0..m {
            let p = if bits[spec.driver(row, j)] == 1 { spec.p_high } else { spec.p_low };
            let up = rng.gen_bool(p);
            let mag = 0.002 + 0.018 * rng.gen::<f64>();
            levels.push(if up { mag } else { -mag });
        }
    }

    let signal_names = spec.signal_names();
    let asset_names = spec.asset_names();
    let dates = business_days(spec.start_date, length);
    let names: Vec<String> = signal_names.iter().chain(&asset_names).cloned().collect();
    let kinds = (0..n + m).map(|c| if c < n { IndicatorKind::Zscore } else { IndicatorKind::Return }).collect();
    let panel = BinaryPanel::from_levels(dates.clone(), names, kinds, n, vec![0.0; n + m], levels)?;

    let regimes = spec
        .regimes
        .iter()
        .filter(|r| r.start < length)
        .map(|r| RegimeTruth {
            start_row: r.start,
            start_date: dates[r.start],
            drivers: asset_names.iter().zip(&r.drivers).map(|(a, &d)| (a.clone(), signal_names[d].clone())).collect(),
            effective_rows: asset_names.iter().zip(&spec.lags).map(|(a, &l)| (a.clone(), r.start + l)).collect(),
        })
        .collect();
    let truth = GroundTruth {
        format_version: FORMAT_VERSION,
        rng: RNG_NAME.to_string(),
        signal_edges: spec
            .signal_parents
            .iter()
            .enumerate()
            .filter_map(|(v, p)| p.map(|p| (signal_names[p].clone(), signal_names[v].clone())))
            .collect(),
        regimes,
        lags: asset_names.iter().cloned().zip(spec.lags.iter().copied()).collect(),
        p_high: spec.p_high,
        p_low: spec.p_low,
        seed: spec.seed,
    };
    Ok((panel, truth))
}
