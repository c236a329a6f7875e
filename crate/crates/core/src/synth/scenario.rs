//! A peer group whose common driver switches once, with a laggard target.

use std::collections::VecDeque;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{detection_lag, generate, DetectionReport, GroundTruth, Regime, RegimeSpec};
use crate::backtest::{run_backtest, BacktestConfig, Ledger, PeerSpec};
use crate::cooccur::signal_cooccurrence;
use crate::error::Result;
use crate::panel::BinaryPanel;
use crate::sigtree::build_mst;

/// Every asset follows driver `A` and then driver `B`. Asset 0 is the
/// target and switches `target_lag` rebalances after the regime change;
/// the others are its peers and switch after a random lag drawn from
/// `peer_lags` rebalances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwitchScenario {
    pub n: usize,
    pub m: usize,
    pub length: usize,
    pub switch_row: usize,
    pub rebalance_step: usize,
    pub estimation_window: usize,
    pub peer_lags: Vec<usize>,
    pub target_lag: usize,
    pub p_high: f64,
    pub p_low: f64,
    pub copy_prob: f64,
    pub marginal: f64,
    /// Minimum tree hops between the old and the new driver.
    pub min_driver_hops: usize,
}

impl Default for SwitchScenario {
    fn default() -> Self {
        Self {
            n: 14,
            m: 8,
            length: 1200,
            switch_row: 600,
            rebalance_step: 20,
            estimation_window: 200,
            peer_lags: vec![0, 1, 2],
            target_lag: 3,
            p_high: 0.95,
            p_low: 0.05,
            copy_prob: 0.5,
            marginal: 0.5,
            min_driver_hops: 3,
        }
    }
}

fn hops(parents: &[Option<usize>], from: usize) -> Vec<usize> {
    let n = parents.len();
    let mut adj = vec![Vec::new(); n];
    for (v, p) in parents.iter().enumerate() {
        if let Some(p) = *p {
            adj[v].push(p);
            adj[p].push(v);
        }
    }
    let mut d = vec![usize::MAX; n];
    d[from] = 0;
    let mut q = VecDeque::from([from]);
    while let Some(v) = q.pop_front() {
        for &u in &adj[v] {
            if d[u] == usize::MAX {
                d[u] = d[v] + 1;
                q.push_back(u);
            }
        }
    }
    d
}

impl SwitchScenario {
    /// Random generating tree, driver pair and peer lags for `seed`.
    pub fn spec(&self, seed: u64) -> RegimeSpec {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ 0x5eed);
        let n = self.n;
        let parents: Vec<Option<usize>> =
            (0..n).map(|v| if v == 0 { None } else { Some(rng.gen_range(0..v)) }).collect();
        let mut pairs = Vec::new();
        let mut farthest = (0, 0, 0);
        for a in 0..n {
            let d = hops(&parents, a);
            for (b, &hops_ab) in d.iter().enumerate() {
                if hops_ab >= self.min_driver_hops {
                    pairs.push((a, b));
                }
                if hops_ab > farthest.2 {
                    farthest = (a, b, hops_ab);
                }
            }
        }
        let (a, b) = pairs.choose(&mut rng).copied().unwrap_or((farthest.0, farthest.1));
        let mut lags = vec![self.target_lag * self.rebalance_step];
        lags.extend((1..self.m).map(|_| self.peer_lags.choose(&mut rng).copied().unwrap_or(0) * self.rebalance_step));
        RegimeSpec {
            n,
            m: self.m,
            signal_parents: parents,
            copy_probs: vec![self.copy_prob; n],
            marginals: vec![self.marginal; n],
            regimes: vec![
                Regime { start: 0, drivers: vec![a; self.m] },
                Regime { start: self.switch_row, drivers: vec![b; self.m] },
            ],
            lags,
            p_high: self.p_high,
            p_low: self.p_low,
            seed,
            start_date: NaiveDate::from_ymd_opt(2010, 1, 4).expect("valid date"),
        }
    }

    pub fn backtest_config(&self, spec: &RegimeSpec) -> BacktestConfig {
        let names = spec.asset_names();
        BacktestConfig {
            estimation_window: self.estimation_window,
            rebalance_step: self.rebalance_step,
            ..BacktestConfig::new(names[0].clone(), PeerSpec::Explicit { peers: names[1..].to_vec() })
        }
    }

    /// Generates the panel, builds the tree on the full panel, backtests
    /// the target and measures detection lags.
    pub fn run(&self, seed: u64) -> Result<ScenarioRun> {
        let spec = self.spec(seed);
        let (panel, truth) = generate(&spec, self.length)?;
        let tree = build_mst(&signal_cooccurrence(&panel, 0..panel.rows())?)?;
        let config = self.backtest_config(&spec);
        let ledger = run_backtest(&panel, &tree, &config)?;
        let detection = detection_lag(&ledger, &truth, &config.target)?;
        Ok(ScenarioRun {
            panel,
            truth,
            ledger,
            detection,
        })
    }
}

pub struct ScenarioRun {
    pub panel: BinaryPanel,
    pub truth: GroundTruth,
    pub ledger: Ledger,
    pub detection: DetectionReport,
}
