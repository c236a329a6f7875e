//! How quickly each attachment rule finds a new driver after a switch.

use serde::{Deserialize, Serialize};

use super::GroundTruth;
use crate::backtest::Ledger;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwitchDetection {
    pub regime: usize,
    pub start_row: usize,
    pub new_driver: String,
    /// First rebalance row at or after the regime start.
    pub first_rebalance_row: Option<usize>,
    /// Rebalances from that row until the attachment reads the new driver;
    /// `None` when it never does before the next regime or the panel end.
    pub adaptive_lag: Option<usize>,
    pub greedy_lag: Option<usize>,
}

impl SwitchDetection {
    /// Greedy lag minus adaptive lag, when both were observed.
    pub fn difference(&self) -> Option<i64> {
        Some(self.greedy_lag? as i64 - self.adaptive_lag? as i64)
    }

    /// Censored lags count as later than any observed lag.
    pub fn adaptive_no_later(&self) -> bool {
        match (self.adaptive_lag, self.greedy_lag) {
            (Some(a), Some(g)) => a <= g,
            (Some(_), None) | (None, None) => true,
            (None, Some(_)) => false,
        }
    }

    pub fn adaptive_earlier(&self) -> bool {
        match (self.adaptive_lag, self.greedy_lag) {
            (Some(a), Some(g)) => a < g,
            (Some(_), None) => true,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub target: String,
    pub switches: Vec<SwitchDetection>,
}

/// Detection lags of the target's attachment for every regime switch.
pub fn detection_lag(ledger: &Ledger, truth: &GroundTruth, target: &str) -> Result<DetectionReport> {
    let mut switches = Vec::new();
    for (k, regime) in truth.regimes.iter().enumerate().skip(1) {
        let new_driver = regime
            .drivers
            .get(target)
            .ok_or_else(|| Error::Lookup(target.to_string()))?
            .clone();
        let end = truth.regimes.get(k + 1).map_or(usize::MAX, |r| r.start_row);
        let window: Vec<_> = ledger
            .records
            .iter()
            .map(|r| &r.decision)
            .filter(|d| d.row >= regime.start_row && d.row < end)
            .collect();
        let lag = |pick: fn(&crate::backtest::Decision) -> &str| window.iter().position(|d| pick(d) == new_driver);
        switches.push(SwitchDetection {
            regime: k,
            start_row: regime.start_row,
            first_rebalance_row: window.first().map(|d| d.row),
            adaptive_lag: lag(|d| &d.adaptive.signal),
            greedy_lag: lag(|d| &d.greedy.signal),
            new_driver,
        });
    }
    Ok(DetectionReport {
        target: target.to_string(),
        switches,
    })
}
