//! Per-variant performance figures and the year-on-year prediction check.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{BacktestConfig, DailyPnl, Metrics, Position, RebalanceRecord, VariantDecision};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantMetrics {
    /// Additive sum of daily PnL.
    pub cumulative_return: f64,
    /// Fraction of invested periods with a positive period return; `None`
    /// when the variant never invested.
    pub hit_ratio: Option<f64>,
    pub periods: usize,
    pub invested_periods: usize,
    pub position_switches: usize,
    pub attachment_switches: usize,
    /// Attached signal at the first rebalance and after every change.
    pub switching_sequence: Vec<(NaiveDate, String)>,
    pub yoy_correlation: Option<f64>,
}

/// One holding period with its forecast and outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodPrediction {
    pub start_row: usize,
    pub end_row: usize,
    pub predicted: f64,
    pub realized: f64,
}

/// Trailing sums of complete periods: for each period end `e` with a full
/// `yoy_window` of history behind it, the sums of predictions and realized
/// returns over periods lying inside `[e - yoy_window, e)`.
pub fn yoy_series(periods: &[PeriodPrediction], step: usize, yoy_window: usize) -> Vec<(f64, f64)> {
    let complete: Vec<&PeriodPrediction> = periods.iter().filter(|p| p.end_row - p.start_row == step).collect();
    let Some(first) = complete.first().map(|p| p.start_row) else {
        return Vec::new();
    };
    complete
        .iter()
        .filter(|p| p.end_row >= first + yoy_window)
        .map(|p| {
            let lo = p.end_row - yoy_window;
            complete
                .iter()
                .filter(|q| q.start_row >= lo && q.end_row <= p.end_row)
                .fold((0.0, 0.0), |(a, b), q| (a + q.predicted, b + q.realized))
        })
        .collect()
}

/// Pearson correlation; `None` with fewer than two points or zero variance
/// on either side.
pub fn pearson(pairs: &[(f64, f64)]) -> Option<f64> {
    if pairs.len() < 2 {
        return None;
    }
    let n = pairs.len() as f64;
    let (mx, my) = pairs.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x / n, b + y / n));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in pairs {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

pub fn yoy_correlation(periods: &[PeriodPrediction], step: usize, yoy_window: usize) -> Option<f64> {
    pearson(&yoy_series(periods, step, yoy_window))
}

fn variant_metrics(
    records: &[RebalanceRecord],
    daily: &[f64],
    config: &BacktestConfig,
    pick: impl Fn(&RebalanceRecord) -> Option<&VariantDecision>,
) -> VariantMetrics {
    let mut m = VariantMetrics {
        cumulative_return: daily.iter().sum(),
        hit_ratio: None,
        periods: records.len(),
        invested_periods: 0,
        position_switches: 0,
        attachment_switches: 0,
        switching_sequence: Vec::new(),
        yoy_correlation: None,
    };
    let mut hits = 0usize;
    let mut prev = Position::Cash;
    let mut predictions = Vec::with_capacity(records.len());
    for r in records {
        let (position, decision) = match pick(r) {
            Some(v) => (v.position, Some(v)),
            None => (Position::Long, None),
        };
        if position == Position::Long {
            m.invested_periods += 1;
            hits += usize::from(r.realized > 0.0);
        }
        if decision.is_some() && position != prev {
            m.position_switches += 1;
        }
        prev = position;
        if let Some(v) = decision {
            if m.switching_sequence.last().map(|(_, s)| s != &v.signal).unwrap_or(true) {
                if !m.switching_sequence.is_empty() {
                    m.attachment_switches += 1;
                }
                m.switching_sequence.push((r.decision.date, v.signal.clone()));
            }
            predictions.push(PeriodPrediction {
                start_row: r.decision.row,
                end_row: r.end_row,
                predicted: v.prediction.value,
                realized: r.realized,
            });
        }
    }
    if m.invested_periods > 0 {
        m.hit_ratio = Some(hits as f64 / m.invested_periods as f64);
    }
    if !predictions.is_empty() {
        m.yoy_correlation = yoy_correlation(&predictions, config.rebalance_step, config.yoy_window);
    }
    m
}

pub(super) fn metrics(records: &[RebalanceRecord], daily: &DailyPnl, config: &BacktestConfig) -> Metrics {
    Metrics {
        adaptive: variant_metrics(records, &daily.adaptive, config, |r| Some(&r.decision.adaptive)),
        greedy: variant_metrics(records, &daily.greedy, config, |r| Some(&r.decision.greedy)),
        underlying: variant_metrics(records, &daily.underlying, config, |_| None),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn periods(pred: &[f64], real: &[f64]) -> Vec<PeriodPrediction> {
        pred.iter()
            .zip(real)
            .enumerate()
            .map(|(k, (&p, &r))| PeriodPrediction { start_row: 10 * k, end_row: 10 * k + 10, predicted: p, realized: r })
            .collect()
    }

    #[test]
    fn identical_and_opposite_series() {
        let real = [0.1, -0.2, 0.3, 0.05, -0.1, 0.2, 0.0, 0.15];
        let neg: Vec<f64> = real.iter().map(|v| -v).collect();
        let same = yoy_correlation(&periods(&real, &real), 10, 30).unwrap();
        let flip = yoy_correlation(&periods(&neg, &real), 10, 30).unwrap();
        assert!((same - 1.0).abs() < 1e-12);
        assert!((flip + 1.0).abs() < 1e-12);
    }

    #[test]
    fn trailing_windows_hold_complete_periods() {
        let p = periods(&[1.0, 2.0, 3.0, 4.0], &[0.0; 4]);
        // window 20: ends at 20, 30, 40 with two periods each
        let s: Vec<f64> = yoy_series(&p, 10, 20).iter().map(|x| x.0).collect();
        assert_eq!(s, vec![3.0, 5.0, 7.0]);
        let mut short = p.clone();
        short[3].end_row = 35;
        assert_eq!(yoy_series(&short, 10, 20).len(), 2);
    }

    #[test]
    fn degenerate_variance_is_undefined() {
        assert_eq!(pearson(&[(1.0, 2.0), (1.0, 3.0)]), None);
        assert_eq!(pearson(&[(1.0, 2.0)]), None);
    }
}
