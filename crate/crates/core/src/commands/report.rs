//! Plot-ready bundle from a ledger: cumulative curves, switching sequences
//! and prediction overlays.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::backtest::{Ledger, Metrics};
use crate::error::{Error, Result};
use crate::io::{to_json_pretty, FORMAT_VERSION};

pub const REPORT_JSON: &str = "report.json";
pub const CUMULATIVE_CSV: &str = "cumulative.csv";
pub const PREDICTIONS_CSV: &str = "predictions.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curves {
    pub dates: Vec<NaiveDate>,
    pub adaptive: Vec<f64>,
    pub greedy: Vec<f64>,
    pub underlying: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Switching {
    pub adaptive: Vec<(NaiveDate, String)>,
    pub greedy: Vec<(NaiveDate, String)>,
}

/// One holding period: both forecasts against the realized return.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionPoint {
    pub date: NaiveDate,
    /// Last day of the holding period.
    pub end_date: NaiveDate,
    pub adaptive_signal: String,
    pub adaptive: f64,
    pub greedy_signal: String,
    pub greedy: f64,
    pub realized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub format_version: u32,
    pub target: String,
    pub tree_root: String,
    pub cumulative: Curves,
    pub switching: Switching,
    pub predictions: Vec<PredictionPoint>,
    pub metrics: Metrics,
    pub warnings: Vec<String>,
}

fn running_sum(xs: &[f64]) -> Vec<f64> {
    xs.iter()
        .scan(0.0, |acc, x| {
            *acc += x;
            Some(*acc)
        })
        .collect()
}

impl ReportBundle {
    pub fn from_ledger(ledger: &Ledger) -> Result<Self> {
        let d = &ledger.daily;
        let first = ledger.manifest.first_rebalance_row;
        let date_at = |row: usize| {
            row.checked_sub(first)
                .and_then(|i| d.dates.get(i))
                .copied()
                .ok_or_else(|| Error::Data(format!("ledger has no date for row {row}")))
        };
        let predictions = ledger
            .records
            .iter()
            .map(|r| {
                let dec = &r.decision;
                Ok(PredictionPoint {
                    date: dec.date,
                    end_date: date_at(r.end_row - 1)?,
                    adaptive_signal: dec.adaptive.signal.clone(),
                    adaptive: dec.adaptive.prediction.value,
                    greedy_signal: dec.greedy.signal.clone(),
                    greedy: dec.greedy.prediction.value,
                    realized: r.realized,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            format_version: FORMAT_VERSION,
            target: ledger.manifest.config.target.clone(),
            tree_root: ledger.manifest.tree_root.clone(),
            cumulative: Curves {
                dates: d.dates.clone(),
                adaptive: running_sum(&d.adaptive),
                greedy: running_sum(&d.greedy),
                underlying: running_sum(&d.underlying),
            },
            switching: Switching {
                adaptive: ledger.metrics.adaptive.switching_sequence.clone(),
                greedy: ledger.metrics.greedy.switching_sequence.clone(),
            },
            predictions,
            metrics: ledger.metrics.clone(),
            warnings: ledger.manifest.warnings.clone(),
        })
    }

    pub fn cumulative_csv(&self) -> Result<Vec<u8>> {
        let c = &self.cumulative;
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["date", "adaptive", "greedy", "underlying"])?;
        for i in 0..c.dates.len() {
            w.write_record([
                c.dates[i].to_string(),
                c.adaptive[i].to_string(),
                c.greedy[i].to_string(),
                c.underlying[i].to_string(),
            ])?;
        }
        w.into_inner().map_err(|e| Error::Data(e.to_string()))
    }

    pub fn predictions_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["date", "end_date", "adaptive_signal", "adaptive", "greedy_signal", "greedy", "realized"])?;
        for p in &self.predictions {
            w.write_record([
                p.date.to_string(),
                p.end_date.to_string(),
                p.adaptive_signal.clone(),
                p.adaptive.to_string(),
                p.greedy_signal.clone(),
                p.greedy.to_string(),
                p.realized.to_string(),
            ])?;
        }
        w.into_inner().map_err(|e| Error::Data(e.to_string()))
    }

    pub fn to_files(&self) -> Result<Vec<(String, Vec<u8>)>> {
        Ok(vec![
            (REPORT_JSON.to_string(), to_json_pretty(self)?),
            (CUMULATIVE_CSV.to_string(), self.cumulative_csv()?),
            (PREDICTIONS_CSV.to_string(), self.predictions_csv()?),
        ])
    }
}
