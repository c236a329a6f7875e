//! Ledger files.

use std::path::Path;

use super::Ledger;
use crate::error::{Error, Result};
use crate::io::{read_to_string, to_json_lines, to_json_pretty, write_all_atomic, FORMAT_VERSION};

pub const LEDGER_JSON: &str = "ledger.json";
pub const PNL_CSV: &str = "daily_pnl.csv";
pub const REBALANCES_JSONL: &str = "rebalances.jsonl";
pub const DIAGNOSTICS_JSONL: &str = "diagnostics.jsonl";

impl Ledger {
    /// Daily PnL per variant, one row per panel row from the first rebalance.
    pub fn pnl_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["date", "adaptive", "greedy", "underlying"])?;
        let d = &self.daily;
        for i in 0..d.dates.len() {
            w.write_record([
                d.dates[i].to_string(),
                d.adaptive[i].to_string(),
                d.greedy[i].to_string(),
                d.underlying[i].to_string(),
            ])?;
        }
        w.into_inner().map_err(|e| Error::Data(e.to_string()))
    }

    pub fn to_files(&self) -> Result<Vec<(String, Vec<u8>)>> {
        let diagnostics: Vec<_> = self.records.iter().map(|r| &r.decision.diagnostic).collect();
        Ok(vec![
            (LEDGER_JSON.to_string(), to_json_pretty(self)?),
            (PNL_CSV.to_string(), self.pnl_csv()?),
            (REBALANCES_JSONL.to_string(), to_json_lines(&self.records)?),
            (DIAGNOSTICS_JSONL.to_string(), to_json_lines(&diagnostics)?),
        ])
    }

    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        write_all_atomic(dir, &self.to_files()?)
    }

    pub fn read_dir(dir: &Path) -> Result<Self> {
        let ledger: Ledger = serde_json::from_str(&read_to_string(&dir.join(LEDGER_JSON))?)?;
        if ledger.manifest.format_version != FORMAT_VERSION {
            return Err(Error::Data(format!(
                "ledger format version {} is not supported",
                ledger.manifest.format_version
            )));
        }
        Ok(ledger)
    }
}
