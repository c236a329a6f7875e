use std::io::Read;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{BinaryPanel, IndicatorKind, RawSeries};
use crate::error::{Error, Result};
use crate::io::{self, FORMAT_VERSION};

pub const PANEL_CSV: &str = "panel.csv";
pub const LEVELS_CSV: &str = "levels.csv";
pub const PANEL_MANIFEST: &str = "panel.json";

/// Reads a wide CSV: first column ISO-8601 dates, one named series per
/// remaining column. Empty or `NA`/`NaN` cells are treated as missing and
/// dropped from that column's series.
pub fn read_raw_csv(path: &Path) -> Result<Vec<RawSeries>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_raw_csv_from(file)
}

pub fn read_raw_csv_from<R: Read>(reader: R) -> Result<Vec<RawSeries>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.len() < 2 {
        return Err(Error::Data("csv needs a date column and at least one series".into()));
    }
    let names: Vec<String> = headers.iter().skip(1).map(|h| h.trim().to_string()).collect();
    let mut cols: Vec<(Vec<NaiveDate>, Vec<f64>)> = vec![(Vec::new(), Vec::new()); names.len()];
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let date = parse_date(rec.get(0).unwrap_or(""))
            .ok_or_else(|| Error::Data(format!("row {}: bad date `{}`", line + 2, &rec[0])))?;
        for (c, col) in cols.iter_mut().enumerate() {
            let cell = rec.get(c + 1).unwrap_or("").trim();
            if cell.is_empty() || cell.eq_ignore_ascii_case("na") || cell.eq_ignore_ascii_case("nan") {
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| {
                Error::Data(format!("row {}, column `{}`: bad number `{cell}`", line + 2, names[c]))
            })?;
            col.0.push(date);
            col.1.push(v);
        }
    }
    names
        .into_iter()
        .zip(cols)
        .map(|(name, (dates, values))| RawSeries::new(name, dates, values))
        .collect()
}

fn parse_date(s: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").ok()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PanelManifest {
    pub format_version: u32,
    pub n: usize,
    pub m: usize,
    pub names: Vec<String>,
    pub thresholds: Vec<f64>,
    pub kinds: Vec<IndicatorKind>,
}

impl BinaryPanel {
    pub fn manifest(&self) -> PanelManifest {
        PanelManifest {
            format_version: FORMAT_VERSION,
            n: self.n,
            m: self.m,
            names: self.names.clone(),
            thresholds: self.thresholds.clone(),
            kinds: self.kinds.clone(),
        }
    }

    fn render_csv<T: ToString>(&self, cell: impl Fn(usize, usize) -> T) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["date".to_string()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header)?;
        for r in 0..self.rows() {
            let mut rec = vec![self.dates[r].to_string()];
            rec.extend((0..self.cols()).map(|c| cell(r, c).to_string()));
            w.write_record(&rec)?;
        }
        w.into_inner().map_err(|e| Error::Data(e.to_string()))
    }

    /// The 0/1 matrix as CSV, one row per panel row.
    pub fn bits_csv(&self) -> Result<Vec<u8>> {
        self.render_csv(|r, c| self.bit(r, c))
    }

    pub fn levels_csv(&self) -> Result<Vec<u8>> {
        self.render_csv(|r, c| self.level(r, c))
    }

    /// Rendered files (name, contents) for the panel directory layout.
    pub fn to_files(&self) -> Result<Vec<(String, Vec<u8>)>> {
        Ok(vec![
            (PANEL_CSV.to_string(), self.bits_csv()?),
            (LEVELS_CSV.to_string(), self.levels_csv()?),
            (PANEL_MANIFEST.to_string(), io::to_json_pretty(&self.manifest())?),
        ])
    }

    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        io::write_all_atomic(dir, &self.to_files()?)
    }

    /// Loads a panel directory written by [`BinaryPanel::write_dir`]. The
    /// bit matrix must agree with the levels cut at the recorded thresholds.
    pub fn read_dir(dir: &Path) -> Result<Self> {
        let manifest: PanelManifest =
            serde_json::from_str(&io::read_to_string(&dir.join(PANEL_MANIFEST))?)?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(Error::Data(format!(
                "unsupported panel format_version {}",
                manifest.format_version
            )));
        }
        let (dates, levels) = read_matrix(&dir.join(LEVELS_CSV), &manifest.names)?;
        let (bit_dates, bits) = read_matrix(&dir.join(PANEL_CSV), &manifest.names)?;
        let panel = BinaryPanel::from_levels(
            dates,
            manifest.names,
            manifest.kinds,
            manifest.n,
            manifest.thresholds,
            levels,
        )?;
        if bit_dates != panel.dates || bits.iter().zip(&panel.bits).any(|(&a, &b)| a != f64::from(b)) {
            return Err(Error::Data("panel.csv disagrees with levels.csv".into()));
        }
        if panel.m != manifest.m {
            return Err(Error::Data("manifest m does not match columns".into()));
        }
        Ok(panel)
    }
}

fn read_matrix(path: &Path, names: &[String]) -> Result<(Vec<NaiveDate>, Vec<f64>)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let header: Vec<String> = rdr.headers()?.iter().skip(1).map(str::to_string).collect();
    if header != names {
        return Err(Error::Data(format!("{} header does not match manifest", path.display())));
    }
    let mut dates = Vec::new();
    let mut values = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        dates.push(parse_date(&rec[0]).ok_or_else(|| Error::Data(format!("bad date `{}`", &rec[0])))?);
        for cell in rec.iter().skip(1) {
            values.push(cell.parse().map_err(|_| Error::Data(format!("bad number `{cell}`")))?);
        }
    }
    Ok((dates, values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::test_dates;

    #[test]
    fn reads_wide_csv_with_gaps() {
        let text = "date,_a,xB\n2020-01-01,1.5,\n2020-01-02,NA,2\n2020-01-03,-1,3\n";
        let s = read_raw_csv_from(text.as_bytes()).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].values, vec![1.5, -1.0]);
        assert_eq!(s[1].values, vec![2.0, 3.0]);
        assert_eq!(s[1].dates[0], NaiveDate::from_ymd_opt(2020, 1, 2).unwrap());
    }

    #[test]
    fn rejects_bad_dates_and_numbers() {
        assert!(read_raw_csv_from("date,a\n01/02/2020,1\n".as_bytes()).is_err());
        assert!(read_raw_csv_from("date,a\n2020-01-02,x\n".as_bytes()).is_err());
    }

    #[test]
    fn panel_directory_round_trip() {
        let names = vec!["_a".to_string(), "_b".into(), "xA".into()];
        let kinds = vec![IndicatorKind::Zscore, IndicatorKind::CarryChange, IndicatorKind::Return];
        let levels = vec![0.1, -0.3, 0.0123, 1.0 / 3.0, 2.5, -0.02];
        let p = BinaryPanel::from_levels(test_dates(2), names, kinds, 2, vec![0.0, 0.0, 0.01], levels).unwrap();
        let dir = tempfile::tempdir().unwrap();
        p.write_dir(dir.path()).unwrap();
        let q = BinaryPanel::read_dir(dir.path()).unwrap();
        assert_eq!(p, q);
        let bits = std::fs::read_to_string(dir.path().join(PANEL_CSV)).unwrap();
        assert_eq!(bits.lines().nth(1).unwrap(), "2020-01-01,1,0,1");
    }
}
