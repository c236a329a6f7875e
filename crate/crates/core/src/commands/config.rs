//! Run configuration: where the data lives, how indicators are derived,
//! and which target and peers to backtest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attach::{AlphaMode, Horizon};
use crate::backtest::{BacktestConfig, PeerSpec};
use crate::error::{Error, Result};
use crate::io::read_to_string;
use crate::panel::indicators::{
    carry, carry_change, implied_vol_zscore, invert_sign, momentum, simple_returns, zscore, DEFAULT_CARRY_LAG,
    DEFAULT_MOMENTUM_WINDOW, ONE_YEAR,
};
use crate::panel::{binarize, read_raw_csv, BinaryPanel, IndicatorKind, IndicatorSeries, RawSeries, Thresholds};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// A panel directory written by `simulate` or a previous run.
    PanelDir(PathBuf),
    /// Raw series in one CSV (first column ISO dates), turned into
    /// indicators by `indicators`.
    Csv(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Signal,
    Asset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndicatorDef {
    pub name: String,
    pub role: Role,
    pub kind: IndicatorKind,
    /// Raw CSV column the indicator is computed from.
    pub source: String,
    /// Second input column (base-currency rate for carry kinds).
    #[serde(default)]
    pub base: Option<String>,
    #[serde(default)]
    pub window: Option<usize>,
    #[serde(default)]
    pub lag: Option<usize>,
    #[serde(default)]
    pub invert: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PeerMode {
    #[default]
    Explicit,
    Threshold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdPeers {
    pub theta: f64,
    pub horizon: Horizon,
    #[serde(default = "default_history")]
    pub history: usize,
}

fn default_history() -> usize {
    12
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BacktestSection {
    pub target: String,
    /// Asset names, or `@group` to splice in a named peer group.
    #[serde(default)]
    pub peers: Vec<String>,
    #[serde(default)]
    pub peer_mode: PeerMode,
    #[serde(default)]
    pub threshold: Option<ThresholdPeers>,
    #[serde(default)]
    pub alpha_mode: AlphaMode,
    #[serde(default)]
    pub estimation_window: Option<usize>,
    #[serde(default)]
    pub rebalance_step: Option<usize>,
    #[serde(default)]
    pub vol_window: Option<usize>,
    #[serde(default)]
    pub yoy_window: Option<usize>,
    #[serde(default)]
    pub cost_bps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSource,
    #[serde(default)]
    pub indicators: Vec<IndicatorDef>,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub peer_groups: BTreeMap<String, Vec<String>>,
    /// Rows `[start, end)` for the long-run tree; the whole panel if absent.
    #[serde(default)]
    pub tree_rows: Option<(usize, usize)>,
    #[serde(default)]
    pub backtest: Option<BacktestSection>,
    /// Signal columns dropped for the comparison run without them.
    #[serde(default)]
    pub news_columns: Vec<String>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

impl RunConfig {
    /// Reads and schema-checks a config; relative data paths resolve
    /// against the config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = read_to_string(path)?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut cfg.data {
            DataSource::PanelDir(p) | DataSource::Csv(p) => resolve(p),
        }
        if let Some(p) = &mut cfg.output_dir {
            resolve(p);
        }
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<()> {
        if matches!(self.data, DataSource::Csv(_)) && self.indicators.is_empty() {
            return Err(Error::Config("csv data needs indicator definitions".into()));
        }
        for (name, group) in &self.peer_groups {
            if group.iter().any(|g| g.starts_with('@')) {
                return Err(Error::Config(format!("peer group `{name}` may not nest groups")));
            }
        }
        Ok(())
    }

    pub fn load_panel(&self) -> Result<BinaryPanel> {
        match &self.data {
            DataSource::PanelDir(dir) => BinaryPanel::read_dir(dir),
            DataSource::Csv(path) => {
                let raw = read_raw_csv(path)?;
                let (signals, assets) = build_indicators(&raw, &self.indicators)?;
                binarize(&signals, &assets, &self.thresholds)
            }
        }
    }

    fn expand_peers(&self, list: &[String]) -> Result<Vec<String>> {
        let mut out = Vec::new();
        for p in list {
            match p.strip_prefix('@') {
                Some(g) => out.extend(
                    self.peer_groups
                        .get(g)
                        .ok_or_else(|| Error::Config(format!("unknown peer group `{g}`")))?
                        .iter()
                        .cloned(),
                ),
                None => out.push(p.clone()),
            }
        }
        Ok(out)
    }

    /// Backtest settings with command-line overrides applied.
    pub fn backtest_config(&self, peer_mode: Option<PeerMode>, alpha_mode: Option<AlphaMode>) -> Result<BacktestConfig> {
        let b = self
            .backtest
            .as_ref()
            .ok_or_else(|| Error::Config("config has no `backtest` section".into()))?;
        let peers = match peer_mode.unwrap_or(b.peer_mode) {
            PeerMode::Explicit => {
                let mut list = self.expand_peers(&b.peers)?;
                list.retain(|p| p != &b.target);
                PeerSpec::Explicit { peers: list }
            }
            PeerMode::Threshold => {
                let t = b
                    .threshold
                    .as_ref()
                    .ok_or_else(|| Error::Config("threshold peer mode needs a `threshold` section".into()))?;
                PeerSpec::Threshold {
                    theta: t.theta,
                    horizon: t.horizon,
                    history: t.history,
                }
            }
        };
        let mut cfg = BacktestConfig::new(b.target.clone(), peers);
        cfg.alpha_mode = alpha_mode.unwrap_or(b.alpha_mode);
        cfg.cost_bps = b.cost_bps;
        if let Some(w) = b.estimation_window {
            cfg.estimation_window = w;
        }
        if let Some(q) = b.rebalance_step {
            cfg.rebalance_step = q;
        }
        if let Some(v) = b.vol_window {
            cfg.vol_window = v;
        }
        if let Some(y) = b.yoy_window {
            cfg.yoy_window = y;
        }
        Ok(cfg)
    }
}

fn build_one(raw: &BTreeMap<&str, &RawSeries>, def: &IndicatorDef) -> Result<IndicatorSeries> {
    let col = |name: &str| {
        raw.get(name)
            .copied()
            .ok_or_else(|| Error::Config(format!("indicator `{}` reads unknown column `{name}`", def.name)))
    };
    let src = col(&def.source)?;
    let base = || {
        def.base
            .as_deref()
            .ok_or_else(|| Error::Config(format!("indicator `{}` needs a `base` column", def.name)))
            .and_then(col)
    };
    let series = match def.kind {
        IndicatorKind::Zscore => zscore(src, def.window.unwrap_or(ONE_YEAR))?,
        IndicatorKind::Carry => carry(src, base()?)?,
        IndicatorKind::CarryChange => carry_change(&carry(src, base()?)?, def.lag.unwrap_or(DEFAULT_CARRY_LAG))?,
        IndicatorKind::MomentumMean => momentum(src, def.window.unwrap_or(DEFAULT_MOMENTUM_WINDOW))?,
        IndicatorKind::ImpliedVolZscore => implied_vol_zscore(src, def.window.unwrap_or(ONE_YEAR))?,
        IndicatorKind::Return => simple_returns(src)?,
        IndicatorKind::RawCount => IndicatorSeries::from_raw(src, IndicatorKind::RawCount),
    };
    let series = if def.invert { invert_sign(&series) } else { series };
    Ok(series.renamed(def.name.clone()))
}

/// Indicator columns split by role, in definition order.
pub fn build_indicators(raw: &[RawSeries], defs: &[IndicatorDef]) -> Result<(Vec<IndicatorSeries>, Vec<IndicatorSeries>)> {
    let by_name: BTreeMap<&str, &RawSeries> = raw.iter().map(|r| (r.name.as_str(), r)).collect();
    let (mut signals, mut assets) = (Vec::new(), Vec::new());
    for def in defs {
        let s = build_one(&by_name, def)?;
        match def.role {
            Role::Signal => signals.push(s),
            Role::Asset => assets.push(s),
        }
    }
    Ok((signals, assets))
}
