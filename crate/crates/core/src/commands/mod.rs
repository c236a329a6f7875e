//! Command implementations behind the CLI. Each renders all of its output
//! files before writing any, writes them atomically and returns a summary
//! for stdout.

mod config;
mod report;

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

pub use config::{
    build_indicators, BacktestSection, DataSource, IndicatorDef, PeerMode, Role, RunConfig, ThresholdPeers,
};
pub use report::{Curves, PredictionPoint, ReportBundle, Switching, CUMULATIVE_CSV, PREDICTIONS_CSV, REPORT_JSON};

use crate::attach::{AlphaMode, AttachDiagnostic};
use crate::backtest::{decide_at, run_backtest, Decision, Ledger, Metrics, VariantDecision};
use crate::cooccur::signal_cooccurrence;
use crate::error::{Error, Result};
use crate::io::{read_to_string, to_json_pretty, write_all_atomic, FORMAT_VERSION};
use crate::panel::BinaryPanel;
use crate::selftest::{run_all, SelftestReport};
use crate::sigtree::{build_mst, SignalTree};
use crate::synth::{generate, GroundTruth, RegimeSpec, SwitchScenario};

pub const TREE_JSON: &str = "tree.json";
pub const TREE_EDGES_CSV: &str = "tree_edges.csv";
pub const ATTACH_JSON: &str = "attach.json";
pub const TRUTH_JSON: &str = "truth.json";
pub const SPEC_JSON: &str = "spec.json";
pub const CONFIG_JSON: &str = "config.json";
pub const PANEL_DIR: &str = "panel";
pub const WITHOUT_NEWS_DIR: &str = "without_news";
pub const COMPARISON_JSON: &str = "comparison.json";
pub const SELFTEST_JSON: &str = "selftest.json";

/// Command-line settings that override the config file.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub peer_mode: Option<PeerMode>,
    pub alpha_mode: Option<AlphaMode>,
}

fn prefixed(dir: &str, files: Vec<(String, Vec<u8>)>) -> Vec<(String, Vec<u8>)> {
    files.into_iter().map(|(name, bytes)| (format!("{dir}/{name}"), bytes)).collect()
}

/// Tree over the configured long-run rows of `panel`.
pub fn tree_for(cfg: &RunConfig, panel: &BinaryPanel) -> Result<SignalTree> {
    let rows = match cfg.tree_rows {
        Some((a, b)) if a < b && b <= panel.rows() => a..b,
        Some((a, b)) => {
            return Err(Error::Config(format!("tree_rows [{a}, {b}) outside a {}-row panel", panel.rows())))
        }
        None => 0..panel.rows(),
    };
    build_mst(&signal_cooccurrence(panel, rows)?)
}

pub fn load_tree(path: &Path) -> Result<SignalTree> {
    SignalTree::from_json(&read_to_string(path)?)
}

fn tree_or_build(cfg: &RunConfig, panel: &BinaryPanel, tree: Option<&Path>) -> Result<SignalTree> {
    match tree {
        Some(p) => load_tree(p),
        None => tree_for(cfg, panel),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeSummary {
    pub root: String,
    pub depth: usize,
    pub total_chi_squared: u64,
    pub signals: usize,
    pub warnings: Vec<String>,
}

pub fn build_tree(cfg: &RunConfig, out: &Path) -> Result<TreeSummary> {
    let panel = cfg.load_panel()?;
    let tree = tree_for(cfg, &panel)?;
    write_all_atomic(
        out,
        &[(TREE_JSON.to_string(), tree.to_json()?), (TREE_EDGES_CSV.to_string(), tree.edges_csv()?)],
    )?;
    Ok(TreeSummary {
        root: tree.name(tree.root()).to_string(),
        depth: tree.max_depth(),
        total_chi_squared: tree.total_chi_squared(),
        signals: tree.len(),
        warnings: tree.warnings().to_vec(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttachReport {
    pub format_version: u32,
    pub date: NaiveDate,
    pub row: usize,
    pub target: String,
    pub alpha_mode: AlphaMode,
    pub peers: Vec<String>,
    pub adaptive: VariantDecision,
    pub greedy: VariantDecision,
    pub diagnostic: AttachDiagnostic,
}

/// Target attachment at `row`, by default the last rebalance row.
pub fn attach(cfg: &RunConfig, tree: Option<&Path>, row: Option<usize>, ov: Overrides, out: &Path) -> Result<AttachReport> {
    let panel = cfg.load_panel()?;
    let tree = tree_or_build(cfg, &panel, tree)?;
    let config = cfg.backtest_config(ov.peer_mode, ov.alpha_mode)?;
    config.validate(panel.rows())?;
    let row = match row {
        Some(r) => r,
        None => *config
            .rebalance_rows(panel.rows())
            .last()
            .ok_or_else(|| Error::Data("panel too short for one rebalance".into()))?,
    };
    let Decision { date, row, peers, adaptive, greedy, diagnostic } = decide_at(&panel, &tree, &config, row)?;
    let report = AttachReport {
        format_version: FORMAT_VERSION,
        date,
        row,
        target: config.target.clone(),
        alpha_mode: config.alpha_mode,
        peers,
        adaptive,
        greedy,
        diagnostic,
    };
    write_all_atomic(out, &[(ATTACH_JSON.to_string(), to_json_pretty(&report)?)])?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestSummary {
    pub target: String,
    pub rebalances: usize,
    pub metrics: Metrics,
    /// Metrics of the run without the news signal columns, when configured.
    pub without_news: Option<Metrics>,
}

/// Rolling backtest of the configured target. With `news_columns` set, a
/// second ledger without those signals lands in `without_news/`.
pub fn backtest(cfg: &RunConfig, tree: Option<&Path>, ov: Overrides, out: &Path) -> Result<BacktestSummary> {
    let panel = cfg.load_panel()?;
    let tree = tree_or_build(cfg, &panel, tree)?;
    let config = cfg.backtest_config(ov.peer_mode, ov.alpha_mode)?;
    let ledger = run_backtest(&panel, &tree, &config)?;
    let mut files = ledger.to_files()?;
    let mut without_news = None;
    if !cfg.news_columns.is_empty() {
        for c in &cfg.news_columns {
            if !panel.signal_names().contains(c) {
                return Err(Error::Config(format!("news column `{c}` is not a signal")));
            }
        }
        let keep: Vec<&str> = panel
            .names()
            .iter()
            .map(String::as_str)
            .filter(|n| !cfg.news_columns.iter().any(|c| c == n))
            .collect();
        let reduced = panel.select_columns(&keep)?;
        let reduced_tree = tree_for(cfg, &reduced)?;
        let other = run_backtest(&reduced, &reduced_tree, &config)?;
        files.extend(prefixed(WITHOUT_NEWS_DIR, other.to_files()?));
        without_news = Some(other.metrics);
    }
    write_all_atomic(out, &files)?;
    Ok(BacktestSummary {
        target: config.target,
        rebalances: ledger.records.len(),
        metrics: ledger.metrics,
        without_news,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateSummary {
    pub rows: usize,
    pub signals: usize,
    pub assets: usize,
    pub seed: u64,
    pub truth: GroundTruth,
}

/// Spec of the default switch scenario for `seed`.
pub fn scenario_spec(seed: u64) -> RegimeSpec {
    SwitchScenario::default().spec(seed)
}

/// Generates a panel, writes it with its ground truth, the spec and a run
/// config pointing at the panel (target: first asset, peers: the rest).
pub fn simulate(spec: &RegimeSpec, length: usize, out: &Path) -> Result<SimulateSummary> {
    let (panel, truth) = generate(spec, length)?;
    let scenario = SwitchScenario::default();
    let names = spec.asset_names();
    let cfg = RunConfig {
        data: DataSource::PanelDir(PathBuf::from(PANEL_DIR)),
        indicators: Vec::new(),
        thresholds: Default::default(),
        peer_groups: [("peers".to_string(), names[1..].to_vec())].into_iter().collect(),
        tree_rows: None,
        backtest: Some(BacktestSection {
            target: names[0].clone(),
            peers: vec!["@peers".into()],
            peer_mode: PeerMode::Explicit,
            threshold: None,
            alpha_mode: AlphaMode::Lca,
            estimation_window: Some(scenario.estimation_window),
            rebalance_step: Some(scenario.rebalance_step),
            vol_window: None,
            yoy_window: None,
            cost_bps: 0.0,
        }),
        news_columns: Vec::new(),
        output_dir: None,
        seed: spec.seed,
    };
    let mut files = prefixed(PANEL_DIR, panel.to_files()?);
    files.push((TRUTH_JSON.to_string(), to_json_pretty(&truth)?));
    files.push((SPEC_JSON.to_string(), to_json_pretty(spec)?));
    files.push((CONFIG_JSON.to_string(), to_json_pretty(&cfg)?));
    write_all_atomic(out, &files)?;
    Ok(SimulateSummary {
        rows: panel.rows(),
        signals: panel.n_signals(),
        assets: panel.n_assets(),
        seed: spec.seed,
        truth,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub target: String,
    pub dates: usize,
    pub final_cumulative: (f64, f64, f64),
    pub with_news_comparison: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewsComparison {
    pub with_news: Metrics,
    pub without_news: Metrics,
}

/// Report bundle for the ledger in `ledger_dir`, plus the run without news
/// signals when the ledger directory holds one.
pub fn report(ledger_dir: &Path, out: &Path) -> Result<ReportSummary> {
    let ledger = Ledger::read_dir(ledger_dir)?;
    let bundle = ReportBundle::from_ledger(&ledger)?;
    let mut files = bundle.to_files()?;
    let alt = ledger_dir.join(WITHOUT_NEWS_DIR);
    let compared = alt.is_dir();
    if compared {
        let other = Ledger::read_dir(&alt)?;
        files.extend(prefixed(WITHOUT_NEWS_DIR, ReportBundle::from_ledger(&other)?.to_files()?));
        let cmp = NewsComparison {
            with_news: ledger.metrics.clone(),
            without_news: other.metrics,
        };
        files.push((COMPARISON_JSON.to_string(), to_json_pretty(&cmp)?));
    }
    write_all_atomic(out, &files)?;
    let c = &bundle.cumulative;
    let last = |v: &[f64]| v.last().copied().unwrap_or(0.0);
    Ok(ReportSummary {
        target: bundle.target,
        dates: c.dates.len(),
        final_cumulative: (last(&c.adaptive), last(&c.greedy), last(&c.underlying)),
        with_news_comparison: compared,
    })
}

/// Oracle suites at `scale` of their acceptance sizes.
pub fn selftest(seed: u64, scale: f64, out: Option<&Path>) -> Result<SelftestReport> {
    if !(scale > 0.0 && scale <= 1.0) {
        return Err(Error::Parameter(format!("scale must lie in (0, 1], got {scale}")));
    }
    let report = run_all(seed, scale)?;
    if let Some(dir) = out {
        write_all_atomic(dir, &[(SELFTEST_JSON.to_string(), to_json_pretty(&report)?)])?;
    }
    Ok(report)
}
