//! Rolling backtest of the long/cash strategy.
//!
//! At every rebalance row `t = W, W + Q, ...` the short-run matrix is
//! counted over rows `[t - W, t)`, peers attach greedily, and the target
//! attaches both adaptively and greedily. Each variant holds the target
//! over rows `t..t + Q` iff its attached signal reads 1 in row `t`. Row `r`
//! carries the return earned from date `r` to the next date, so a decision
//! at `t` only touches asset data in rows before `t` and signal data up to
//! and including `t`.

mod export;
mod metrics;

use chrono::NaiveDate;
use rayon::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attach::{
    attach_target, leaf_distances, neighborhood, AlphaMode, AttachDiagnostic, AttachedTree, CandidateWeights,
    Attachment, Horizon, LeafDistanceMatrix, NeighborhoodMode,
};
use crate::cooccur::{cooccurrence, CoOccurrence};
use crate::error::{Error, Result};
use crate::io::FORMAT_VERSION;
use crate::panel::indicators::{is_degenerate, mean_std};
use crate::panel::BinaryPanel;
use crate::sigtree::SignalTree;

pub use export::{LEDGER_JSON, PNL_CSV, REBALANCES_JSONL, DIAGNOSTICS_JSONL};
pub use metrics::{pearson, yoy_correlation, yoy_series, PeriodPrediction, VariantMetrics};

pub const YOY_METHOD: &str = "sum of complete rebalance-period predictions and realized returns \
whose periods fall inside the trailing yoy_window rows ending at each period end; Pearson over period ends";

/// Who counts as a peer of the target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PeerSpec {
    Explicit {
        peers: Vec<String>,
    },
    /// Leaves within `theta` of the target under greedy attachment, using
    /// the latest distance matrix or the sum over the last `history`
    /// rebalances.
    Threshold {
        theta: f64,
        horizon: Horizon,
        #[serde(default = "default_history")]
        history: usize,
    },
}

fn default_history() -> usize {
    12
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BacktestConfig {
    pub target: String,
    pub peers: PeerSpec,
    #[serde(default = "defaults::estimation_window")]
    pub estimation_window: usize,
    #[serde(default = "defaults::rebalance_step")]
    pub rebalance_step: usize,
    #[serde(default = "defaults::vol_window")]
    pub vol_window: usize,
    #[serde(default = "defaults::yoy_window")]
    pub yoy_window: usize,
    #[serde(default)]
    pub alpha_mode: AlphaMode,
    /// Charged on every long/cash switch, in basis points of notional.
    #[serde(default)]
    pub cost_bps: f64,
}

mod defaults {
    pub fn estimation_window() -> usize {
        200
    }
    pub fn rebalance_step() -> usize {
        20
    }
    pub fn vol_window() -> usize {
        200
    }
    pub fn yoy_window() -> usize {
        252
    }
}

impl BacktestConfig {
    pub fn new(target: impl Into<String>, peers: PeerSpec) -> Self {
        Self {
            target: target.into(),
            peers,
            estimation_window: defaults::estimation_window(),
            rebalance_step: defaults::rebalance_step(),
            vol_window: defaults::vol_window(),
            yoy_window: defaults::yoy_window(),
            alpha_mode: AlphaMode::Lca,
            cost_bps: 0.0,
        }
    }

    pub fn validate(&self, rows: usize) -> Result<()> {
        let (w, q) = (self.estimation_window, self.rebalance_step);
        if q == 0 || w < q {
            return Err(Error::Config(format!("need estimation_window >= rebalance_step >= 1, got {w} and {q}")));
        }
        if self.vol_window == 0 || self.vol_window > rows {
            return Err(Error::Config(format!("vol_window {} outside 1..={rows}", self.vol_window)));
        }
        if self.yoy_window < q {
            return Err(Error::Config("yoy_window shorter than one rebalance period".into()));
        }
        if !(self.cost_bps >= 0.0 && self.cost_bps.is_finite()) {
            return Err(Error::Config("cost_bps must be finite and nonnegative".into()));
        }
        if let PeerSpec::Threshold { theta, history, .. } = &self.peers {
            if theta.is_nan() || *theta <= 0.0 || *history == 0 {
                return Err(Error::Config("threshold peers need theta > 0 and history >= 1".into()));
            }
        }
        if rows < w + q {
            return Err(Error::Data(format!("panel has {rows} rows; need at least {}", w + q)));
        }
        Ok(())
    }

    /// Rebalance rows for a panel of `rows` rows.
    pub fn rebalance_rows(&self, rows: usize) -> Vec<usize> {
        (self.estimation_window..rows).step_by(self.rebalance_step).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Position {
    Long,
    Cash,
}

/// Volatility-matched return forecast for the coming period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub level: f64,
    pub sigma_target: f64,
    pub sigma_indicator: f64,
    pub value: f64,
    /// The indicator was flat over the volatility window; value forced to 0.
    pub degenerate: bool,
}

/// `level * sigma_target / sigma_indicator`, zero when the indicator has
/// no trailing variation.
pub fn predict(level: f64, target_history: &[f64], indicator_history: &[f64]) -> Prediction {
    let (_, sigma_target) = mean_std(target_history);
    let (_, sigma_indicator) = mean_std(indicator_history);
    let scale = indicator_history.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let degenerate = indicator_history.is_empty() || is_degenerate(sigma_indicator, scale);
    Prediction {
        level,
        sigma_target,
        sigma_indicator,
        value: if degenerate { 0.0 } else { level * sigma_target / sigma_indicator },
        degenerate,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantDecision {
    pub signal: String,
    pub chi: u32,
    pub weight: f64,
    pub signal_bit: u8,
    pub position: Position,
    pub prediction: Prediction,
}

/// Everything decided at one rebalance row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub date: NaiveDate,
    pub row: usize,
    pub peers: Vec<String>,
    pub adaptive: VariantDecision,
    pub greedy: VariantDecision,
    pub diagnostic: AttachDiagnostic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RebalanceRecord {
    #[serde(flatten)]
    pub decision: Decision,
    /// Exclusive end row of the holding period.
    pub end_row: usize,
    /// Sum of target returns over the holding period.
    pub realized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyPnl {
    pub dates: Vec<NaiveDate>,
    pub adaptive: Vec<f64>,
    pub greedy: Vec<f64>,
    pub underlying: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub adaptive: VariantMetrics,
    pub greedy: VariantMetrics,
    pub underlying: VariantMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerManifest {
    pub format_version: u32,
    pub config: BacktestConfig,
    pub rows: usize,
    pub first_rebalance_row: usize,
    pub rebalances: usize,
    pub tree_root: String,
    pub yoy_method: String,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ledger {
    pub manifest: LedgerManifest,
    pub records: Vec<RebalanceRecord>,
    pub daily: DailyPnl,
    pub metrics: Metrics,
}

/// Per-date inputs shared by every variant.
struct Context<'a> {
    panel: &'a BinaryPanel,
    tree: &'a SignalTree,
    config: &'a BacktestConfig,
    target: usize,
    explicit_peers: Option<Vec<usize>>,
}

impl<'a> Context<'a> {
    fn new(panel: &'a BinaryPanel, tree: &'a SignalTree, config: &'a BacktestConfig) -> Result<Self> {
        config.validate(panel.rows())?;
        if panel.signal_names() != tree.names() {
            return Err(Error::Config("signal tree nodes do not match the panel's signal columns".into()));
        }
        let target = panel
            .asset_index(&config.target)
            .map_err(|_| Error::Config(format!("unknown target `{}`", config.target)))?;
        let explicit_peers = match &config.peers {
            PeerSpec::Explicit { peers } => Some(
                peers
                    .iter()
                    .map(|p| panel.asset_index(p).map_err(|_| Error::Config(format!("unknown peer `{p}`"))))
                    .collect::<Result<Vec<_>>>()?,
            ),
            PeerSpec::Threshold { .. } => None,
        };
        Ok(Self {
            panel,
            tree,
            config,
            target,
            explicit_peers,
        })
    }

    fn short_run(&self, row: usize) -> Result<CoOccurrence> {
        cooccurrence(self.panel, row - self.config.estimation_window..row)
    }

    fn variant(&self, row: usize, a: &Attachment) -> VariantDecision {
        let p = self.panel;
        let vol = self.config.vol_window;
        let target_hist: Vec<f64> = (row.saturating_sub(vol)..row).map(|r| p.asset_return(r, self.target)).collect();
        let ind_hist: Vec<f64> = ((row + 1).saturating_sub(vol)..=row).map(|r| p.level(r, a.signal)).collect();
        let bit = p.bit(row, a.signal);
        VariantDecision {
            signal: self.tree.name(a.signal).to_string(),
            chi: a.chi,
            weight: a.weight,
            signal_bit: bit,
            position: if bit == 1 { Position::Long } else { Position::Cash },
            prediction: predict(p.level(row, a.signal), &target_hist, &ind_hist),
        }
    }

    fn decide(&self, row: usize, c_t: &CoOccurrence, history: &[LeafDistanceMatrix]) -> Result<Decision> {
        let date = self.panel.dates()[row];
        let attached = AttachedTree::greedy(self.tree, c_t, Some(date))?;
        let mode = match (&self.explicit_peers, &self.config.peers) {
            (Some(list), _) => NeighborhoodMode::Explicit(list.clone()),
            (None, PeerSpec::Threshold { theta, horizon, .. }) => NeighborhoodMode::Threshold {
                theta: *theta,
                horizon: *horizon,
            },
            (None, PeerSpec::Explicit { .. }) => unreachable!("explicit peers are resolved up front"),
        };
        let nb = neighborhood(history, attached.n_leaves(), self.target, &mode)?;
        let cand = CandidateWeights::for_leaf(c_t, self.target)?;
        let ta = attach_target(&attached, self.target, &cand, &nb, self.config.alpha_mode)?;
        Ok(Decision {
            date,
            row,
            peers: nb.members.iter().map(|&j| attached.leaf_names[j].clone()).collect(),
            adaptive: self.variant(row, &ta.attachment),
            greedy: self.variant(row, &ta.greedy),
            diagnostic: ta.diagnostic,
        })
    }

    /// Decisions at `rows` (each a rebalance row), in order.
    fn decisions(&self, rows: &[usize]) -> Result<Vec<Decision>> {
        let all = self.config.rebalance_rows(self.panel.rows());
        let last = rows.iter().copied().max().unwrap_or(0);
        let needed: Vec<usize> = match &self.config.peers {
            PeerSpec::Explicit { .. } => rows.to_vec(),
            PeerSpec::Threshold { .. } => all.iter().copied().filter(|&r| r <= last).collect(),
        };
        let matrices: Vec<CoOccurrence> = needed.par_iter().map(|&r| self.short_run(r)).collect::<Result<_>>()?;
        let distances: Vec<LeafDistanceMatrix> = match &self.config.peers {
            PeerSpec::Explicit { .. } => Vec::new(),
            PeerSpec::Threshold { .. } => matrices
                .par_iter()
                .zip(&needed)
                .map(|(c, &r)| Ok(leaf_distances(&AttachedTree::greedy(self.tree, c, Some(self.panel.dates()[r]))?)))
                .collect::<Result<_>>()?,
        };
        let window = match &self.config.peers {
            PeerSpec::Threshold { horizon: Horizon::LongTerm, history, .. } => *history,
            _ => 1,
        };
        rows.par_iter()
            .map(|&r| {
                let k = needed.binary_search(&r).map_err(|_| Error::Parameter(format!("row {r} is not a rebalance row")))?;
                let hist = if distances.is_empty() { &[][..] } else { &distances[(k + 1).saturating_sub(window)..=k] };
                self.decide(r, &matrices[k], hist)
            })
            .collect()
    }
}

/// Runs the full rolling backtest.
pub fn run_backtest(panel: &BinaryPanel, tree: &SignalTree, config: &BacktestConfig) -> Result<Ledger> {
    let ctx = Context::new(panel, tree, config)?;
    let t_rows = panel.rows();
    let rows = config.rebalance_rows(t_rows);
    let decisions = ctx.decisions(&rows)?;
    let ret = |r: usize| panel.asset_return(r, ctx.target);

    let start = rows[0];
    let mut daily = DailyPnl {
        dates: panel.dates()[start..].to_vec(),
        adaptive: Vec::with_capacity(t_rows - start),
        greedy: Vec::with_capacity(t_rows - start),
        underlying: Vec::with_capacity(t_rows - start),
    };
    let cost = config.cost_bps * 1e-4;
    let (mut prev_a, mut prev_g) = (Position::Cash, Position::Cash);
    let mut records = Vec::with_capacity(decisions.len());
    for d in decisions {
        let end = (d.row + config.rebalance_step).min(t_rows);
        for r in d.row..end {
            let x = ret(r);
            let first = r == d.row;
            let leg = |pos: Position, prev: Position| {
                let held = if pos == Position::Long { x } else { 0.0 };
                if first && pos != prev { held - cost } else { held }
            };
            daily.adaptive.push(leg(d.adaptive.position, prev_a));
            daily.greedy.push(leg(d.greedy.position, prev_g));
            daily.underlying.push(x);
        }
        prev_a = d.adaptive.position;
        prev_g = d.greedy.position;
        records.push(RebalanceRecord {
            realized: (d.row..end).map(ret).sum(),
            end_row: end,
            decision: d,
        });
    }

    let mut warnings = tree.warnings().to_vec();
    if t_rows - start < config.yoy_window {
        warnings.push(format!(
            "backtest span of {} rows is shorter than yoy_window {}; no year-on-year correlation",
            t_rows - start,
            config.yoy_window
        ));
    }
    let fallbacks = records.iter().filter(|r| r.decision.diagnostic.fallback.is_some()).count();
    if fallbacks > 0 {
        warnings.push(format!("{fallbacks} rebalances fell back to greedy attachment"));
    }
    let metrics = metrics::metrics(&records, &daily, config);
    Ok(Ledger {
        manifest: LedgerManifest {
            format_version: FORMAT_VERSION,
            config: config.clone(),
            rows: t_rows,
            first_rebalance_row: start,
            rebalances: records.len(),
            tree_root: tree.name(tree.root()).to_string(),
            yoy_method: YOY_METHOD.to_string(),
            warnings,
        },
        records,
        daily,
        metrics,
    })
}

/// The decision a backtest would take at `row`, which must have a full
/// estimation window behind it (and lie on the rebalance grid in threshold
/// peer mode).
pub fn decide_at(panel: &BinaryPanel, tree: &SignalTree, config: &BacktestConfig, row: usize) -> Result<Decision> {
    let ctx = Context::new(panel, tree, config)?;
    if row < config.estimation_window || row >= panel.rows() {
        return Err(Error::Parameter(format!(
            "row {row} needs {} rows of history inside a {}-row panel",
            config.estimation_window,
            panel.rows()
        )));
    }
    Ok(ctx.decisions(&[row])?.remove(0))
}

/// Outcome of the look-ahead audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub checked: usize,
    /// Rebalance rows whose decision changed when later data changed.
    pub violations: Vec<usize>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Re-decides each rebalance row after scrambling every signal level in
/// later rows and every asset return from that row on. Decisions must not
/// move.
pub fn audit_no_lookahead(panel: &BinaryPanel, tree: &SignalTree, config: &BacktestConfig, seed: u64) -> Result<AuditReport> {
    let ctx = Context::new(panel, tree, config)?;
    let rows = config.rebalance_rows(panel.rows());
    let reference = ctx.decisions(&rows)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (k, n) = (panel.cols(), panel.n_signals());
    let mut violations = Vec::new();
    for (&row, want) in rows.iter().zip(&reference) {
        let original = &panel.levels()[row * k..];
        let tail: Vec<f64> = original
            .iter()
            .enumerate()
            .map(|(i, &v)| if i < n { v } else { rng.gen_range(-1.0..1.0) })
            .collect();
        let scrambled = panel.with_tail_levels(row, &tail)?;
        let got = Context::new(&scrambled, tree, config)?.decisions(&[row])?;
        if got[0] != *want {
            violations.push(row);
        }
    }
    Ok(AuditReport {
        checked: rows.len(),
        violations,
    })
}

#[cfg(test)]
mod tests;
