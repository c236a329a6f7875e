use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::cooccur::signal_cooccurrence;
use crate::panel::indicators::IndicatorKind;
use crate::panel::test_dates;
use crate::sigtree::build_mst;

const N: usize = 5;
const M: usize = 4;

/// Signals and returns with random magnitudes; `sign` forces every signal
/// level positive (1), negative (-1) or random (0).
fn panel(seed: u64, rows: usize, sign: i32) -> BinaryPanel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut names: Vec<String> = (0..N).map(|i| format!("_s{i}")).collect();
    names.extend((0..M).map(|j| format!("x{j}")));
    let mut levels = Vec::with_capacity(rows * (N + M));
    for _ in 0..rows {
        for _ in 0..N {
            let v: f64 = rng.gen_range(0.1..1.0);
            levels.push(match sign {
                1 => v,
                -1 => -v,
                _ => if rng.gen_bool(0.5) { v } else { -v },
            });
        }
        for _ in 0..M {
            levels.push(rng.gen_range(-0.02..0.02));
        }
    }
    let kinds = (0..N + M).map(|c| if c < N { IndicatorKind::Zscore } else { IndicatorKind::Return }).collect();
    BinaryPanel::from_levels(test_dates(rows), names, kinds, N, vec![0.0; N + M], levels).unwrap()
}

fn tree_for(p: &BinaryPanel) -> SignalTree {
    build_mst(&signal_cooccurrence(p, 0..p.rows()).unwrap()).unwrap()
}

fn config() -> BacktestConfig {
    BacktestConfig {
        estimation_window: 40,
        rebalance_step: 10,
        vol_window: 40,
        yoy_window: 50,
        ..BacktestConfig::new("x0", PeerSpec::Explicit { peers: vec!["x1".into(), "x2".into(), "x3".into()] })
    }
}

#[test]
fn always_long_reproduces_the_underlying() {
    let p = panel(1, 157, 1);
    let l = run_backtest(&p, &tree_for(&p), &config()).unwrap();
    assert_eq!(l.daily.adaptive, l.daily.underlying);
    assert_eq!(l.daily.greedy, l.daily.underlying);
    let raw: f64 = (40..157).map(|r| p.asset_return(r, 0)).sum();
    assert_eq!(l.metrics.underlying.cumulative_return, raw);
    assert_eq!(l.metrics.adaptive.cumulative_return, raw);
    assert_eq!(l.records.len(), 12);
    assert_eq!(l.records.last().unwrap().end_row, 157);
}

#[test]
fn always_cash_is_flat() {
    let p = panel(2, 120, -1);
    let l = run_backtest(&p, &tree_for(&p), &config()).unwrap();
    assert!(l.daily.adaptive.iter().chain(&l.daily.greedy).all(|&x| x == 0.0));
    assert_eq!(l.metrics.adaptive.hit_ratio, None);
    assert_eq!(l.metrics.adaptive.invested_periods, 0);
    let pos = l.records.iter().filter(|r| r.realized > 0.0).count() as f64 / l.records.len() as f64;
    assert_eq!(l.metrics.underlying.hit_ratio, Some(pos));
}

#[test]
fn pnl_is_the_sum_over_invested_periods() {
    let p = panel(3, 200, 0);
    let l = run_backtest(&p, &tree_for(&p), &config()).unwrap();
    for (daily, pick) in [
        (&l.daily.adaptive, (|r: &RebalanceRecord| r.decision.adaptive.position) as fn(&RebalanceRecord) -> Position),
        (&l.daily.greedy, |r: &RebalanceRecord| r.decision.greedy.position),
    ] {
        let invested: f64 = l.records.iter().filter(|r| pick(r) == Position::Long).map(|r| r.realized).sum();
        let total: f64 = daily.iter().sum();
        assert!((total - invested).abs() < 1e-12);
        // flat on cash days
        for r in &l.records {
            if pick(r) == Position::Cash {
                let s = r.decision.row - 40;
                assert!(daily[s..r.end_row - 40].iter().all(|&x| x == 0.0));
            }
        }
    }
}

#[test]
fn switching_costs_are_charged_once_per_switch() {
    let p = panel(4, 200, 0);
    let t = tree_for(&p);
    let free = run_backtest(&p, &t, &config()).unwrap();
    let charged = run_backtest(&p, &t, &BacktestConfig { cost_bps: 10.0, ..config() }).unwrap();
    let switches = free.metrics.adaptive.position_switches as f64;
    let diff = free.metrics.adaptive.cumulative_return - charged.metrics.adaptive.cumulative_return;
    assert!((diff - switches * 1e-3).abs() < 1e-12);
}

#[test]
fn decisions_never_look_ahead() {
    for seed in 0..3 {
        let p = panel(10 + seed, 130, 0);
        let t = tree_for(&p);
        assert!(audit_no_lookahead(&p, &t, &config(), seed).unwrap().passed());
        let thr = BacktestConfig {
            peers: PeerSpec::Threshold { theta: 1.5, horizon: Horizon::LongTerm, history: 3 },
            ..config()
        };
        assert!(audit_no_lookahead(&p, &t, &thr, seed).unwrap().passed());
    }
}

#[test]
fn the_rebalance_row_signals_do_matter() {
    // sanity check on the audit: perturbing allowed data must move decisions
    let p = panel(20, 120, 0);
    let t = tree_for(&p);
    let cfg = config();
    let ctx = Context::new(&p, &t, &cfg).unwrap();
    let want = ctx.decisions(&[60]).unwrap();
    let k = p.cols();
    let mut tail = p.levels()[60 * k..].to_vec();
    for v in &mut tail[..N] {
        *v = -*v;
    }
    let moved = p.with_tail_levels(60, &tail).unwrap();
    let got = Context::new(&moved, &t, &cfg).unwrap().decisions(&[60]).unwrap();
    assert_ne!(got[0].adaptive.position, want[0].adaptive.position);
}

#[test]
fn thread_count_does_not_change_the_ledger() {
    let p = panel(5, 220, 0);
    let t = tree_for(&p);
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let a = one.install(|| run_backtest(&p, &t, &config())).unwrap();
    let b = four.install(|| run_backtest(&p, &t, &config())).unwrap();
    assert_eq!(a.to_files().unwrap(), b.to_files().unwrap());
}

#[test]
fn ledger_round_trips() {
    let p = panel(6, 330, 0);
    let l = run_backtest(&p, &tree_for(&p), &config()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    l.write_dir(dir.path()).unwrap();
    assert_eq!(Ledger::read_dir(dir.path()).unwrap(), l);
    assert!(l.metrics.adaptive.yoy_correlation.is_some());
    let csv = String::from_utf8(l.pnl_csv().unwrap()).unwrap();
    assert!(csv.starts_with("date,adaptive,greedy,underlying\n"));
    assert_eq!(csv.lines().count(), 1 + 330 - 40);
}

#[test]
fn predictions_scale_with_volatility() {
    let target = [0.01, -0.02, 0.03, -0.01];
    let ind = [0.5, -0.5, 1.5, 0.2];
    assert_eq!(predict(0.0, &target, &ind).value, 0.0);
    assert_eq!(predict(0.7, &ind, &ind).value, 0.7);
    let doubled: Vec<f64> = target.iter().map(|x| 2.0 * x).collect();
    let a = predict(0.7, &target, &ind).value;
    let b = predict(0.7, &doubled, &ind).value;
    assert!((b - 2.0 * a).abs() < 1e-15);
    let flat = predict(0.7, &target, &[0.3, 0.3, 0.3]);
    assert!(flat.degenerate && flat.value == 0.0);
}

#[test]
fn configuration_errors() {
    let p = panel(7, 100, 0);
    let t = tree_for(&p);
    let bad_target = BacktestConfig { target: "nope".into(), ..config() };
    assert!(matches!(run_backtest(&p, &t, &bad_target), Err(Error::Config(_))));
    let bad_peer = BacktestConfig { peers: PeerSpec::Explicit { peers: vec!["zz".into()] }, ..config() };
    assert!(matches!(run_backtest(&p, &t, &bad_peer), Err(Error::Config(_))));
    let short = p.slice_rows(0..45).unwrap();
    assert!(matches!(run_backtest(&short, &t, &BacktestConfig { vol_window: 10, ..config() }), Err(Error::Data(_))));
    let inverted = BacktestConfig { estimation_window: 5, ..config() };
    assert!(matches!(run_backtest(&p, &t, &inverted), Err(Error::Config(_))));
    let text = r#"{"target": "x0", "peers": {"mode": "explicit", "peers": []}, "windw": 3}"#;
    assert!(serde_json::from_str::<BacktestConfig>(text).is_err());
    let ok = r#"{"target": "x0", "peers": {"mode": "threshold", "theta": 1.0, "horizon": "long-term"}}"#;
    let c: BacktestConfig = serde_json::from_str(ok).unwrap();
    assert_eq!((c.estimation_window, c.rebalance_step, c.vol_window, c.yoy_window), (200, 20, 200, 252));
}
