//! Continuous indicator construction from raw series.
//!
//! Every indicator lives on the same date grid as its source. Entries that
//! need more history than is available are `None` rather than padded.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Trading days in one year, used for all "1Y" lookbacks.
pub const ONE_YEAR: usize = 252;
pub const DEFAULT_CARRY_LAG: usize = 60;
pub const DEFAULT_MOMENTUM_WINDOW: usize = 100;

const INVERTED_SUFFIX: &str = ":inv";

/// A raw observed series: prices, rates or counts on trading-day dates.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSeries {
    pub name: String,
    pub dates: Vec<NaiveDate>,
    pub values: Vec<f64>,
}

impl RawSeries {
    pub fn new(name: impl Into<String>, dates: Vec<NaiveDate>, values: Vec<f64>) -> Result<Self> {
        let name = name.into();
        if dates.is_empty() {
            return Err(Error::Data(format!("series `{name}` is empty")));
        }
        if dates.len() != values.len() {
            return Err(Error::Data(format!(
                "series `{name}` has {} dates but {} values",
                dates.len(),
                values.len()
            )));
        }
        if let Some(w) = dates.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::Data(format!(
                "series `{name}` dates not strictly increasing at {}",
                w[1]
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Data(format!("series `{name}` has non-finite value {v}")));
        }
        Ok(Self {
            name,
            dates,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IndicatorKind {
    Zscore,
    Carry,
    CarryChange,
    MomentumMean,
    ImpliedVolZscore,
    Return,
    RawCount,
}

/// A continuous indicator on its source's date grid. `None` marks dates
/// where the indicator is unavailable (insufficient history).
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorSeries {
    pub name: String,
    pub kind: IndicatorKind,
    pub dates: Vec<NaiveDate>,
    pub values: Vec<Option<f64>>,
}

impl IndicatorSeries {
    /// Wraps a raw series unchanged, e.g. pre-computed returns or news counts.
    pub fn from_raw(series: &RawSeries, kind: IndicatorKind) -> Self {
        Self {
            name: series.name.clone(),
            kind,
            dates: series.dates.clone(),
            values: series.values.iter().map(|&v| Some(v)).collect(),
        }
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn available(&self) -> impl Iterator<Item = (NaiveDate, f64)> + '_ {
        self.dates
            .iter()
            .zip(&self.values)
            .filter_map(|(&d, v)| v.map(|v| (d, v)))
    }
}

/// Population mean and standard deviation.
pub(crate) fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// True when `std` is indistinguishable from rounding noise for values of
/// magnitude `scale`.
pub(crate) fn is_degenerate(std: f64, scale: f64) -> bool {
    std <= 64.0 * f64::EPSILON * scale.max(f64::MIN_POSITIVE)
}

/// Trailing z-score over `window` observations (the current one included),
/// with population standard deviation. Zero trailing variance yields 0.
pub fn zscore(series: &RawSeries, window: usize) -> Result<IndicatorSeries> {
    if window < 2 {
        return Err(Error::Parameter(format!("z-score window must be >= 2, got {window}")));
    }
    if series.len() < window {
        return Err(Error::Parameter(format!(
            "series `{}` has {} observations, shorter than z-score window {window}",
            series.name,
            series.len()
        )));
    }
    let values = (0..series.len())
        .map(|t| {
            if t + 1 < window {
                return None;
            }
            let w = &series.values[t + 1 - window..=t];
            let (mean, std) = mean_std(w);
            let scale = w.iter().fold(0.0f64, |a, x| a.max(x.abs()));
            if is_degenerate(std, scale) {
                Some(0.0)
            } else {
                Some((series.values[t] - mean) / std)
            }
        })
        .collect();
    Ok(IndicatorSeries {
        name: series.name.clone(),
        kind: IndicatorKind::Zscore,
        dates: series.dates.clone(),
        values,
    })
}

/// Negates every value. The name carries an inversion marker that is
/// toggled, so inverting twice restores the original series exactly.
pub fn invert_sign(series: &IndicatorSeries) -> IndicatorSeries {
    let name = match series.name.strip_suffix(INVERTED_SUFFIX) {
        Some(base) => base.to_string(),
        None => format!("{}{INVERTED_SUFFIX}", series.name),
    };
    IndicatorSeries {
        name,
        kind: series.kind,
        dates: series.dates.clone(),
        values: series.values.iter().map(|v| v.map(|x| -x)).collect(),
    }
}

/// Rate differential `dom - base`. Both series must share one date grid.
pub fn carry(dom_rate: &RawSeries, base_rate: &RawSeries) -> Result<IndicatorSeries> {
    if dom_rate.dates != base_rate.dates {
        return Err(Error::Alignment(format!(
            "carry inputs `{}` and `{}` are on different date grids",
            dom_rate.name, base_rate.name
        )));
    }
    Ok(IndicatorSeries {
        name: dom_rate.name.clone(),
        kind: IndicatorKind::Carry,
        dates: dom_rate.dates.clone(),
        values: dom_rate
            .values
            .iter()
            .zip(&base_rate.values)
            .map(|(d, b)| Some(d - b))
            .collect(),
    })
}

/// `carry_t - carry_{t-lag}`.
pub fn carry_change(carry: &IndicatorSeries, lag: usize) -> Result<IndicatorSeries> {
    if lag == 0 {
        return Err(Error::Parameter("carry change lag must be >= 1".into()));
    }
    let values = (0..carry.values.len())
        .map(|t| {
            if t < lag {
                return None;
            }
            Some(carry.values[t]? - carry.values[t - lag]?)
        })
        .collect();
    Ok(IndicatorSeries {
        name: carry.name.clone(),
        kind: IndicatorKind::CarryChange,
        dates: carry.dates.clone(),
        values,
    })
}

/// Trailing arithmetic mean of spot returns. Binarizes against 0.
pub fn momentum(spot_returns: &RawSeries, window: usize) -> Result<IndicatorSeries> {
    if window == 0 {
        return Err(Error::Parameter("momentum window must be >= 1".into()));
    }
    let v = &spot_returns.values;
    let values = (0..v.len())
        .map(|t| {
            if t + 1 < window {
                None
            } else {
                Some(v[t + 1 - window..=t].iter().sum::<f64>() / window as f64)
            }
        })
        .collect();
    Ok(IndicatorSeries {
        name: spot_returns.name.clone(),
        kind: IndicatorKind::MomentumMean,
        dates: spot_returns.dates.clone(),
        values,
    })
}

/// 1Y z-score of implied volatility with the sign inverted, so that a
/// "1" reads as low expected volatility.
pub fn implied_vol_zscore(iv: &RawSeries, window: usize) -> Result<IndicatorSeries> {
    let z = zscore(iv, window)?;
    Ok(IndicatorSeries {
        name: iv.name.clone(),
        kind: IndicatorKind::ImpliedVolZscore,
        dates: z.dates,
        values: z.values.into_iter().map(|v| v.map(|x| -x)).collect(),
    })
}

/// Simple returns `p_t / p_{t-1} - 1` from a price level series.
pub fn simple_returns(prices: &RawSeries) -> Result<IndicatorSeries> {
    if let Some(p) = prices.values.iter().find(|&&p| p <= 0.0) {
        return Err(Error::Data(format!(
            "price series `{}` has non-positive level {p}",
            prices.name
        )));
    }
    let mut values = Vec::with_capacity(prices.len());
    values.push(None);
    values.extend(prices.values.windows(2).map(|w| Some(w[1] / w[0] - 1.0)));
    Ok(IndicatorSeries {
        name: prices.name.clone(),
        kind: IndicatorKind::Return,
        dates: prices.dates.clone(),
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::test_dates;

    fn raw(values: &[f64]) -> RawSeries {
        RawSeries::new("s", test_dates(values.len()), values.to_vec()).unwrap()
    }

    #[test]
    fn raw_series_validation() {
        let d = test_dates(2);
        assert!(RawSeries::new("a", vec![], vec![]).is_err());
        assert!(RawSeries::new("a", vec![d[1], d[0]], vec![1.0, 2.0]).is_err());
        assert!(RawSeries::new("a", d.clone(), vec![1.0, f64::NAN]).is_err());
        assert!(RawSeries::new("a", d, vec![1.0]).is_err());
    }

    #[test]
    fn zscore_constant_series_is_zero() {
        for window in [2, 3, 7] {
            let z = zscore(&raw(&[0.1; 10]), window).unwrap();
            for (t, v) in z.values.iter().enumerate() {
                if t + 1 < window {
                    assert_eq!(*v, None);
                } else {
                    assert_eq!(*v, Some(0.0));
                }
            }
        }
    }

    #[test]
    fn zscore_of_one_two_three() {
        // mean 2, population std sqrt(2/3)
        let z = zscore(&raw(&[1.0, 2.0, 3.0]), 3).unwrap();
        assert_eq!(z.values[..2], [None, None]);
        let expected = 1.0 / (2.0f64 / 3.0).sqrt();
        assert!((z.values[2].unwrap() - expected).abs() < 1e-15);
        assert!((expected - 1.224_744_871_391_589).abs() < 1e-15);
    }

    #[test]
    fn zscore_parameter_errors() {
        assert!(matches!(zscore(&raw(&[1.0, 2.0]), 1), Err(Error::Parameter(_))));
        assert!(matches!(zscore(&raw(&[1.0, 2.0]), 3), Err(Error::Parameter(_))));
    }

    #[test]
    fn invert_sign_negates_and_is_an_involution() {
        let s = IndicatorSeries {
            name: "_UN.US".into(),
            kind: IndicatorKind::Zscore,
            dates: test_dates(3),
            values: vec![Some(1.5), Some(-0.2), None],
        };
        let inv = invert_sign(&s);
        assert_eq!(inv.values, vec![Some(-1.5), Some(0.2), None]);
        assert_ne!(inv.name, s.name);
        assert_eq!(invert_sign(&inv), s);
    }

    #[test]
    fn carry_and_change() {
        let dom = raw(&[1.0, 2.0, 3.0, 4.0]);
        let c = carry(&dom, &dom).unwrap();
        assert!(c.values.iter().all(|v| *v == Some(0.0)));

        let base = RawSeries::new("b", test_dates(4), vec![0.5; 4]).unwrap();
        let c = carry(&dom, &base).unwrap();
        assert_eq!(c.values[3], Some(3.5));

        let flat = IndicatorSeries {
            values: vec![Some(0.7); 100],
            dates: test_dates(100),
            ..c.clone()
        };
        let ch = carry_change(&flat, DEFAULT_CARRY_LAG).unwrap();
        assert!(ch.values[..60].iter().all(Option::is_none));
        assert!(ch.values[60..].iter().all(|v| *v == Some(0.0)));

        let short = RawSeries::new("b", test_dates(3), vec![0.5; 3]).unwrap();
        assert!(matches!(carry(&dom, &short), Err(Error::Alignment(_))));
    }

    #[test]
    fn momentum_sign_and_boundary() {
        let up = momentum(&raw(&[0.01; 5]), 3).unwrap();
        assert!(up.values[2..].iter().all(|v| v.unwrap() > 0.0));

        let alt = momentum(&raw(&[0.02, -0.02, 0.02, -0.02]), 4).unwrap();
        assert_eq!(alt.values[3], Some(0.0));
        assert_eq!(alt.values[..3], [None, None, None]);
    }

    #[test]
    fn implied_vol_is_inverted_zscore() {
        let s = raw(&[10.0, 12.0, 11.0, 15.0, 9.0]);
        let z = zscore(&s, 3).unwrap();
        let iv = implied_vol_zscore(&s, 3).unwrap();
        for (a, b) in z.values.iter().zip(&iv.values) {
            assert_eq!(a.map(|x| -x), *b);
        }
    }

    #[test]
    fn simple_returns_from_prices() {
        let r = simple_returns(&raw(&[100.0, 110.0, 99.0])).unwrap();
        assert_eq!(r.values[0], None);
        assert!((r.values[1].unwrap() - 0.1).abs() < 1e-12);
        assert!((r.values[2].unwrap() + 0.1).abs() < 1e-12);
        assert!(simple_returns(&raw(&[1.0, 0.0])).is_err());
    }
}
