//! Daily log-price series derived from (typically weekly) price observations.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::ingest::PriceSeries;

/// How days between observations are filled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Resampling {
    /// Carry the last observed price forward.
    #[default]
    ForwardFill,
    /// Interpolate log-price linearly between observations.
    Linear,
}

impl std::str::FromStr for Resampling {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ffill" | "forward-fill" => Ok(Resampling::ForwardFill),
            "linear" => Ok(Resampling::Linear),
            other => Err(format!("unknown resampling `{other}` (expected ffill or linear)")),
        }
    }
}

/// Natural-log prices at daily resolution. Day `t` (1-based) is
/// `start + (t − 1)` days.
#[derive(Debug, Clone, PartialEq)]
pub struct DailySeries {
    start: NaiveDate,
    log_prices: Vec<f64>,
}

impl DailySeries {
    pub fn from_log_prices(start: NaiveDate, log_prices: Vec<f64>) -> Self {
        DailySeries { start, log_prices }
    }

    /// Resamples the whole series to one value per calendar day.
    pub fn resample(series: &PriceSeries, method: Resampling) -> Self {
        Self::resample_until(series, method, series.last_date())
    }

    /// Resamples using only observations dated on or before `until`, covering
    /// every day from the first observation to `until` inclusive. Days after the
    /// last usable observation are forward-filled whatever the method.
    pub fn resample_until(series: &PriceSeries, method: Resampling, until: NaiveDate) -> Self {
        let start = series.first_date();
        let points: Vec<_> = series.points().iter().take_while(|p| p.date <= until).collect();
        let days = (until - start).num_days().max(-1) + 1;
        let mut log_prices = Vec::with_capacity(days.max(0) as usize);
        let mut next = 0;
        for offset in 0..days {
            let day = start + chrono::Duration::days(offset);
            while next + 1 < points.len() && points[next + 1].date <= day {
                next += 1;
            }
            let here = points[next];
            let value = match (method, points.get(next + 1)) {
                (Resampling::Linear, Some(after)) if here.date < day => {
                    let span = (after.date - here.date).num_days() as f64;
                    let frac = (day - here.date).num_days() as f64 / span;
                    let (l0, l1) = (here.avg_price_usd.ln(), after.avg_price_usd.ln());
                    l0 + frac * (l1 - l0)
                }
                _ => here.avg_price_usd.ln(),
            };
            log_prices.push(value);
        }
        DailySeries { start, log_prices }
    }

    pub fn len(&self) -> usize {
        self.log_prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_prices.is_empty()
    }

    pub fn start(&self) -> NaiveDate {
        self.start
    }

    pub fn log_prices(&self) -> &[f64] {
        &self.log_prices
    }

    /// Log price on day `t` (1-based).
    pub fn log_price(&self, t: usize) -> Option<f64> {
        t.checked_sub(1).and_then(|i| self.log_prices.get(i)).copied()
    }

    pub fn date_of(&self, t: usize) -> NaiveDate {
        self.start + chrono::Duration::days(t as i64 - 1)
    }

    /// Day index of `date`, if it falls inside the series.
    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        let t = (date - self.start).num_days() + 1;
        (t >= 1 && t as usize <= self.len()).then_some(t as usize)
    }

    /// Observations `t1..=t2` as `(times, log_prices)`.
    pub fn slice(&self, t1: usize, t2: usize) -> (Vec<f64>, Vec<f64>) {
        let times = (t1..=t2).map(|t| t as f64).collect();
        let values = self.log_prices[t1 - 1..t2].to_vec();
        (times, values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::PricePoint;

    fn weekly() -> PriceSeries {
        let d = |day| NaiveDate::from_ymd_opt(2020, 1, day).unwrap();
        PriceSeries::new(
            "x",
            vec![
                PricePoint { date: d(1), avg_price_usd: 10.0 },
                PricePoint { date: d(8), avg_price_usd: 20.0 },
                PricePoint { date: d(15), avg_price_usd: 5.0 },
            ],
        )
        .unwrap()
    }

    #[test]
    fn forward_fill_repeats_last_observation() {
        let s = DailySeries::resample(&weekly(), Resampling::ForwardFill);
        assert_eq!(s.len(), 15);
        assert_eq!(s.log_price(1), Some(10f64.ln()));
        assert_eq!(s.log_price(7), Some(10f64.ln()));
        assert_eq!(s.log_price(8), Some(20f64.ln()));
        assert_eq!(s.log_price(15), Some(5f64.ln()));
        assert_eq!(s.log_price(16), None);
        assert_eq!(s.index_of(NaiveDate::from_ymd_opt(2020, 1, 8).unwrap()), Some(8));
        assert_eq!(s.date_of(15), NaiveDate::from_ymd_opt(2020, 1, 15).unwrap());
    }

    #[test]
    fn linear_interpolates_log_prices() {
        let s = DailySeries::resample(&weekly(), Resampling::Linear);
        let mid = (10f64.ln() + 20f64.ln()) / 2.0;
        assert!((s.log_price(4).unwrap() - (10f64.ln() + 3.0 / 7.0 * (20f64.ln() - 10f64.ln()))).abs() < 1e-12);
        assert!((s.log_price(8).unwrap() - 20f64.ln()).abs() < 1e-12);
        assert!(((s.log_price(1).unwrap() + s.log_price(8).unwrap()) / 2.0 - mid).abs() < 1e-12);
    }

    #[test]
    fn truncated_resampling_ignores_later_observations() {
        let until = NaiveDate::from_ymd_opt(2020, 1, 11).unwrap();
        let s = DailySeries::resample_until(&weekly(), Resampling::Linear, until);
        assert_eq!(s.len(), 11);
        // Days after the last usable observation are carried forward.
        assert_eq!(s.log_price(11), Some(20f64.ln()));
    }
}
