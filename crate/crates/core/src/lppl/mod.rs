//! Log-periodic power law (LPPL) calibration and bubble indicators.
//!
//! The model for the log price is
//! `ln p(t) = A − B·(tc − t)^m·(1 + C·cos(ω·ln(tc − t) + φ))`,
//! with `B > 0` describing an accelerating rise towards the critical time `tc`.
//! Calibration profiles out the linear parameters `(A, B, C, φ)` with ordinary
//! least squares and searches the nonlinear triple `(tc, m, ω)`.
//!
//! Time is measured in days: day `t` is the `t`-th day (1-based) of a
//! [`DailySeries`].

mod ols;
mod search;
mod series;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};
use thiserror::Error;

use crate::ingest::PriceSeries;

pub use ols::{ols_linear_fit, LinearFit};
pub use search::grid_axis;
pub use series::{DailySeries, Resampling};

use search::{NelderMead, Objective};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum LpplError {
    #[error("time {t} is not before the critical time {tc}")]
    BeyondCriticalTime { t: f64, tc: f64 },
    #[error("singular design matrix (degenerate tc, m, omega)")]
    SingularDesign,
    #[error("need at least 4 observations, got {0}")]
    TooFewObservations(usize),
    #[error("{times} times but {values} values")]
    LengthMismatch { times: usize, values: usize },
    #[error("no feasible starting point for window [{t1}, {t2}]")]
    NoFeasibleStart { t1: usize, t2: usize },
    #[error("t2 = {t2} needs at least {needed} days of history")]
    SeriesTooShort { t2: usize, needed: usize },
    #[error("t2 = {t2} lies beyond the series end ({len} days)")]
    OutOfRange { t2: usize, len: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// Calibrated LPPL parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LpplParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub m: f64,
    pub omega: f64,
    pub phi: f64,
    pub tc: f64,
}

/// Evaluates the model log price at time `t < tc`.
pub fn lppl_value(params: &LpplParams, t: f64) -> Result<f64, LpplError> {
    let dt = params.tc - t;
    if !(dt > 0.0) {
        return Err(LpplError::BeyondCriticalTime { t, tc: params.tc });
    }
    let power = dt.powf(params.m);
    Ok(params.a - params.b * power * (1.0 + params.c * (params.omega * dt.ln() + params.phi).cos()))
}

/// A closed day range `[t1, t2]` (1-based day indices).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub t1: usize,
    pub t2: usize,
}

impl Window {
    pub fn len(&self) -> usize {
        (self.t2 + 1).saturating_sub(self.t1)
    }

    pub fn is_empty(&self) -> bool {
        self.t2 < self.t1
    }

    /// `t2 − t1`, the window length in days.
    pub fn span(&self) -> usize {
        self.t2.saturating_sub(self.t1)
    }
}

/// Calibration and windowing settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LpplConfig {
    /// Length of the widest window ending at `t2`, in days.
    pub initial_span: usize,
    /// Advance of `t1` between successive windows, in days.
    pub step: usize,
    /// Open qualification interval for `m`.
    pub m_bounds: (f64, f64),
    /// Open qualification interval for `ω`.
    pub omega_bounds: (f64, f64),
    /// `tc` may lie at most `min(tc_past_days, tc_window_fraction·(t2−t1))` before `t2` ...
    pub tc_past_days: f64,
    /// ... and at most `min(tc_future_days, tc_window_fraction·(t2−t1))` after it.
    pub tc_future_days: f64,
    pub tc_window_fraction: f64,
    /// Grid resolution along tc, m and ω.
    pub grid: [usize; 3],
    /// Number of best grid points polished with Nelder–Mead.
    pub polish_starts: usize,
    pub polish_iterations: usize,
    /// Minimum observations per window.
    pub min_points: usize,
    /// Largest p-value of the F-test against a constant level at which a fit may qualify.
    pub significance: f64,
    pub resampling: Resampling,
}

impl Default for LpplConfig {
    fn default() -> Self {
        LpplConfig {
            initial_span: 120,
            step: 5,
            m_bounds: (0.0, 1.0),
            omega_bounds: (2.0, 15.0),
            tc_past_days: 60.0,
            tc_future_days: 252.0,
            tc_window_fraction: 0.5,
            grid: [10, 10, 10],
            polish_starts: 5,
            polish_iterations: 300,
            min_points: 5,
            significance: 0.01,
            resampling: Resampling::ForwardFill,
        }
    }
}

impl LpplConfig {
    pub fn validate(&self) -> Result<(), LpplError> {
        let bad = |msg: &str| Err(LpplError::InvalidConfig(msg.to_string()));
        if self.step == 0 {
            return bad("step must be at least 1");
        }
        if self.initial_span < 2 {
            return bad("initial_span must be at least 2");
        }
        if !(self.m_bounds.0 < self.m_bounds.1) || !(self.omega_bounds.0 < self.omega_bounds.1) {
            return bad("parameter bounds must be increasing");
        }
        if self.grid.iter().any(|&g| g == 0) || self.polish_starts == 0 {
            return bad("grid sizes and polish_starts must be positive");
        }
        if !(self.significance > 0.0 && self.significance <= 1.0) {
            return bad("significance must lie in (0, 1]");
        }
        if self.min_points < 4 {
            return bad("min_points must be at least 4");
        }
        Ok(())
    }

    /// Admissible critical-time interval `(lo, hi]` for `window`, restricted to `tc > t2`.
    pub fn tc_bounds(&self, window: Window) -> (f64, f64) {
        let span = window.span() as f64;
        let t2 = window.t2 as f64;
        let lo = (t2 - self.tc_past_days.min(self.tc_window_fraction * span)).max(t2);
        let hi = t2 + self.tc_future_days.min(self.tc_window_fraction * span);
        (lo, hi)
    }

    /// Whether `(tc, m, ω)` satisfies every qualification bound for `window`.
    pub fn within_bounds(&self, window: Window, tc: f64, m: f64, omega: f64) -> bool {
        let (lo, hi) = self.tc_bounds(window);
        tc > lo
            && tc <= hi
            && m > self.m_bounds.0
            && m < self.m_bounds.1
            && omega > self.omega_bounds.0
            && omega < self.omega_bounds.1
    }
}

/// Free parameters of the full model: A, B, C, φ, tc, m and ω.
const MODEL_PARAMETERS: f64 = 7.0;

/// p-value of the F-test comparing a fit with residual `sse` against the
/// constant-level model on `y`. Windows with no residual degrees of freedom,
/// and series with no variation at all, get 1.
pub fn trend_p_value(y: &[f64], sse: f64) -> f64 {
    let n = y.len() as f64;
    if n <= MODEL_PARAMETERS || !sse.is_finite() {
        return 1.0;
    }
    let mean = y.iter().sum::<f64>() / n;
    let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let (df1, df2) = (MODEL_PARAMETERS - 1.0, n - MODEL_PARAMETERS);
    if !(sst > 0.0) || sse >= sst {
        return 1.0;
    }
    if sse <= 0.0 {
        return 0.0;
    }
    let f = ((sst - sse) / df1) / (sse / df2);
    FisherSnedecor::new(df1, df2).map_or(1.0, |d| d.sf(f))
}

/// Calibration result for one window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LpplFit {
    pub window: Window,
    pub params: LpplParams,
    pub sse: f64,
    pub qualifies: bool,
    pub converged: bool,
    /// F-test p-value of the fit against a constant level.
    pub p_value: f64,
}

/// Calibrates the model on `series` restricted to `window`.
///
/// A `tc × m × ω` grid spanning the qualification bounds is evaluated first;
/// the best `polish_starts` grid points are then refined by Nelder–Mead, which
/// may leave the bounds. The fit qualifies when the best refinement converged,
/// its parameters lie inside every bound and it explains significantly more
/// than a constant level does.
pub fn fit_window(series: &DailySeries, window: Window, config: &LpplConfig) -> Result<LpplFit, LpplError> {
    config.validate()?;
    if window.t1 == 0 || window.t2 > series.len() {
        return Err(LpplError::OutOfRange { t2: window.t2, len: series.len() });
    }
    let (tc_lo, tc_hi) = config.tc_bounds(window);
    if window.is_empty() || window.len() < config.min_points || !(tc_hi > tc_lo) {
        return Err(LpplError::NoFeasibleStart { t1: window.t1, t2: window.t2 });
    }
    let (times, y) = series.slice(window.t1, window.t2);
    let mut objective = Objective::new(&times, &y);

    let tcs = grid_axis(tc_lo, tc_hi, config.grid[0]);
    let ms = grid_axis(config.m_bounds.0, config.m_bounds.1, config.grid[1]);
    let omegas = grid_axis(config.omega_bounds.0, config.omega_bounds.1, config.grid[2]);

    let mut grid: Vec<([f64; 3], f64)> = Vec::with_capacity(tcs.len() * ms.len() * omegas.len());
    for &tc in &tcs {
        for &m in &ms {
            for &omega in &omegas {
                if let Some(fit) = objective.eval(tc, m, omega) {
                    grid.push(([tc, m, omega], fit.sse));
                }
            }
        }
    }
    if grid.is_empty() {
        return Err(LpplError::NoFeasibleStart { t1: window.t1, t2: window.t2 });
    }
    grid.sort_by(|a, b| a.1.total_cmp(&b.1));

    let step = [
        (tc_hi - tc_lo) / config.grid[0] as f64,
        (config.m_bounds.1 - config.m_bounds.0) / config.grid[1] as f64,
        (config.omega_bounds.1 - config.omega_bounds.0) / config.grid[2] as f64,
    ];
    let nm = NelderMead { max_iterations: config.polish_iterations, f_tol: 1e-9, x_tol: 1e-4 };
    let mut best = None;
    for &(start, _) in grid.iter().take(config.polish_starts) {
        let run = nm.minimize(&mut objective, start, step);
        if run.sse.is_finite() && best.is_none_or(|b: search::Polished| run.sse < b.sse) {
            best = Some(run);
        }
    }
    let best = best.unwrap_or(search::Polished { x: grid[0].0, sse: grid[0].1, converged: false });
    let [tc, m, omega] = best.x;
    let linear = objective.eval(tc, m, omega).ok_or(LpplError::NoFeasibleStart { t1: window.t1, t2: window.t2 })?;
    let params = LpplParams { a: linear.a, b: linear.b, c: linear.c, m, omega, phi: linear.phi, tc };
    let p_value = trend_p_value(&y, linear.sse);
    let qualifies = best.converged && p_value <= config.significance && config.within_bounds(window, tc, m, omega);
    Ok(LpplFit { window, params, sse: linear.sse, qualifies, converged: best.converged, p_value })
}

/// Windows ending at `t2` whose start advances from `t2 − initial_span + 1`
/// in increments of `step` while `t2 − t1 ≥ step`.
///
/// With the defaults (120, 5) and `t2 = 120` this is `[1,120], [5,120], …, [115,120]`.
pub fn shrinking_windows(t2: usize, initial_span: usize, step: usize) -> Result<Vec<Window>, LpplError> {
    if step == 0 || initial_span < 2 {
        return Err(LpplError::InvalidConfig("initial_span ≥ 2 and step ≥ 1 required".into()));
    }
    if t2 < initial_span {
        return Err(LpplError::SeriesTooShort { t2, needed: initial_span });
    }
    let mut windows = vec![Window { t1: t2 + 1 - initial_span, t2 }];
    let mut t1 = t2 - initial_span + step;
    while t2 - t1 >= step {
        windows.push(Window { t1, t2 });
        t1 += step;
    }
    Ok(windows)
}

/// Fraction of shrinking-window fits at `t2` that qualify, split by the sign of `B`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BubbleIndicator {
    pub t2: usize,
    pub positive: f64,
    pub negative: f64,
    pub fits_attempted: usize,
    pub fits_qualified: usize,
}

/// Fits every shrinking window ending at `t2`. Windows that cannot be fitted
/// appear as errors.
pub fn window_fits(
    series: &DailySeries,
    t2: usize,
    config: &LpplConfig,
) -> Result<Vec<Result<LpplFit, LpplError>>, LpplError> {
    config.validate()?;
    if t2 > series.len() {
        return Err(LpplError::OutOfRange { t2, len: series.len() });
    }
    let windows = shrinking_windows(t2, config.initial_span, config.step)?;
    Ok(windows.into_par_iter().map(|w| fit_window(series, w, config)).collect())
}

/// Positive/negative bubble indicator at day `t2`, using only days `≤ t2`.
/// The denominator is the number of windows attempted.
pub fn bubble_indicator(series: &DailySeries, t2: usize, config: &LpplConfig) -> Result<BubbleIndicator, LpplError> {
    let fits = window_fits(series, t2, config)?;
    let attempted = fits.len();
    let qualified: Vec<&LpplFit> = fits.iter().filter_map(|f| f.as_ref().ok()).filter(|f| f.qualifies).collect();
    let positive = qualified.iter().filter(|f| f.params.b > 0.0).count();
    let negative = qualified.iter().filter(|f| f.params.b < 0.0).count();
    Ok(BubbleIndicator {
        t2,
        positive: positive as f64 / attempted as f64,
        negative: negative as f64 / attempted as f64,
        fits_attempted: attempted,
        fits_qualified: qualified.len(),
    })
}

/// One indicator per `t2` in `t2_start..=t2_end`, in ascending order.
pub fn bubble_scan(
    series: &DailySeries,
    t2_start: usize,
    t2_end: usize,
    config: &LpplConfig,
) -> Result<Vec<BubbleIndicator>, LpplError> {
    if t2_end < t2_start {
        return Err(LpplError::InvalidConfig(format!("empty range {t2_start}..={t2_end}")));
    }
    (t2_start..=t2_end).into_par_iter().map(|t2| bubble_indicator(series, t2, config)).collect()
}

/// Bubble indicator for one calendar day of a price series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DatedIndicator {
    pub date: NaiveDate,
    pub log_price: f64,
    #[serde(flatten)]
    pub indicator: BubbleIndicator,
}

/// Scans `from..=to` over a price series. The daily series for each day is
/// rebuilt from observations dated on or before it, so no indicator can see
/// later prices whichever resampling is configured.
pub fn scan_prices(
    prices: &PriceSeries,
    from: NaiveDate,
    to: NaiveDate,
    config: &LpplConfig,
) -> Result<Vec<DatedIndicator>, LpplError> {
    config.validate()?;
    if to < from {
        return Err(LpplError::InvalidConfig(format!("empty date range {from}..={to}")));
    }
    let full = DailySeries::resample(prices, config.resampling);
    let first = full
        .index_of(from)
        .ok_or(LpplError::OutOfRange { t2: ((from - full.start()).num_days() + 1).max(0) as usize, len: full.len() })?;
    let last = full
        .index_of(to)
        .ok_or(LpplError::OutOfRange { t2: ((to - full.start()).num_days() + 1).max(0) as usize, len: full.len() })?;
    if first < config.initial_span {
        return Err(LpplError::SeriesTooShort { t2: first, needed: config.initial_span });
    }
    (first..=last)
        .into_par_iter()
        .map(|t2| {
            let date = full.date_of(t2);
            let truncated;
            let series = match config.resampling {
                Resampling::ForwardFill => &full,
                Resampling::Linear => {
                    truncated = DailySeries::resample_until(prices, config.resampling, date);
                    &truncated
                }
            };
            let indicator = bubble_indicator(series, t2, config)?;
            Ok(DatedIndicator { date, log_price: series.log_prices()[t2 - 1], indicator })
        })
        .collect()
}
