//! Per-station temporal features.
//!
//! Every function takes `history`, the series up to and including the
//! current index `t` (so `history.len() == t + 1`), and returns the feature
//! value at `t`, or `None` while the feature is still warming up. Windows are
//! trailing and inclusive of `t`; standard deviations are population (÷n).

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::error::FeatureError;
use crate::model::Frequency;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TemporalFeatureConfig {
    /// Lag offsets; `None` uses the frequency default.
    pub lags: Option<Vec<usize>>,
    /// Rolling window sizes; `None` uses the frequency default.
    pub windows: Option<Vec<usize>>,
    pub epsilon: f64,
    pub trend_degree: u8,
    pub peak_percentile: f64,
    /// Seasonal periods in grid steps; `None` uses the frequency default.
    pub seasonal_periods: Option<Vec<f64>>,
}

impl Default for TemporalFeatureConfig {
    fn default() -> Self {
        Self {
            lags: None,
            windows: None,
            epsilon: 1e-8,
            trend_degree: 1,
            peak_percentile: 70.0,
            seasonal_periods: None,
        }
    }
}

impl TemporalFeatureConfig {
    /// Fills frequency-dependent defaults.
    pub fn resolved(&self, frequency: Frequency) -> Self {
        Self {
            lags: Some(self.lags.clone().unwrap_or_else(|| frequency.default_lags())),
            windows: Some(self.windows.clone().unwrap_or_else(|| frequency.default_windows())),
            seasonal_periods: Some(
                self.seasonal_periods
                    .clone()
                    .unwrap_or_else(|| frequency.default_seasonal_periods()),
            ),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), FeatureError> {
        let bad = |m: &str| Err(FeatureError::Config(m.to_owned()));
        if self.lags.iter().flatten().any(|&k| k == 0) {
            return bad("lags must be >= 1");
        }
        if self.windows.iter().flatten().any(|&w| w < 2) {
            return bad("windows must be >= 2");
        }
        if self.seasonal_periods.iter().flatten().any(|&p| !(p > 0.0 && p.is_finite())) {
            return bad("seasonal periods must be positive");
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return bad("epsilon must be positive");
        }
        if !(1..=2).contains(&self.trend_degree) {
            return bad("trend_degree must be 1 or 2");
        }
        if !(self.peak_percentile > 0.0 && self.peak_percentile < 100.0) {
            return bad("peak_percentile must lie in (0, 100)");
        }
        Ok(())
    }
}

fn window(history: &[f64], w: usize) -> Option<&[f64]> {
    (w >= 1 && history.len() >= w).then(|| &history[history.len() - w..])
}

/// Mean and population standard deviation, two-pass.
pub(crate) fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub(crate) fn population_variance(values: &[f64]) -> f64 {
    let (_, std) = mean_std(values);
    std * std
}

/// `x_{t-k}`.
pub fn lag(history: &[f64], k: usize) -> Option<f64> {
    let t = history.len().checked_sub(1)?;
    (k <= t).then(|| history[t - k])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RollingStats {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

pub fn rolling_stats(history: &[f64], w: usize) -> Option<RollingStats> {
    let win = window(history, w)?;
    let (mean, std) = mean_std(win);
    let min = win.iter().copied().fold(f64::INFINITY, f64::min);
    let max = win.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Some(RollingStats { mean, std, min, max })
}

/// First and second differences at `t`.
pub fn diffs(history: &[f64]) -> (Option<f64>, Option<f64>) {
    let n = history.len();
    let d1 = |t: usize| history[t] - history[t - 1];
    let first = (n >= 2).then(|| d1(n - 1));
    let second = (n >= 3).then(|| d1(n - 1) - d1(n - 2));
    (first, second)
}

/// Windowed coefficient of variation `sigma / (mu + eps)`.
pub fn coeff_variation(history: &[f64], w: usize, eps: f64) -> Option<f64> {
    let (mean, std) = mean_std(window(history, w)?);
    Some(std / (mean + eps))
}

/// Percentile by linear interpolation between order statistics at zero-based
/// position `p * (n - 1) / 100`. `sorted` must be ascending.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64 / 100.0;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn sorted_copy(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Interquartile range of the trailing window.
pub fn iqr(history: &[f64], w: usize) -> Option<f64> {
    let sorted = sorted_copy(window(history, w)?);
    Some(percentile(&sorted, 75.0) - percentile(&sorted, 25.0))
}

/// Windowed sum and the share of the current value in it.
pub fn cumulative(history: &[f64], w: usize, eps: f64) -> Option<(f64, f64)> {
    let sum = window(history, w)?.iter().sum::<f64>();
    let x = *history.last()?;
    Some((sum, x / (sum + eps)))
}

/// `(sin(2 pi t / P), cos(2 pi t / P))` for grid index `t`.
pub fn seasonal_encoding(t: usize, period: f64) -> (f64, f64) {
    let angle = std::f64::consts::TAU * t as f64 / period;
    angle.sin_cos()
}

/// Least-squares polynomial fit of the trailing window against local index
/// `0..w`. Returns the leading coefficient and the fitted value at the last
/// position.
///
/// The fit uses the centered index `u = i - (w - 1) / 2` with the basis
/// `1, u, u^2 - mean(u^2)`, which is orthogonal on the symmetric grid, so the
/// coefficients are plain projections.
pub fn trend(history: &[f64], w: usize, degree: u8) -> Option<(f64, f64)> {
    if w < degree as usize + 2 {
        return None;
    }
    let win = window(history, w)?;
    let center = (w - 1) as f64 / 2.0;
    let u: Vec<f64> = (0..w).map(|i| i as f64 - center).collect();
    let mean = win.iter().sum::<f64>() / w as f64;
    let suu: f64 = u.iter().map(|v| v * v).sum();
    let slope = u.iter().zip(win).map(|(a, x)| a * x).sum::<f64>() / suu;
    let u_last = u[w - 1];
    match degree {
        1 => Some((slope, mean + slope * u_last)),
        _ => {
            let m2 = suu / w as f64;
            let p: Vec<f64> = u.iter().map(|v| v * v - m2).collect();
            let spp: f64 = p.iter().map(|v| v * v).sum();
            let curv = p.iter().zip(win).map(|(a, x)| a * x).sum::<f64>() / spp;
            Some((curv, mean + slope * u_last + curv * p[w - 1]))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CyclicStats {
    pub mean: f64,
    pub std: f64,
    pub anomaly: f64,
}

/// Expanding statistics over prior occurrences of the current cyclic unit
/// (hour-of-day, day-of-week or month-of-year). With fewer than two prior
/// occurrences the mean is the current value and the anomaly is zero.
pub fn cyclic_group_stats(history: &[f64], frequency: Frequency, eps: f64) -> Option<CyclicStats> {
    let t = history.len().checked_sub(1)?;
    let x = history[t];
    let cycle = frequency.cycle_len();
    let prior: Vec<f64> = (1..=t / cycle).map(|k| history[t - k * cycle]).collect();
    if prior.len() < 2 {
        return Some(CyclicStats { mean: x, std: 0.0, anomaly: 0.0 });
    }
    let (mean, std) = mean_std(&prior);
    Some(CyclicStats { mean, std, anomaly: (x - mean) / (std + eps) })
}

/// Calendar unit used to group rows for [`cyclic_group_stats`].
pub fn cyclic_unit(ts: NaiveDateTime, frequency: Frequency) -> u32 {
    use chrono::{Datelike, Timelike};
    match frequency {
        Frequency::Hourly => ts.hour(),
        Frequency::Daily => ts.weekday().num_days_from_monday(),
        Frequency::Monthly => ts.month0(),
    }
}

/// Whether index `j` of `series` is a peak: strictly above its left
/// neighbor, not below its right neighbor, and above the `q`-th percentile
/// of the trailing window of size `w` ending at `j` (shorter near the start).
pub fn is_peak_at(series: &[f64], j: usize, w: usize, q: f64) -> bool {
    if j == 0 || j + 1 >= series.len() {
        return false;
    }
    let x = series[j];
    if !(series[j - 1] < x && x >= series[j + 1]) {
        return false;
    }
    let start = (j + 1).saturating_sub(w);
    let sorted = sorted_copy(&series[start..=j]);
    x > percentile(&sorted, q)
}

/// `(is_peak, steps_since_peak)` at `t`. A peak needs its right neighbor, so
/// the newest decidable candidate is `t - 1`. The distance to the latest
/// peak is capped at `w`, which is also the value when no peak is in reach.
pub fn peak_features(history: &[f64], w: usize, q: f64) -> Option<(f64, f64)> {
    let t = history.len().checked_sub(1)?;
    if t < 2 {
        return None;
    }
    let flag = if is_peak_at(history, t - 1, w, q) { 1.0 } else { 0.0 };
    let since = (1..=w.min(t))
        .find(|&d| is_peak_at(history, t - d, w, q))
        .unwrap_or(w);
    Some((flag, since as f64))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowDynamics {
    pub zscore: f64,
    pub trend_dir: f64,
    pub relpos: f64,
}

/// Mean-reversion z-score, direction of the rolling mean, and position of the
/// current value between the window's extremes.
pub fn window_dynamics(history: &[f64], w: usize, eps: f64) -> Option<WindowDynamics> {
    let now = rolling_stats(history, w)?;
    let x = *history.last()?;
    let trend_dir = match rolling_stats(&history[..history.len() - 1], w) {
        Some(prev) if now.mean > prev.mean => 1.0,
        Some(prev) if now.mean < prev.mean => -1.0,
        _ => 0.0,
    };
    Some(WindowDynamics {
        zscore: (x - now.mean) / (now.std + eps),
        trend_dir,
        relpos: (x - now.min) / (now.max - now.min + eps),
    })
}
