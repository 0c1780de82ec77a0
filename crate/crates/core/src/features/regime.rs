//! Regime-change features: short/long variance ratio and causal three-stage
//! statistics.

use serde::{Deserialize, Serialize};

use super::temporal::population_variance;
use crate::error::FeatureError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegimeConfig {
    pub short_window: usize,
    pub long_window: usize,
    pub epsilon: f64,
}

impl Default for RegimeConfig {
    fn default() -> Self {
        Self { short_window: 5, long_window: 20, epsilon: 1e-8 }
    }
}

impl RegimeConfig {
    pub fn validate(&self) -> Result<(), FeatureError> {
        if self.short_window == 0 || self.short_window >= self.long_window {
            return Err(FeatureError::Config(format!(
                "need 0 < short_window < long_window, got {} and {}",
                self.short_window, self.long_window
            )));
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(FeatureError::Config("epsilon must be positive".into()));
        }
        Ok(())
    }
}

/// `Var(last s) / (Var(last l) + eps)` with population variances.
pub fn variance_ratio(history: &[f64], s: usize, l: usize, eps: f64) -> Option<f64> {
    let n = history.len();
    if n < l || s == 0 {
        return None;
    }
    let short = population_variance(&history[n - s..]);
    let long = population_variance(&history[n - l..]);
    Some(short / (long + eps))
}

/// Splits `n` points into three contiguous stages whose lengths differ by at
/// most one, earlier stages taking the remainder.
pub fn stage_lengths(n: usize) -> [usize; 3] {
    let base = n / 3;
    let extra = n % 3;
    [0, 1, 2].map(|k| base + usize::from(k < extra))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageStats {
    pub means: [f64; 3],
    pub change_12: f64,
    pub change_23: f64,
    /// Stage of the current index; always 3 since it is the last point.
    pub stage_id: f64,
}

/// Stage statistics over the whole history `[0..=t]`, defined from `t >= 5`.
pub fn stage_stats(history: &[f64], eps: f64) -> Option<StageStats> {
    if history.len() < 6 {
        return None;
    }
    let lens = stage_lengths(history.len());
    let mut means = [0.0; 3];
    let mut start = 0;
    for (k, len) in lens.iter().enumerate() {
        let seg = &history[start..start + len];
        means[k] = seg.iter().sum::<f64>() / *len as f64;
        start += len;
    }
    let rate = |a: f64, b: f64| (b - a) / (a.abs() + eps);
    Some(StageStats {
        means,
        change_12: rate(means[0], means[1]),
        change_23: rate(means[1], means[2]),
        stage_id: 3.0,
    })
}
