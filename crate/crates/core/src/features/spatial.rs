//! Cross-station features built on the distance kernel.
//!
//! The kernel is `w(d) = exp(-d / sigma)`; a Gaussian shape is available
//! behind [`KernelShape::Gaussian`]. The target station is always excluded
//! from neighbor aggregates.

use serde::{Deserialize, Serialize};

use super::temporal::{mean_std, rolling_stats};
use crate::error::FeatureError;
use crate::ingest::neighbor_order;
use crate::model::{DistanceMatrix, KernelShape, KernelWeights};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpatialConfig {
    /// Kernel scale in meters; `None` uses the median inter-station distance.
    pub sigma: Option<f64>,
    pub kernel: KernelShape,
    pub k_nearest: usize,
    pub gradient_window: usize,
    pub sync_window: usize,
    pub cross_windows: Vec<usize>,
    pub epsilon: f64,
}

impl Default for SpatialConfig {
    fn default() -> Self {
        Self {
            sigma: None,
            kernel: KernelShape::Exponential,
            k_nearest: 2,
            gradient_window: 3,
            sync_window: 6,
            cross_windows: vec![3, 7],
            epsilon: 1e-8,
        }
    }
}

impl SpatialConfig {
    pub fn validate(&self, n_stations: usize) -> Result<(), FeatureError> {
        let bad = |m: String| Err(FeatureError::Config(m));
        if n_stations < 2 {
            return bad(format!("spatial features need at least 2 stations, got {n_stations}"));
        }
        if self.k_nearest == 0 || self.k_nearest >= n_stations {
            return bad(format!(
                "k_nearest = {} must lie in 1..{n_stations}",
                self.k_nearest
            ));
        }
        if let Some(s) = self.sigma {
            if !(s > 0.0 && s.is_finite()) {
                return bad(format!("sigma must be positive, got {s}"));
            }
        }
        if self.gradient_window == 0 || self.sync_window == 0 {
            return bad("window sizes must be positive".into());
        }
        if self.cross_windows.iter().any(|&w| w < 2) {
            return bad("cross_windows must be >= 2".into());
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return bad("epsilon must be positive".into());
        }
        Ok(())
    }
}

/// Applies the distance kernel elementwise.
pub fn kernel_weights(
    distances: &DistanceMatrix,
    sigma: f64,
    shape: KernelShape,
) -> Result<KernelWeights, FeatureError> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(FeatureError::Config(format!("sigma must be positive, got {sigma}")));
    }
    let n = distances.len();
    let w = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| kernel(distances.get(i, j), sigma, shape))
        .collect();
    Ok(KernelWeights::from_parts(n, w, sigma, shape))
}

pub fn kernel(d: f64, sigma: f64, shape: KernelShape) -> f64 {
    match shape {
        KernelShape::Exponential => (-d / sigma).exp(),
        KernelShape::Gaussian => (-d * d / (2.0 * sigma * sigma)).exp(),
    }
}

/// Precomputed geometry shared by every spatial feature.
#[derive(Debug, Clone)]
pub struct SpatialContext {
    pub distances: DistanceMatrix,
    pub weights: KernelWeights,
    /// Per station, the other stations by ascending distance (ties by id).
    pub neighbors: Vec<Vec<usize>>,
}

impl SpatialContext {
    /// `distances` and `ids` must be in panel station order.
    pub fn new(
        distances: DistanceMatrix,
        ids: &[String],
        config: &SpatialConfig,
    ) -> Result<Self, FeatureError> {
        config.validate(ids.len())?;
        if distances.len() != ids.len() {
            return Err(FeatureError::Config("distance matrix does not match stations".into()));
        }
        let sigma = match config.sigma {
            Some(s) => s,
            None => distances
                .median_off_diagonal()
                .filter(|&m| m > 0.0)
                .ok_or_else(|| {
                    FeatureError::Config("median distance is zero; set sigma explicitly".into())
                })?,
        };
        let weights = kernel_weights(&distances, sigma, config.kernel)?;
        let neighbors = (0..ids.len()).map(|i| neighbor_order(&distances, ids, i)).collect();
        Ok(Self { distances, weights, neighbors })
    }

    pub fn sigma(&self) -> f64 {
        self.weights.sigma()
    }
}

/// Kernel-weighted mean of the other stations' values at one time, weights
/// renormalized over the neighbors. Falls back to the plain neighbor mean
/// when the weights vanish.
pub fn distance_weighted_average(values: &[f64], weights_row: &[f64], i: usize) -> f64 {
    let mut wsum = 0.0;
    let mut acc = 0.0;
    for (j, (&x, &w)) in values.iter().zip(weights_row).enumerate() {
        if j != i {
            wsum += w;
            acc += w * x;
        }
    }
    if wsum < 1e-12 {
        let others: Vec<f64> =
            values.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &x)| x).collect();
        return others.iter().sum::<f64>() / others.len() as f64;
    }
    acc / wsum
}

/// `(value, weight * value)` of the `k` nearest neighbors, nearest first.
pub fn nearest_station_features(
    values: &[f64],
    neighbors: &[usize],
    weights_row: &[f64],
    k: usize,
) -> Vec<(f64, f64)> {
    neighbors
        .iter()
        .take(k)
        .map(|&j| (values[j], weights_row[j] * values[j]))
        .collect()
}

/// Difference between the target's rolling mean and the nearest neighbor's,
/// and between the target's and the average neighbor rolling mean. `series`
/// holds every station's history up to `t`.
pub fn spatial_gradient(series: &[&[f64]], i: usize, nn1: usize, w: usize) -> Option<(f64, f64)> {
    let own = rolling_stats(series[i], w)?.mean;
    let near = rolling_stats(series[nn1], w)?.mean;
    let mut sum = 0.0;
    let mut count = 0usize;
    for (j, s) in series.iter().enumerate() {
        if j != i {
            sum += rolling_stats(s, w)?.mean;
            count += 1;
        }
    }
    Some((own - near, own - sum / count as f64))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Synchronicity {
    pub region_mean: f64,
    pub region_std: f64,
    pub sync_dev: f64,
}

/// Cross-sectional mean and spread at one time, and the target's z-score
/// against them.
pub fn regional_synchronicity(values: &[f64], i: usize, eps: f64) -> Synchronicity {
    let (mean, std) = mean_std(values);
    Synchronicity { region_mean: mean, region_std: std, sync_dev: (values[i] - mean) / (std + eps) }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossStationStats {
    pub xmean: f64,
    pub xstd: f64,
    pub xcorr: f64,
}

/// Rolling statistics of the all-station mean series over the trailing
/// window, plus the Pearson correlation between the target and the
/// leave-one-out mean over the same window (0 when either is constant).
pub fn cross_station_stats(series: &[&[f64]], i: usize, w: usize) -> Option<CrossStationStats> {
    let n = series[i].len();
    if n < w {
        return None;
    }
    let n_st = series.len();
    let mut regional = Vec::with_capacity(w);
    let mut loo = Vec::with_capacity(w);
    for t in n - w..n {
        let mut all = 0.0;
        let mut others = 0.0;
        for (j, s) in series.iter().enumerate() {
            all += s[t];
            if j != i {
                others += s[t];
            }
        }
        regional.push(all / n_st as f64);
        loo.push(others / (n_st - 1) as f64);
    }
    let (xmean, xstd) = mean_std(&regional);
    Some(CrossStationStats { xmean, xstd, xcorr: pearson_or_zero(&series[i][n - w..], &loo) })
}

fn is_constant(v: &[f64]) -> bool {
    v.iter().all(|&x| x == v[0])
}

/// Pearson correlation, defined as 0 when either side is constant.
pub fn pearson_or_zero(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() || is_constant(a) || is_constant(b) {
        return 0.0;
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    (sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn kernel_values() {
        let d = DistanceMatrix::from_fn(3, |i, j| if i + j == 1 { 100.0 } else { 200.0 }).unwrap();
        let w = kernel_weights(&d, 100.0, KernelShape::Exponential).unwrap();
        assert_eq!(w.get(0, 0), 1.0);
        assert_abs_diff_eq!(w.get(0, 1), 0.367879, epsilon = 1e-6);
        assert_abs_diff_eq!(w.get(0, 2), 0.135335, epsilon = 1e-6);
        assert!(kernel_weights(&d, 0.0, KernelShape::Exponential).is_err());
        let g = kernel_weights(&d, 100.0, KernelShape::Gaussian).unwrap();
        assert_abs_diff_eq!(g.get(0, 1), (-0.5f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn dwavg_examples() {
        assert_eq!(distance_weighted_average(&[9.0, 1.0, 3.0], &[1.0, 0.5, 0.5], 0), 2.0);
        assert_eq!(distance_weighted_average(&[9.0, 7.0], &[1.0, 0.2], 0), 7.0);
        let e1 = (-1.0f64).exp();
        let e2 = (-2.0f64).exp();
        let v = distance_weighted_average(&[5.0, 10.0, 0.0], &[1.0, e1, e2], 0);
        assert_abs_diff_eq!(v, 10.0 * e1 / (e1 + e2), epsilon = 1e-12);
        assert_abs_diff_eq!(v, 7.3106, epsilon = 1e-4);
        // vanishing weights fall back to plain mean
        assert_eq!(distance_weighted_average(&[5.0, 1.0, 3.0], &[1.0, 0.0, 0.0], 0), 2.0);
    }

    #[test]
    fn nearest_and_ties() {
        let ids: Vec<String> = ["A", "C", "B"].iter().map(|s| s.to_string()).collect();
        let d = DistanceMatrix::from_fn(3, |i, _| if i == 0 { 10.0 } else { 5.0 }).unwrap();
        // A is equidistant to C (index 1) and B (index 2): B wins the tie
        let order = neighbor_order(&d, &ids, 0);
        assert_eq!(order, vec![2, 1]);
        let e1 = (-1.0f64).exp();
        let feats = nearest_station_features(&[0.0, 4.0, 2.0], &order, &[1.0, e1, e1], 1);
        assert_eq!(feats[0].0, 2.0);
        assert_abs_diff_eq!(feats[0].1, 0.735759, epsilon = 1e-6);
    }

    #[test]
    fn gradients() {
        let a = [1.0, 2.0, 3.0];
        let b = [3.0, 2.0, 1.0];
        assert_eq!(spatial_gradient(&[&a, &b], 0, 1, 3), Some((0.0, 0.0)));
        let c = [5.0; 4];
        let d = [2.0; 4];
        assert_eq!(spatial_gradient(&[&c, &d], 0, 1, 2), Some((3.0, 3.0)));
    }

    #[test]
    fn synchronicity() {
        let s = regional_synchronicity(&[1.0, 2.0, 3.0], 2, 1e-8);
        assert_abs_diff_eq!(s.sync_dev, 1.2247, epsilon = 1e-4);
        assert_eq!(regional_synchronicity(&[4.0; 3], 0, 1e-8).sync_dev, 0.0);
    }

    #[test]
    fn cross_station() {
        // target [1,2,3], the other two average to [3,2,1]
        let a = [1.0, 2.0, 3.0];
        let b = [3.0, 2.0, 1.0];
        let c = [3.0, 2.0, 1.0];
        let s = cross_station_stats(&[&a, &b, &c], 0, 3).unwrap();
        assert_abs_diff_eq!(s.xcorr, -1.0, epsilon = 1e-12);
        let same = cross_station_stats(&[&a, &a, &a], 0, 3).unwrap();
        assert_abs_diff_eq!(same.xcorr, 1.0, epsilon = 1e-12);
        let flat = [2.0; 3];
        assert_eq!(cross_station_stats(&[&flat, &flat], 0, 3).unwrap().xcorr, 0.0);
    }
}
