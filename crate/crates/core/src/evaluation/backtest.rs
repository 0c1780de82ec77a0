//! Tail-holdout and rolling-origin backtests.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{average, score};
use crate::assembly::SelectionReport;
use crate::error::{Error, EvalError};
use crate::features::spatial::SpatialContext;
use crate::forecast::{recursive_forecast, Backend, PipelineConfig, MIN_TRAINING_ROWS};
use crate::ingest::{impute, IngestConfig};
use crate::model::{DistanceMatrix, ForecastSet, Frequency, MetricReport, Metrics, OriginMetrics, Panel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    #[default]
    TailHoldout,
    RollingOrigin,
}

/// Where forecasts start and how far they reach.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub mode: SplitMode,
    /// Steps per forecast; `None` means one seasonal cycle of the frequency.
    pub horizon: Option<usize>,
    /// Largest share of the panel that may be held out for testing.
    pub holdout_fraction: f64,
    pub n_origins: usize,
    /// Steps between successive origins; `None` means the horizon.
    pub origin_stride: Option<usize>,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            mode: SplitMode::TailHoldout,
            horizon: None,
            holdout_fraction: 0.2,
            n_origins: 3,
            origin_stride: None,
        }
    }
}

impl SplitSpec {
    pub fn resolved_horizon(&self, frequency: Frequency) -> usize {
        self.horizon.unwrap_or_else(|| frequency.cycle_len())
    }

    /// Fills defaulted fields so the resolved configuration is explicit.
    pub fn resolved(&self, frequency: Frequency) -> Self {
        let horizon = self.resolved_horizon(frequency);
        Self {
            horizon: Some(horizon),
            origin_stride: Some(self.origin_stride.unwrap_or(horizon)),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |m: String| Err(EvalError::InfeasibleSplit(m));
        if self.horizon == Some(0) {
            return bad("horizon must be >= 1".into());
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction <= 0.5) {
            return bad(format!("holdout_fraction must lie in (0, 0.5], got {}", self.holdout_fraction));
        }
        if self.n_origins == 0 {
            return bad("n_origins must be >= 1".into());
        }
        if self.origin_stride == Some(0) {
            return bad("origin_stride must be >= 1".into());
        }
        Ok(())
    }

    /// Forecast origins (index of the first forecast step) for a panel of
    /// `n_times` steps, earliest first.
    pub fn origins(&self, n_times: usize, frequency: Frequency) -> Result<Vec<usize>, EvalError> {
        self.validate()?;
        let h = self.resolved_horizon(frequency);
        let (count, stride) = match self.mode {
            SplitMode::TailHoldout => (1, h),
            SplitMode::RollingOrigin => (self.n_origins, self.origin_stride.unwrap_or(h)),
        };
        let span = h + (count - 1) * stride;
        let by_fraction = (self.holdout_fraction * n_times as f64).floor() as usize;
        let allowed = by_fraction.min(n_times.saturating_sub(MIN_TRAINING_ROWS + 1));
        if span > allowed {
            return Err(EvalError::InfeasibleSplit(format!(
                "testing {span} steps needs more than the {allowed} steps that may be held out of {n_times}"
            )));
        }
        let first = n_times - span;
        Ok((0..count).map(|k| first + k * stride).collect())
    }
}

/// One forecast origin: the forecast, the raw truth it is scored against,
/// and the feature selection fitted on data before the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OriginRun {
    pub origin: usize,
    pub forecast: ForecastSet,
    /// Raw observations per station over the forecast window; `None` where
    /// the panel had a gap.
    pub observed: Vec<Vec<Option<f64>>>,
    pub selection: SelectionReport,
}

#[derive(Debug, Clone)]
pub struct BacktestOutcome {
    pub report: MetricReport,
    pub runs: Vec<OriginRun>,
}

/// Runs the pipeline at every origin of `split`. Each origin sees only the
/// raw panel before it: imputation, features, selection and fitting all
/// happen on the truncated panel.
pub fn backtest(
    panel: &Panel,
    distances: &DistanceMatrix,
    ingest: &IngestConfig,
    pipeline: &PipelineConfig,
    backend: &dyn Backend,
    split: &SplitSpec,
    seed: u64,
) -> Result<BacktestOutcome, Error> {
    let origins = split.origins(panel.n_times(), panel.frequency())?;
    let horizon = split.resolved_horizon(panel.frequency());
    let spatial = SpatialContext::new(distances.clone(), panel.station_ids(), &pipeline.features.spatial)?;

    let runs = origins
        .par_iter()
        .map(|&origin| -> Result<OriginRun, Error> {
            let (history, _) = impute(&panel.truncate(origin), ingest, distances)?;
            let outcome = recursive_forecast(&history, &spatial, pipeline, backend, horizon, seed)?;
            let observed = (0..panel.n_stations())
                .map(|s| (origin..origin + horizon).map(|t| panel.value(t, s)).collect())
                .collect();
            Ok(OriginRun { origin, forecast: outcome.forecast, observed, selection: outcome.selection })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let report = score_runs(&runs)?;
    Ok(BacktestOutcome { report, runs })
}

fn score_origin(run: &OriginRun) -> Result<OriginMetrics, EvalError> {
    let mut stations = std::collections::BTreeMap::new();
    let (mut all_y, mut all_p) = (Vec::new(), Vec::new());
    for (s, id) in run.forecast.station_ids.iter().enumerate() {
        let (y, p): (Vec<f64>, Vec<f64>) = run.observed[s]
            .iter()
            .zip(&run.forecast.predictions[s])
            .filter_map(|(o, p)| o.map(|o| (o, *p)))
            .unzip();
        if y.is_empty() {
            return Err(EvalError::InfeasibleSplit(format!(
                "station {id} has no observations in the window starting at step {}",
                run.origin
            )));
        }
        stations.insert(id.clone(), score(&y, &p)?);
        all_y.extend(y);
        all_p.extend(p);
    }
    Ok(OriginMetrics { origin: run.origin, stations, pooled: score(&all_y, &all_p)? })
}

/// Scores each origin; with several origins, the headline numbers are the
/// unweighted means and the per-origin detail is kept.
pub fn score_runs(runs: &[OriginRun]) -> Result<MetricReport, EvalError> {
    let mut per_origin = runs.iter().map(score_origin).collect::<Result<Vec<_>, _>>()?;
    if per_origin.len() == 1 {
        let only = per_origin.pop().expect("one origin");
        return Ok(MetricReport { stations: only.stations, pooled: only.pooled, origins: Vec::new() });
    }
    let Some(first) = per_origin.first() else {
        return Err(EvalError::InfeasibleSplit("no forecast origins".into()));
    };
    let stations = first
        .stations
        .keys()
        .map(|id| {
            let items: Vec<Metrics> = per_origin.iter().map(|o| o.stations[id].clone()).collect();
            (id.clone(), average(&items))
        })
        .collect();
    let pooled_items: Vec<Metrics> = per_origin.iter().map(|o| o.pooled.clone()).collect();
    Ok(MetricReport { stations, pooled: average(&pooled_items), origins: per_origin })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tail_origin_is_last_horizon() {
        let split = SplitSpec { horizon: Some(24), ..Default::default() };
        assert_eq!(split.origins(500, Frequency::Monthly).unwrap(), vec![476]);
    }

    #[test]
    fn rolling_origins_step_back_by_stride() {
        let split = SplitSpec {
            mode: SplitMode::RollingOrigin,
            horizon: Some(10),
            n_origins: 3,
            origin_stride: Some(5),
            ..Default::default()
        };
        assert_eq!(split.origins(200, Frequency::Daily).unwrap(), vec![180, 185, 190]);
    }

    #[test]
    fn infeasible_when_holdout_too_large() {
        let split = SplitSpec { horizon: Some(30), ..Default::default() };
        assert!(matches!(split.origins(100, Frequency::Daily), Err(EvalError::InfeasibleSplit(_))));
        let split = SplitSpec { horizon: Some(5), holdout_fraction: 0.5, ..Default::default() };
        // 40 steps: 20 by fraction but only 9 leave 31 training steps
        assert!(split.origins(40, Frequency::Daily).is_ok());
        assert!(split.origins(35, Frequency::Daily).is_err());
    }

    #[test]
    fn default_horizon_is_one_cycle() {
        let r = SplitSpec::default().resolved(Frequency::Hourly);
        assert_eq!((r.horizon, r.origin_stride), (Some(24), Some(24)));
    }
}
