//! Regression backends and the recursive multi-station forecast driver.

pub mod bridge;
pub mod knn;
pub mod naive;
pub mod ridge;

use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assembly::{assemble, frontier_rows, select_features, SelectionConfig, SelectionReport};
use crate::error::ForecastError;
use crate::features::spatial::SpatialContext;
use crate::features::{FeatureConfig, FeatureContext, Featurizer};
use crate::model::{digest_of, FeatureTable, ForecastSet, Panel};

pub use bridge::ExternalBackend;
pub use knn::{KnnBackend, KnnWeighting};
pub use naive::{NaiveBackend, SeasonalNaiveBackend};
pub use ridge::{RidgeBackend, RidgeModel};

/// Environment variable that replaces the external backend command.
pub const BRIDGE_CMD_ENV: &str = "GEOPANEL_BRIDGE_CMD";

/// Minimum number of training rows the driver accepts.
pub const MIN_TRAINING_ROWS: usize = 30;

/// A tabular regression backend.
pub trait Backend: Send + Sync {
    fn id(&self) -> &str;

    /// Parameters recorded in forecast provenance.
    fn params(&self) -> serde_json::Value;

    fn fit(&self, train: &FeatureTable, seed: u64) -> Result<Box<dyn FitState>, ForecastError>;
}

/// Learned state of a backend.
pub trait FitState: Send + Sync {
    /// Feature names, in order, the state was trained on.
    fn schema(&self) -> &[String];

    /// Raw predictions; callers go through [`predict`], which checks the
    /// schema and the output.
    fn predict_rows(&self, rows: &FeatureTable) -> Result<Vec<f64>, ForecastError>;
}

/// Schema-checked prediction: one finite value per row.
pub fn predict(state: &dyn FitState, rows: &FeatureTable) -> Result<Vec<f64>, ForecastError> {
    check_schema(state.schema(), rows.schema())?;
    let out = state.predict_rows(rows)?;
    if out.len() != rows.n_rows() {
        return Err(ForecastError::Backend(format!(
            "backend returned {} predictions for {} rows",
            out.len(),
            rows.n_rows()
        )));
    }
    if let Some(v) = out.iter().find(|v| !v.is_finite()) {
        return Err(ForecastError::Backend(format!("backend produced non-finite prediction {v}")));
    }
    Ok(out)
}

fn check_schema(expected: &[String], got: &[String]) -> Result<(), ForecastError> {
    if expected == got {
        return Ok(());
    }
    let missing: Vec<String> = expected.iter().filter(|n| !got.contains(n)).cloned().collect();
    let unexpected: Vec<String> = got.iter().filter(|n| !expected.contains(n)).cloned().collect();
    let reordered = missing.is_empty() && unexpected.is_empty();
    Err(ForecastError::SchemaMismatch { missing, unexpected, reordered })
}

pub(crate) fn training_target(train: &FeatureTable) -> Result<&[f64], ForecastError> {
    if train.is_empty() {
        return Err(ForecastError::Training("training table is empty".into()));
    }
    train
        .target()
        .ok_or_else(|| ForecastError::Training("training table has no target".into()))
}

/// Per-feature z-scoring computed on training rows. Constant features get
/// scale 1.
#[derive(Debug, Clone)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(train: &FeatureTable) -> Self {
        let p = train.schema().len();
        let n = train.n_rows() as f64;
        let mut mean = vec![0.0; p];
        for row in train.rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; p];
        for row in train.rows() {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 0.0 && sd.is_finite() {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn transform(&self, c: usize, x: f64) -> f64 {
        (x - self.mean[c]) / self.scale[c]
    }

    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter().enumerate().map(|(c, x)| self.transform(c, *x)).collect()
    }
}

fn default_lambda() -> f64 {
    1.0
}

fn default_k() -> usize {
    5
}

fn default_timeout() -> u64 {
    120
}

/// Serializable backend choice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "snake_case")]
pub enum BackendSpec {
    Ridge {
        #[serde(default = "default_lambda")]
        lambda: f64,
    },
    Knn {
        #[serde(default = "default_k")]
        k: usize,
        #[serde(default)]
        weighting: KnnWeighting,
    },
    Naive,
    SeasonalNaive {
        /// `None` uses the first seasonal period of the panel frequency.
        #[serde(default)]
        period: Option<usize>,
    },
    External {
        #[serde(default)]
        command: String,
        #[serde(default = "default_timeout")]
        timeout_secs: u64,
    },
}

impl Default for BackendSpec {
    fn default() -> Self {
        BackendSpec::Ridge { lambda: default_lambda() }
    }
}

impl BackendSpec {
    /// Parses a bare backend id, using default parameters.
    pub fn from_id(id: &str) -> Result<Self, ForecastError> {
        serde_json::from_value(serde_json::json!({ "id": id }))
            .map_err(|_| ForecastError::Config(format!("unknown backend {id:?}")))
    }

    pub fn id(&self) -> &'static str {
        match self {
            BackendSpec::Ridge { .. } => "ridge",
            BackendSpec::Knn { .. } => "knn",
            BackendSpec::Naive => "naive",
            BackendSpec::SeasonalNaive { .. } => "seasonal_naive",
            BackendSpec::External { .. } => "external",
        }
    }

    pub fn validate(&self) -> Result<(), ForecastError> {
        let bad = |m: String| Err(ForecastError::Config(m));
        match self {
            BackendSpec::Ridge { lambda } if !(*lambda >= 0.0 && lambda.is_finite()) => {
                bad(format!("ridge lambda must be >= 0, got {lambda}"))
            }
            BackendSpec::Knn { k: 0, .. } => bad("knn k must be positive".into()),
            BackendSpec::SeasonalNaive { period: Some(0) } => bad("period must be positive".into()),
            BackendSpec::External { command, .. } if command.split_whitespace().next().is_none() => {
                bad(format!("external backend needs a command (or set {BRIDGE_CMD_ENV})"))
            }
            BackendSpec::External { timeout_secs: 0, .. } => bad("timeout must be positive".into()),
            _ => Ok(()),
        }
    }

    /// Instantiates the backend; `default_period` feeds seasonal-naive when
    /// no period is configured.
    pub fn build(&self, default_period: usize) -> Result<Box<dyn Backend>, ForecastError> {
        self.validate()?;
        Ok(match self {
            BackendSpec::Ridge { lambda } => Box::new(RidgeBackend { lambda: *lambda }),
            BackendSpec::Knn { k, weighting } => Box::new(KnnBackend { k: *k, weighting: *weighting }),
            BackendSpec::Naive => Box::new(NaiveBackend),
            BackendSpec::SeasonalNaive { period } => {
                Box::new(SeasonalNaiveBackend { period: period.unwrap_or(default_period) })
            }
            BackendSpec::External { command, timeout_secs } => Box::new(ExternalBackend {
                command: command.split_whitespace().map(str::to_owned).collect(),
                timeout: Duration::from_secs(*timeout_secs),
            }),
        })
    }
}

/// Everything between an imputed panel and a backend.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    #[serde(flatten)]
    pub features: FeatureConfig,
    pub selection: SelectionConfig,
    /// Fit one model per station instead of one pooled model.
    pub per_station: bool,
}

/// Forecasts plus the selection that shaped the model inputs.
#[derive(Debug, Clone)]
pub struct ForecastOutcome {
    pub forecast: ForecastSet,
    pub selection: SelectionReport,
}

enum Fitted {
    Pooled(Box<dyn FitState>),
    /// Station id → model, sorted by id.
    PerStation(Vec<(String, Box<dyn FitState>)>),
}

impl Fitted {
    fn predict(&self, rows: &FeatureTable) -> Result<Vec<f64>, ForecastError> {
        match self {
            Fitted::Pooled(m) => predict(m.as_ref(), rows),
            Fitted::PerStation(models) => (0..rows.n_rows())
                .into_par_iter()
                .map(|r| {
                    let station = &rows.keys()[r].station;
                    let (_, model) = models
                        .iter()
                        .find(|(id, _)| id == station)
                        .ok_or_else(|| ForecastError::Backend(format!("no model for station {station}")))?;
                    Ok(predict(model.as_ref(), &rows.select_rows(&[r]))?[0])
                })
                .collect(),
        }
    }
}

/// Fits once on the history, then rolls all stations forward one step at a
/// time: each step's features are computed from the history extended with
/// the predictions of earlier steps. The input panel must be fully observed
/// and is left untouched.
pub fn recursive_forecast(
    panel: &Panel,
    spatial: &SpatialContext,
    pipeline: &PipelineConfig,
    backend: &dyn Backend,
    horizon: usize,
    seed: u64,
) -> Result<ForecastOutcome, ForecastError> {
    if horizon == 0 {
        return Err(ForecastError::Config("horizon must be >= 1".into()));
    }
    let featurizer = Featurizer::new(&pipeline.features, panel.frequency(), panel.n_stations())?;
    let ctx = FeatureContext::new(panel, spatial)?;
    let table = assemble(&ctx, &featurizer, 1)?;
    if table.n_rows() < MIN_TRAINING_ROWS {
        return Err(ForecastError::Training(format!(
            "{} training rows after warm-up; at least {MIN_TRAINING_ROWS} needed",
            table.n_rows()
        )));
    }
    let (selected, selection) = select_features(&table, &pipeline.selection)?;

    let fitted = if pipeline.per_station {
        let mut stations: Vec<String> = panel.station_ids().to_vec();
        stations.sort();
        let models = stations
            .into_iter()
            .map(|id| {
                let rows: Vec<usize> =
                    (0..selected.n_rows()).filter(|&r| selected.keys()[r].station == id).collect();
                backend.fit(&selected.select_rows(&rows), seed).map(|m| (id, m))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Fitted::PerStation(models)
    } else {
        Fitted::Pooled(backend.fit(&selected, seed)?)
    };

    let mut extended = panel.clone();
    let mut steps: Vec<Vec<f64>> = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let step = (|| -> Result<Vec<f64>, ForecastError> {
            let ctx = FeatureContext::new(&extended, spatial)?;
            let t = extended.n_times() - 1;
            let rows = frontier_rows(&ctx, &featurizer, t, 1)?.project(&selection.kept)?;
            let pred = fitted.predict(&rows)?;
            // rows come in station-id order; map back to panel order
            let mut row = vec![0.0; extended.n_stations()];
            for (key, p) in rows.keys().iter().zip(pred) {
                let s = extended
                    .station_ids()
                    .iter()
                    .position(|id| *id == key.station)
                    .expect("frontier rows cover panel stations");
                row[s] = p;
            }
            Ok(row)
        })();
        let row = match step {
            Ok(row) => row,
            Err(e) if steps.is_empty() => return Err(e),
            Err(e) => return Err(ForecastError::MidHorizon { completed: steps, source: Box::new(e) }),
        };
        extended = extended.extended(&row)?;
        steps.push(row);
    }

    let n_st = panel.n_stations();
    let timestamps = extended.timestamps()[panel.n_times()..].to_vec();
    let predictions = (0..n_st).map(|s| steps.iter().map(|r| r[s]).collect()).collect();
    let digest = digest_of(&serde_json::json!({
        "pipeline": pipeline,
        "backend": { "id": backend.id(), "params": backend.params() },
        "seed": seed,
    }));
    Ok(ForecastOutcome {
        forecast: ForecastSet {
            station_ids: panel.station_ids().to_vec(),
            timestamps,
            predictions,
            horizon,
            backend_id: backend.id().to_owned(),
            config_digest: digest,
        },
        selection,
    })
}
