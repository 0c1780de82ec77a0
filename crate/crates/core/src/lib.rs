//! Forecasting toolkit for small multi-station geoscience panels.
//!
//! The pipeline has three stages:
//!
//! 1. **Ingest**: parse stations and a wide panel CSV, align to a uniform
//!    grid, impute gaps ([`ingest`]).
//! 2. **Featurize**: turn temporal, regime-change and spatial structure into
//!    a tabular [`FeatureTable`] and prune it by correlation ([`features`],
//!    [`assembly`]).
//! 3. **Forecast and evaluate**: fit a tabular regression backend, roll it
//!    forward recursively across all stations, and score the result with
//!    MSE / RMSE / MAE / MAPE / KGE ([`forecast`], [`evaluation`]).

pub mod assembly;
pub mod config;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod forecast;
pub mod ingest;
pub mod model;
pub mod synthetic;
pub mod workflow;

pub use error::{Error, ErrorKind};
pub use model::{
    config_digest, CoordMode, DistanceMatrix, FeatureTable, ForecastSet, Frequency, KernelShape,
    KernelWeights, MetricReport, Metrics, Panel, RowKey, Station, StationSet,
};
