//! End-to-end steps shared by the command line front end and the tests.

use std::fs;
use std::path::Path;

use crate::assembly::{assemble, causality_audit, select_features, AuditReport, SelectionReport};
use crate::config::{default_period, RunConfig};
use crate::error::Error;
use crate::evaluation::{backtest, SavedRun};
use crate::features::spatial::SpatialContext;
use crate::features::{FeatureContext, Featurizer, LeakyCenteredMean};
use crate::forecast::recursive_forecast;
use crate::ingest::{compute_distances, impute, parse_panel, parse_stations, ImputationAudit};
use crate::model::{DistanceMatrix, FeatureTable, MetricReport, Panel, StationSet};

/// Parsed inputs of a run, before imputation.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub stations: StationSet,
    pub raw: Panel,
    pub distances: DistanceMatrix,
}

fn read(path: &Path) -> Result<String, Error> {
    fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_owned(), source })
}

/// Reads stations and panel named by a resolved configuration and checks the
/// data-dependent parts of the configuration.
pub fn load_inputs(config: &RunConfig) -> Result<Inputs, Error> {
    let frequency = config.require_frequency()?;
    let stations_path = config.require_path(&config.paths.stations, "stations")?;
    let panel_path = config.require_path(&config.paths.panel, "panel")?;
    let stations = parse_stations(&read(stations_path)?)?;
    let raw = parse_panel(&read(panel_path)?, frequency, &stations)?;
    config.ingest.validate(stations.len())?;
    config.pipeline().features.validate(stations.len())?;
    let distances = compute_distances(&stations);
    Ok(Inputs { stations, raw, distances })
}

impl Inputs {
    pub fn from_parts(stations: StationSet, raw: Panel) -> Self {
        let distances = compute_distances(&stations);
        Self { stations, raw, distances }
    }

    pub fn imputed(&self, config: &RunConfig) -> Result<(Panel, ImputationAudit), Error> {
        Ok(impute(&self.raw, &config.ingest, &self.distances)?)
    }

    pub fn spatial(&self, config: &RunConfig) -> Result<SpatialContext, Error> {
        Ok(SpatialContext::new(self.distances.clone(), self.raw.station_ids(), &config.spatial)?)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub saved: SavedRun,
    pub report: MetricReport,
    /// Selection behind the forward forecast (fitted on the whole panel).
    pub selection: SelectionReport,
    pub imputation: ImputationAudit,
}

/// Backtest per the split, then one forward forecast from the end of the
/// imputed panel.
pub fn run(config: &RunConfig, inputs: &Inputs) -> Result<RunOutput, Error> {
    let frequency = config.require_frequency()?;
    let pipeline = config.pipeline();
    let backend = config.backend.build(default_period(frequency))?;
    let bt = backtest(
        &inputs.raw,
        &inputs.distances,
        &config.ingest,
        &pipeline,
        backend.as_ref(),
        &config.split,
        config.seed,
    )?;
    let (panel, imputation) = inputs.imputed(config)?;
    let spatial = inputs.spatial(config)?;
    let horizon = config.split.resolved_horizon(frequency);
    let future = recursive_forecast(&panel, &spatial, &pipeline, backend.as_ref(), horizon, config.seed)?;
    Ok(RunOutput {
        saved: SavedRun::new(&inputs.raw, bt.runs, Some(future.forecast)),
        report: bt.report,
        selection: future.selection,
        imputation,
    })
}

/// The one-step training table over the whole imputed panel, before and
/// after selection.
pub fn feature_tables(
    config: &RunConfig,
    inputs: &Inputs,
) -> Result<(FeatureTable, FeatureTable, SelectionReport), Error> {
    let (panel, _) = inputs.imputed(config)?;
    let spatial = inputs.spatial(config)?;
    let featurizer = Featurizer::new(&config.pipeline().features, panel.frequency(), panel.n_stations())?;
    let ctx = FeatureContext::new(&panel, &spatial)?;
    let table = assemble(&ctx, &featurizer, 1)?;
    let (selected, report) = select_features(&table, &config.selection)?;
    Ok((table, selected, report))
}

/// Causality audit of the configured feature set; `inject_leak` adds a
/// centered-window feature that reads the future.
pub fn audit(config: &RunConfig, inputs: &Inputs, probes: usize, inject_leak: bool) -> Result<AuditReport, Error> {
    let (panel, _) = inputs.imputed(config)?;
    let spatial = inputs.spatial(config)?;
    let mut featurizer = Featurizer::new(&config.pipeline().features, panel.frequency(), panel.n_stations())?;
    if inject_leak {
        featurizer = featurizer.with_family(Box::new(LeakyCenteredMean { window: 5 }))?;
    }
    Ok(causality_audit(&featurizer, &panel, &spatial, probes, config.seed)?)
}
