//! Run configuration: a JSON file in which every field is optional, command
//! line overrides on top, and a fully resolved snapshot with a digest.
//!
//! Precedence is flag, then file, then built-in default.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::assembly::SelectionConfig;
use crate::error::Error;
use crate::evaluation::SplitSpec;
use crate::features::regime::RegimeConfig;
use crate::features::spatial::SpatialConfig;
use crate::features::temporal::TemporalFeatureConfig;
use crate::features::FeatureConfig;
use crate::forecast::{BackendSpec, PipelineConfig};
use crate::ingest::IngestConfig;
use crate::model::{digest_of, Frequency};

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub stations: Option<PathBuf>,
    pub panel: Option<PathBuf>,
    pub outdir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    pub frequency: Option<Frequency>,
    pub ingest: IngestConfig,
    pub temporal: TemporalFeatureConfig,
    pub regime: RegimeConfig,
    pub spatial: SpatialConfig,
    pub selection: SelectionConfig,
    pub backend: BackendSpec,
    pub split: SplitSpec,
    pub seed: u64,
    /// Fit one model per station instead of one pooled model.
    pub per_station: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            paths: Paths::default(),
            frequency: None,
            ingest: IngestConfig::default(),
            temporal: TemporalFeatureConfig::default(),
            regime: RegimeConfig::default(),
            spatial: SpatialConfig::default(),
            selection: SelectionConfig::default(),
            backend: BackendSpec::default(),
            split: SplitSpec::default(),
            seed: DEFAULT_SEED,
            per_station: false,
        }
    }
}

/// Values given on the command line; `None` leaves the file's value alone.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub stations: Option<PathBuf>,
    pub panel: Option<PathBuf>,
    pub outdir: Option<PathBuf>,
    pub frequency: Option<Frequency>,
    pub backend: Option<String>,
    pub horizon: Option<usize>,
    pub seed: Option<u64>,
    pub per_station: bool,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, Error> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))
    }

    pub fn from_file(path: &Path) -> Result<Self, Error> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<(), Error> {
        if let Some(p) = &o.stations {
            self.paths.stations = Some(p.clone());
        }
        if let Some(p) = &o.panel {
            self.paths.panel = Some(p.clone());
        }
        if let Some(p) = &o.outdir {
            self.paths.outdir = Some(p.clone());
        }
        if let Some(f) = o.frequency {
            self.frequency = Some(f);
        }
        if let Some(id) = &o.backend {
            // a flag naming the configured backend keeps its parameters
            if id != self.backend.id() {
                self.backend = BackendSpec::from_id(id).map_err(|e| Error::Config(e.to_string()))?;
            }
        }
        if let Some(h) = o.horizon {
            self.split.horizon = Some(h);
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if o.per_station {
            self.per_station = true;
        }
        Ok(())
    }

    /// Replaces the external backend's command, if that backend is selected.
    pub fn apply_bridge_command(&mut self, command: Option<String>) {
        if let (BackendSpec::External { command: current, .. }, Some(cmd)) = (&mut self.backend, command) {
            *current = cmd;
        }
    }

    pub fn require_frequency(&self) -> Result<Frequency, Error> {
        self.frequency
            .ok_or_else(|| Error::Config("frequency is not set (config field or --frequency)".into()))
    }

    pub fn require_path<'a>(&self, path: &'a Option<PathBuf>, what: &str) -> Result<&'a Path, Error> {
        path.as_deref()
            .ok_or_else(|| Error::Config(format!("no {what} path given (config paths.{what} or --{what})")))
    }

    /// Fills every frequency-dependent default and validates all sections
    /// that do not depend on the data.
    pub fn resolve(&self) -> Result<Self, Error> {
        let frequency = self.require_frequency()?;
        let mut r = self.clone();
        r.temporal = self.temporal.resolved(frequency);
        r.split = self.split.resolved(frequency);
        if let BackendSpec::SeasonalNaive { period: None } = r.backend {
            r.backend = BackendSpec::SeasonalNaive { period: Some(default_period(frequency)) };
        }
        r.temporal.validate()?;
        r.regime.validate()?;
        r.selection.validate()?;
        r.backend.validate()?;
        r.split.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(r)
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            features: FeatureConfig {
                temporal: self.temporal.clone(),
                regime: self.regime.clone(),
                spatial: self.spatial.clone(),
            },
            selection: self.selection.clone(),
            per_station: self.per_station,
        }
    }

    pub fn digest(&self) -> String {
        digest_of(self)
    }

    /// `{"config": ..., "digest": ...}`.
    pub fn snapshot(&self) -> serde_json::Value {
        serde_json::json!({ "config": self, "digest": self.digest() })
    }
}

/// Seasonal-naive period when none is configured.
pub fn default_period(frequency: Frequency) -> usize {
    frequency.default_seasonal_periods()[0].round() as usize
}
