//! Persistence baselines: last value and same-phase value one period back.

use std::collections::{BTreeMap, HashMap};

use super::{Backend, FitState};
use crate::error::ForecastError;
use crate::model::FeatureTable;

#[derive(Debug, Clone)]
pub struct NaiveBackend;

#[derive(Debug, Clone)]
pub struct SeasonalNaiveBackend {
    pub period: usize,
}

/// Observed values per station, keyed by time index. Reconstructed from the
/// training targets: row `(s, t)` carries `x_s(t + horizon)`.
fn trailing_values(train: &FeatureTable) -> Result<HashMap<String, BTreeMap<usize, f64>>, ForecastError> {
    let y = super::training_target(train)?;
    let mut out: HashMap<String, BTreeMap<usize, f64>> = HashMap::new();
    for (key, v) in train.keys().iter().zip(y) {
        out.entry(key.station.clone()).or_default().insert(key.t + train.horizon(), *v);
    }
    Ok(out)
}

impl Backend for NaiveBackend {
    fn id(&self) -> &str {
        "naive"
    }

    fn params(&self) -> serde_json::Value {
        serde_json::json!({})
    }

    fn fit(&self, train: &FeatureTable, _seed: u64) -> Result<Box<dyn FitState>, ForecastError> {
        let last = trailing_values(train)?
            .into_iter()
            .map(|(s, m)| (s, *m.values().next_back().expect("nonempty")))
            .collect();
        Ok(Box::new(NaiveModel { schema: train.schema().to_vec(), last }))
    }
}

#[derive(Debug, Clone)]
pub struct NaiveModel {
    schema: Vec<String>,
    last: HashMap<String, f64>,
}

impl FitState for NaiveModel {
    fn schema(&self) -> &[String] {
        &self.schema
    }

    fn predict_rows(&self, rows: &FeatureTable) -> Result<Vec<f64>, ForecastError> {
        rows.keys()
            .iter()
            .map(|k| {
                self.last
                    .get(&k.station)
                    .copied()
                    .ok_or_else(|| ForecastError::Backend(format!("station {} unseen in training", k.station)))
            })
            .collect()
    }
}

impl Backend for SeasonalNaiveBackend {
    fn id(&self) -> &str {
        "seasonal_naive"
    }

    fn params(&self) -> serde_json::Value {
        serde_json::json!({ "period": self.period })
    }

    fn fit(&self, train: &FeatureTable, _seed: u64) -> Result<Box<dyn FitState>, ForecastError> {
        if self.period == 0 {
            return Err(ForecastError::Config("seasonal period must be positive".into()));
        }
        Ok(Box::new(SeasonalNaiveModel {
            schema: train.schema().to_vec(),
            period: self.period,
            history: trailing_values(train)?,
        }))
    }
}

#[derive(Debug, Clone)]
pub struct SeasonalNaiveModel {
    schema: Vec<String>,
    period: usize,
    history: HashMap<String, BTreeMap<usize, f64>>,
}

impl FitState for SeasonalNaiveModel {
    fn schema(&self) -> &[String] {
        &self.schema
    }

    fn predict_rows(&self, rows: &FeatureTable) -> Result<Vec<f64>, ForecastError> {
        let p = self.period;
        rows.keys()
            .iter()
            .map(|k| {
                let values = self.history.get(&k.station).ok_or_else(|| {
                    ForecastError::Backend(format!("station {} unseen in training", k.station))
                })?;
                let last_t = *values.keys().next_back().expect("nonempty");
                let target_t = k.t + rows.horizon();
                // same phase, at least one period back and not after the end of training
                let back = if target_t > last_t { (target_t - last_t).div_ceil(p) * p } else { p };
                target_t
                    .checked_sub(back)
                    .and_then(|source| values.get(&source).copied())
                    .ok_or_else(|| {
                        ForecastError::Backend(format!(
                            "no training value one season before t = {target_t} for station {}",
                            k.station
                        ))
                    })
            })
            .collect()
    }
}
