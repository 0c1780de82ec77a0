//! k-nearest-neighbors regression over z-scored feature rows.

use serde::{Deserialize, Serialize};

use super::{Backend, FitState, Standardizer};
use crate::error::ForecastError;
use crate::model::FeatureTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnnWeighting {
    Uniform,
    #[default]
    InverseDistance,
}

#[derive(Debug, Clone)]
pub struct KnnBackend {
    pub k: usize,
    pub weighting: KnnWeighting,
}

impl Backend for KnnBackend {
    fn id(&self) -> &str {
        "knn"
    }

    fn params(&self) -> serde_json::Value {
        serde_json::json!({ "k": self.k, "weighting": self.weighting })
    }

    fn fit(&self, train: &FeatureTable, _seed: u64) -> Result<Box<dyn FitState>, ForecastError> {
        if self.k == 0 {
            return Err(ForecastError::Config("knn k must be positive".into()));
        }
        let y = super::training_target(train)?.to_vec();
        let scaler = Standardizer::fit(train);
        let rows = train.rows().iter().map(|r| scaler.transform_row(r)).collect();
        Ok(Box::new(KnnModel {
            schema: train.schema().to_vec(),
            scaler,
            rows,
            y,
            k: self.k,
            weighting: self.weighting,
        }))
    }
}

#[derive(Debug, Clone)]
pub struct KnnModel {
    schema: Vec<String>,
    scaler: Standardizer,
    rows: Vec<Vec<f64>>,
    y: Vec<f64>,
    k: usize,
    weighting: KnnWeighting,
}

impl KnnModel {
    fn predict_one(&self, query: &[f64]) -> f64 {
        let z = self.scaler.transform_row(query);
        let mut dist: Vec<(f64, usize)> = self
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let d2: f64 = r.iter().zip(&z).map(|(a, b)| (a - b) * (a - b)).sum();
                (d2.sqrt(), i)
            })
            .collect();
        dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let nearest = &dist[..self.k.min(dist.len())];

        let exact: Vec<f64> = nearest.iter().filter(|(d, _)| *d == 0.0).map(|&(_, i)| self.y[i]).collect();
        if !exact.is_empty() {
            return exact.iter().sum::<f64>() / exact.len() as f64;
        }
        match self.weighting {
            KnnWeighting::Uniform => {
                nearest.iter().map(|&(_, i)| self.y[i]).sum::<f64>() / nearest.len() as f64
            }
            KnnWeighting::InverseDistance => {
                let (mut num, mut den) = (0.0, 0.0);
                for &(d, i) in nearest {
                    num += self.y[i] / d;
                    den += 1.0 / d;
                }
                num / den
            }
        }
    }
}

impl FitState for KnnModel {
    fn schema(&self) -> &[String] {
        &self.schema
    }

    fn predict_rows(&self, rows: &FeatureTable) -> Result<Vec<f64>, ForecastError> {
        Ok(rows.rows().iter().map(|r| self.predict_one(r)).collect())
    }
}
